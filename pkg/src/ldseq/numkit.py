"""Dense numerics shared by every model: products, activations, init, dropout.

Matrices and vectors are plain float64 numpy arrays. Matrices follow the
"matrix times column vector" convention, so a weight of shape (out, in)
maps an input vector of length ``in`` to one of length ``out``.
"""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError, ShapeError

DTYPE = np.float64

Rng = np.random.Generator


def make_rng(seed: int) -> Rng:
    """Deterministic generator for ``seed``; identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def split_rng(rng: Rng, n: int) -> list[Rng]:
    """Derive ``n`` independent child generators from ``rng``."""
    return list(rng.spawn(n))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    a2 = a if a.ndim == 2 else a.reshape(-1, 1) if a.ndim == 1 else a
    b2 = b if b.ndim == 2 else b.reshape(-1, 1) if b.ndim == 1 else b
    if a2.ndim != 2 or b2.ndim != 2 or a2.shape[1] != b2.shape[0]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a2 @ b2


def softmax(v: np.ndarray) -> np.ndarray:
    """Numerically stable softmax of a 1-d vector (max-subtracted)."""
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0:
        raise ArgumentError("softmax of an empty vector")
    e = np.exp(v - v.max())
    return e / e.sum()


def relu(v):
    return np.maximum(np.asarray(v, dtype=DTYPE), 0.0)


def sigmoid(v):
    v = np.asarray(v, dtype=DTYPE)
    # two-branch form avoids overflow of exp(-v) for large negative v
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def tanh(v):
    return np.tanh(np.asarray(v, dtype=DTYPE))


ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh}


def activation_grad(name: str, out: np.ndarray) -> np.ndarray:
    """Derivative of activation ``name`` expressed through its output."""
    if name == "relu":
        return (out > 0).astype(DTYPE)
    if name == "sigmoid":
        return out * (1.0 - out)
    if name == "tanh":
        return 1.0 - out * out
    raise ArgumentError(f"unknown activation {name!r}")


def xavier_init(rows: int, cols: int, rng: Rng) -> np.ndarray:
    """Uniform Glorot initialisation in [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]."""
    if rows < 1 or cols < 1:
        raise ArgumentError(f"xavier_init needs positive dimensions, got ({rows}, {cols})")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def dropout_mask(length: int, p_drop: float, rng: Rng) -> np.ndarray:
    """Inverted-dropout mask: 0 with probability ``p_drop``, else 1/(1-p_drop)."""
    if not 0.0 <= p_drop < 1.0:
        raise ArgumentError(f"dropout probability must be in [0, 1), got {p_drop}")
    if p_drop == 0.0:
        return np.ones(length, dtype=DTYPE)
    keep = rng.random(length) >= p_drop
    return keep.astype(DTYPE) / (1.0 - p_drop)
