"""Greedy left-to-right decoding with label feedback, and bidirectional combination."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import Encoded
from .errors import ConfigError, ShapeError
from .nets import ModelParams, assemble_word_input, initial_state, output_layer, step


@dataclass
class BidirModel:
    fwd: ModelParams
    bwd: ModelParams

    def __post_init__(self):
        if self.fwd.sizes.labels != self.bwd.sizes.labels:
            raise ConfigError("forward and backward models have different label sets")

    def copy(self) -> "BidirModel":
        return BidirModel(self.fwd.copy(), self.bwd.copy())


def _predict_forward(sent: Encoded, params: ModelParams, forced: Optional[Sequence[int]]):
    state = initial_state(params)
    T = len(sent)
    labels = np.empty(T, dtype=np.int64)
    dists = np.empty((T, params.sizes.labels))
    for t in range(T):
        I_t = assemble_word_input(sent, t, params)
        h, state = step(I_t, state, params)
        y = output_layer(h, params)
        dists[t] = y
        labels[t] = int(np.argmax(y))   # ties -> lowest index
        if forced is None:
            state.push_label(labels[t], y)
        else:
            state.push_label(forced[t], None)
    return labels, dists


def predict(sent: Encoded, params: ModelParams, direction: str = "forward",
            forced: Optional[Sequence[int]] = None):
    """Greedy decoding; returns (label indices, distributions) in sentence order.

    A backward model reads the sentence right to left; its outputs are flipped
    back so position t of the result always refers to token t. ``forced``
    replaces the fed-back predictions with the given labels (sentence order).
    """
    if direction == "forward":
        return _predict_forward(sent, params, forced)
    if direction != "backward":
        raise ConfigError(f"unknown direction {direction!r}")
    rforced = None if forced is None else list(forced)[::-1]
    labels, dists = _predict_forward(sent.reversed(), params, rforced)
    return labels[::-1].copy(), dists[::-1].copy()


def combine_bidirectional(dist_f, dist_b) -> np.ndarray:
    """Elementwise geometric mean sqrt(y_f * y_b), left unnormalised."""
    dist_f = np.asarray(dist_f, dtype=np.float64)
    dist_b = np.asarray(dist_b, dtype=np.float64)
    if dist_f.shape != dist_b.shape:
        raise ShapeError(f"cannot combine distributions of shapes {dist_f.shape} and {dist_b.shape}")
    return np.sqrt(dist_f * dist_b)


def normalized(combined: np.ndarray) -> np.ndarray:
    """Renormalise a combined distribution (rows, when 2-d) to sum to one."""
    combined = np.asarray(combined, dtype=np.float64)
    z = combined.sum(axis=-1, keepdims=True)
    return np.divide(combined, z, out=np.zeros_like(combined), where=z > 0)


def align_backward(dists_b: np.ndarray) -> np.ndarray:
    """Reorder distributions produced in right-to-left order to sentence order."""
    return np.asarray(dists_b)[::-1]


def predict_bidirectional(sent: Encoded, model: BidirModel, return_dists: bool = False):
    """Run both directions independently, combine per position, take the argmax."""
    _, yf = predict(sent, model.fwd, "forward")
    _, yb = predict(sent, model.bwd, "backward")
    combined = combine_bidirectional(yf, yb)
    labels = combined.argmax(axis=1)
    if return_dists:
        return labels, combined
    return labels
