"""Central finite-difference checks of the hand-written gradients.

The reference objective is rebuilt from the public forward functions in
``nets`` only. Recurrent inputs (previous hidden/cell state, label context)
are recorded once at the unperturbed parameters and held fixed while
perturbing, which is exactly the objective the trainer differentiates.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .corpus import Encoded
from .nets import ModelParams, NetConfig, Sizes, init_params, StepState, assemble_word_input, initial_state, output_layer, step, is_bias

DENOM_FLOOR = 1e-6


def record_contexts(params: ModelParams, sent: Encoded, context=None):
    """Recurrent state entering each position during a pass fed with ``context`` (gold by default)."""
    context = sent.labels if context is None else context
    state = initial_state(params)
    states = []
    for t in range(len(sent)):
        states.append(StepState(state.h.copy(), None if state.c is None else state.c.copy(),
                                deque(state.labels, maxlen=state.labels.maxlen),
                                deque([None] * len(state.labels), maxlen=state.labels.maxlen)))
        I_t = assemble_word_input(sent, t, params)
        _, state = step(I_t, state, params)
        state.push_label(int(context[t]), None)
    return states


def frozen_objective(params: ModelParams, sent: Encoded, states, lam: float = 0.0) -> float:
    total = 0.0
    for t, st in enumerate(states):
        I_t = assemble_word_input(sent, t, params)
        h, _ = step(I_t, st, params)
        y = output_layer(h, params)
        total -= np.log(y[sent.labels[t]])
    pen = sum(np.sum(v * v) for k, v in params.tensors.items() if not is_bias(k))
    return total / len(sent) + 0.5 * lam * pen


def numeric_gradients(params: ModelParams, sent: Encoded, lam: float = 0.0, eps: float = 1e-5):
    states = record_contexts(params, sent)
    grads = {}
    for name, theta in params.tensors.items():
        g = np.zeros_like(theta)
        it = np.nditer(theta, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = theta[idx]
            theta[idx] = orig + eps
            up = frozen_objective(params, sent, states, lam)
            theta[idx] = orig - eps
            down = frozen_objective(params, sent, states, lam)
            theta[idx] = orig
            g[idx] = (up - down) / (2 * eps)
        grads[name] = g
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(|a|, |n|, 1e-6) over entries."""
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), DENOM_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(params: ModelParams, sent: Encoded, lam: float = 0.0, eps: float = 1e-5) -> dict:
    """Per-tensor max relative error between backprop and finite differences."""
    from .train import backward
    analytic, _ = backward(sent, params, lam)
    numeric = numeric_gradients(params, sent, lam, eps)
    return {k: relative_error(analytic[k], numeric[k]) for k in params.names()}


def toy_instance(arch: str, rng: np.random.Generator, hidden: int = 8, embed: int = 8,
                 n_tokens: int = 6, n_labels: int = 4, d_l: int = 2, rich=None):
    """Small random model and sentence for gradient checks.

    ``rich`` (default: LD-RNN only) turns on class embeddings and the character
    convolution so their gradients are covered too.
    """
    rich = arch == "ldrnn" if rich is None else rich
    config = NetConfig(arch=arch, embed=embed, hidden=hidden, d_w=1, d_l=d_l, d_c=1,
                       conv_size=5, char_dim=3, use_classes=rich, use_charconv=rich)
    sizes = Sizes(words=9, labels=n_labels, classes=5 if rich else 0, chars=7 if rich else 0)
    params = init_params(config, sizes, rng)
    # biases away from zero so their gradients are exercised at a generic point
    for name in params.names():
        if is_bias(name):
            params.tensors[name][:] = rng.uniform(-0.1, 0.1, size=params[name].shape)
    words = rng.integers(0, sizes.words, size=n_tokens)
    labels = rng.integers(0, n_labels, size=n_tokens)
    classes = rng.integers(0, sizes.classes, size=n_tokens) if rich else None
    chars = [rng.integers(0, sizes.chars, size=int(rng.integers(1, 6))) for _ in range(n_tokens)] if rich else []
    sent = Encoded(words, labels, [str(x) for x in labels], classes, chars)
    return params, sent
