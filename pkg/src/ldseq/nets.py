"""Forward computation for the Elman, Jordan, LD-RNN, LSTM and GRU taggers.

All five share the same input assembly (a window of word embeddings, optionally
class embeddings and a character-convolution feature for the centre word) and
the same softmax output layer. They differ only in how the hidden layer h_t is
computed:

    elman   h_t = act(R h_{t-1} + H x_t + b_H)
    jordan  h_t = act(R [y_{t-d_l} .. y_{t-1}] + H x_t + b_H)
    ldrnn   h_t = act(H [x_t  E_l(y_{t-d_l}) .. E_l(y_{t-1})] + b_H)
    lstm    gates sigmoid, candidate tanh, h_t = o * tanh(c_t)
    gru     h_t = (1 - z) * h_{t-1} + z * tanh(W (r * h_{t-1}) + U x_t + b_h)
"""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import numkit
from .corpus import BOL_ID, BOS_ID, EOS_ID, PAD_CHAR_ID, Encoded
from .errors import BoundsError, ConfigError, ShapeError

ARCHS = ("elman", "jordan", "ldrnn", "lstm", "gru")
LABEL_FED = ("jordan", "ldrnn")
GATES = {"lstm": ("f", "i", "c", "o"), "gru": ("z", "r", "h")}


@dataclass(frozen=True)
class NetConfig:
    arch: str = "ldrnn"
    embed: int = 200          # N, shared by words, classes and labels
    hidden: int = 200         # |H|
    d_w: int = 1              # word half-window
    d_l: int = 5              # label context length
    d_c: int = 0              # character half-window
    conv_size: int = 50       # |C|
    char_dim: int = 30
    use_classes: bool = False
    use_charconv: bool = False
    activation: str = "relu"
    jordan_context: str = "onehot"   # or "prob"

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown architecture {self.arch!r}; expected one of {ARCHS}")
        if self.activation not in numkit.ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.jordan_context not in ("onehot", "prob"):
            raise ConfigError(f"jordan_context must be 'onehot' or 'prob', got {self.jordan_context!r}")
        if self.d_w < 0 or self.d_c < 0:
            raise ConfigError("window sizes must be >= 0")
        if self.hidden < 1 or self.embed < 1:
            raise ConfigError("layer sizes must be >= 1")
        if self.arch in LABEL_FED and self.d_l < 1:
            raise ConfigError(f"{self.arch} needs d_l >= 1")
        if self.use_charconv and (self.conv_size < 1 or self.char_dim < 1):
            raise ConfigError("character convolution needs conv_size and char_dim >= 1")

    @property
    def window(self) -> int:
        return 2 * self.d_w + 1

    @property
    def label_context(self) -> int:
        """Number of previous labels the network reads (0 for label-blind archs)."""
        return self.d_l if self.arch in LABEL_FED else 0

    def word_input_dim(self) -> int:
        per_slot = self.embed * (2 if self.use_classes else 1)
        return self.window * per_slot + (self.conv_size if self.use_charconv else 0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(**d)


@dataclass(frozen=True)
class Sizes:
    words: int
    labels: int
    classes: int = 0
    chars: int = 0


def param_shapes(config: NetConfig, sizes: Sizes) -> dict[str, tuple[int, int]]:
    """Name -> shape of every tensor the configuration instantiates, in a fixed order.

    Biases are stored as (n, 1) matrices so every tensor is two-dimensional.
    """
    N, Hd, O = config.embed, config.hidden, sizes.labels
    x_dim = config.word_input_dim()
    shapes: dict[str, tuple[int, int]] = {"E_w": (sizes.words, N)}
    if config.use_classes:
        if sizes.classes < 1:
            raise ConfigError("use_classes set but the corpus has no class column")
        shapes["E_class"] = (sizes.classes, N)
    if config.use_charconv:
        shapes["E_ch"] = (sizes.chars, config.char_dim)
        shapes["W_ch"] = (config.conv_size, (2 * config.d_c + 1) * config.char_dim)
        shapes["b_ch"] = (config.conv_size, 1)
    arch = config.arch
    if arch == "elman":
        shapes.update(R=(Hd, Hd), H=(Hd, x_dim), b_H=(Hd, 1))
    elif arch == "jordan":
        shapes.update(R=(Hd, config.d_l * O), H=(Hd, x_dim), b_H=(Hd, 1))
    elif arch == "ldrnn":
        shapes["E_l"] = (O, N)
        shapes.update(H=(Hd, x_dim + config.d_l * N), b_H=(Hd, 1))
    else:
        for g in GATES[arch]:
            w = "W" if (arch == "gru" and g == "h") else f"W_{g}"
            u = "U" if (arch == "gru" and g == "h") else f"U_{g}"
            shapes[w] = (Hd, Hd)
            shapes[u] = (Hd, x_dim)
            shapes[f"b_{g}"] = (Hd, 1)
    shapes["O"] = (O, Hd)
    shapes["b_O"] = (O, 1)
    return shapes


def is_bias(name: str) -> bool:
    return name.startswith("b_")


class ModelParams:
    """Named parameter tensors plus the configuration and vocabulary sizes they were built for."""

    def __init__(self, config: NetConfig, sizes: Sizes, tensors: dict[str, np.ndarray]):
        expected = param_shapes(config, sizes)
        if list(tensors) != list(expected):
            missing = set(expected) ^ set(tensors)
            if missing:
                raise ConfigError(f"parameter set mismatch for {config.arch}: {sorted(missing)}")
            tensors = {k: tensors[k] for k in expected}
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise ShapeError(f"{name} has shape {tensors[name].shape}, expected {shape}")
        self.config = config
        self.sizes = sizes
        self.tensors = tensors

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def names(self):
        return list(self.tensors)

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, self.sizes, {k: v.copy() for k, v in self.tensors.items()})

    def n_entries(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def allclose(self, other: "ModelParams") -> bool:
        return self.names() == other.names() and all(
            np.array_equal(self[k], other[k]) for k in self.names())


def init_params(config: NetConfig, sizes: Sizes, rng: numkit.Rng,
                pretrained: Optional[dict[str, np.ndarray]] = None) -> ModelParams:
    """Xavier-initialised weights, zero biases; ``pretrained`` overrides named tensors."""
    tensors = {}
    for name, (r, c) in param_shapes(config, sizes).items():
        tensors[name] = np.zeros((r, c)) if is_bias(name) else numkit.xavier_init(r, c, rng)
    for name, value in (pretrained or {}).items():
        if name not in tensors:
            continue
        value = np.asarray(value, dtype=numkit.DTYPE)
        if value.shape != tensors[name].shape:
            raise ShapeError(f"pretrained {name} has shape {value.shape}, expected {tensors[name].shape}")
        tensors[name] = value.copy()
    return ModelParams(config, sizes, tensors)


def lookup(table: np.ndarray, index: int) -> np.ndarray:
    if not 0 <= index < table.shape[0]:
        raise BoundsError(f"index {index} outside table of {table.shape[0]} rows")
    return table[index]


# --- inputs -----------------------------------------------------------------

def window_ids(ids: np.ndarray, t: int, d: int, left: int, right: int) -> np.ndarray:
    """Indices of positions t-d..t+d with out-of-range slots set to left/right pads."""
    n = len(ids)
    out = np.empty(2 * d + 1, dtype=np.int64)
    for j, p in enumerate(range(t - d, t + d + 1)):
        out[j] = left if p < 0 else right if p >= n else ids[p]
    return out


@dataclass
class CharCache:
    windows: np.ndarray      # (|w|, (2d_c+1)) char ids
    stacked: np.ndarray      # (|w|, (2d_c+1)*char_dim) concatenated embeddings
    argmax: np.ndarray       # (|C|,) winning position per output unit


def char_conv(word_chars, params: ModelParams, with_cache: bool = False):
    """Max-pooled character convolution of one word; length |C| whatever the word length."""
    cfg = params.config
    word_chars = np.asarray(word_chars, dtype=np.int64)
    if len(word_chars) == 0:
        out = np.zeros(cfg.conv_size)
        return (out, None) if with_cache else out
    E, W, b = params["E_ch"], params["W_ch"], params["b_ch"][:, 0]
    windows = np.stack([window_ids(word_chars, i, cfg.d_c, PAD_CHAR_ID, PAD_CHAR_ID)
                        for i in range(len(word_chars))])
    stacked = E[windows].reshape(len(word_chars), -1)
    conv = stacked @ W.T + b                 # (|w|, |C|)
    arg = conv.argmax(axis=0)
    out = conv[arg, np.arange(cfg.conv_size)]
    if with_cache:
        return out, CharCache(windows, stacked, arg)
    return out


@dataclass
class WordInput:
    x: np.ndarray                     # I_t
    word_ids: np.ndarray
    class_ids: Optional[np.ndarray]
    char_cache: Optional[CharCache]


def assemble_word_input(sent: Encoded, t: int, params: ModelParams, with_cache: bool = False):
    """I_t: window embeddings (each followed by its class embedding) then Char_w of the centre word."""
    cfg = params.config
    wids = window_ids(sent.words, t, cfg.d_w, BOS_ID, EOS_ID)
    parts = []
    cids = None
    if cfg.use_classes:
        if sent.classes is None:
            raise ConfigError("model uses word classes but the sentence has none")
        cids = window_ids(sent.classes, t, cfg.d_w, BOS_ID, EOS_ID)
        ew, ec = params["E_w"][wids], params["E_class"][cids]
        parts.append(np.concatenate([ew, ec], axis=1).ravel())
    else:
        parts.append(params["E_w"][wids].ravel())
    cache = None
    if cfg.use_charconv:
        chars = sent.chars[t] if sent.chars else np.zeros(0, dtype=np.int64)
        feat, cache = char_conv(chars, params, with_cache=True)
        parts.append(feat)
    x = np.concatenate(parts)
    if with_cache:
        return WordInput(x, wids, cids, cache)
    return x


@dataclass
class StepState:
    """Recurrent context carried from one position to the next."""

    h: np.ndarray
    c: Optional[np.ndarray] = None
    labels: deque = field(default_factory=deque)
    dists: deque = field(default_factory=deque)

    def push_label(self, index: int, dist: Optional[np.ndarray] = None):
        if self.labels.maxlen:
            self.labels.append(int(index))
            self.dists.append(dist)


def initial_state(params: ModelParams) -> StepState:
    cfg = params.config
    k = cfg.label_context
    return StepState(
        h=np.zeros(cfg.hidden),
        c=np.zeros(cfg.hidden) if cfg.arch == "lstm" else None,
        labels=deque([BOL_ID] * k, maxlen=k),
        dists=deque([None] * k, maxlen=k),
    )


def assemble_label_input(state: StepState, params: ModelParams) -> np.ndarray:
    """L_t: embeddings of the d_l previous labels, oldest first."""
    return params["E_l"][list(state.labels)].ravel()


def jordan_context(state: StepState, params: ModelParams) -> np.ndarray:
    n = params.sizes.labels
    parts = []
    for idx, dist in zip(state.labels, state.dists):
        if params.config.jordan_context == "prob" and dist is not None:
            parts.append(np.asarray(dist, dtype=numkit.DTYPE))
        else:
            v = np.zeros(n)
            v[idx] = 1.0
            parts.append(v)
    return np.concatenate(parts)


# --- hidden layers ------------------------------------------------------------

def _bias(params, name):
    return params[name][:, 0]


def hidden_forward(x: np.ndarray, state: StepState, params: ModelParams):
    """Compute h_t for the configured architecture.

    ``x`` is the (possibly dropped-out) network input: I_t, or [I_t L_t] for
    LD-RNN. Returns (h_t, c_t, cache) where cache holds what backprop needs.
    """
    cfg = params.config
    act = numkit.ACTIVATIONS[cfg.activation]
    arch = cfg.arch
    if arch in ("elman", "jordan", "ldrnn"):
        a = params["H"] @ x + _bias(params, "b_H")
        ctx = None
        if arch == "elman":
            ctx = state.h
            a = a + params["R"] @ ctx
        elif arch == "jordan":
            ctx = jordan_context(state, params)
            a = a + params["R"] @ ctx
        h = act(a)
        return h, None, {"ctx": ctx}
    h_prev = state.h
    if arch == "lstm":
        pre = {g: params[f"W_{g}"] @ h_prev + params[f"U_{g}"] @ x + _bias(params, f"b_{g}")
               for g in GATES["lstm"]}
        f, i, o = numkit.sigmoid(pre["f"]), numkit.sigmoid(pre["i"]), numkit.sigmoid(pre["o"])
        chat = numkit.tanh(pre["c"])
        c = f * state.c + i * chat
        tc = numkit.tanh(c)
        h = o * tc
        return h, c, {"f": f, "i": i, "o": o, "chat": chat, "tc": tc, "h_prev": h_prev, "c_prev": state.c}
    # gru
    z = numkit.sigmoid(params["W_z"] @ h_prev + params["U_z"] @ x + _bias(params, "b_z"))
    r = numkit.sigmoid(params["W_r"] @ h_prev + params["U_r"] @ x + _bias(params, "b_r"))
    rh = r * h_prev
    hhat = numkit.tanh(params["W"] @ rh + params["U"] @ x + _bias(params, "b_h"))
    h = (1.0 - z) * h_prev + z * hhat
    return h, None, {"z": z, "r": r, "hhat": hhat, "rh": rh, "h_prev": h_prev}


def _advance(state: StepState, h, c) -> StepState:
    return replace(state, h=h, c=c, labels=deque(state.labels, maxlen=state.labels.maxlen),
                   dists=deque(state.dists, maxlen=state.dists.maxlen))


def _check_arch(params, arch):
    if params.config.arch != arch:
        raise ConfigError(f"{arch}_step called with a {params.config.arch} model")


def elman_step(I_t, state, params):
    _check_arch(params, "elman")
    h, c, _ = hidden_forward(I_t, state, params)
    return h, _advance(state, h, c)


def jordan_step(I_t, state, params):
    _check_arch(params, "jordan")
    h, c, _ = hidden_forward(I_t, state, params)
    return h, _advance(state, h, c)


def ldrnn_step(I_t, state, params):
    _check_arch(params, "ldrnn")
    x = np.concatenate([I_t, assemble_label_input(state, params)])
    h, c, _ = hidden_forward(x, state, params)
    return h, _advance(state, h, c)


def lstm_step(I_t, state, params):
    _check_arch(params, "lstm")
    h, c, _ = hidden_forward(I_t, state, params)
    return h, _advance(state, h, c)


def gru_step(I_t, state, params):
    _check_arch(params, "gru")
    h, c, _ = hidden_forward(I_t, state, params)
    return h, _advance(state, h, c)


STEPS = {"elman": elman_step, "jordan": jordan_step, "ldrnn": ldrnn_step,
         "lstm": lstm_step, "gru": gru_step}


def step(I_t, state, params):
    return STEPS[params.config.arch](I_t, state, params)


def output_logits(h: np.ndarray, params: ModelParams) -> np.ndarray:
    return params["O"] @ h + _bias(params, "b_O")


def output_layer(h: np.ndarray, params: ModelParams) -> np.ndarray:
    """y_t = softmax(O h_t + b_O) over the label vocabulary."""
    return numkit.softmax(output_logits(h, params))


# --- parameter counting -----------------------------------------------------------

def count_params(config: NetConfig, n_labels: int, n_words: int = 0,
                 n_classes: int = 0, n_chars: int = 0) -> dict:
    """Parameter counts by tensor, grouped the way the complexity analysis groups them.

    ``hidden_layer`` covers the recurrent/hidden matrices (R and H, or the
    gate matrices W_*, U_*) plus E_l for LD-RNN, without biases. For a
    Jordan network the recurrent matrix reads d_l label vectors, so its term
    is d_l*|O|*|H| (|O|*|H| when d_l = 1).
    """
    sizes = Sizes(max(n_words, 1), n_labels, max(n_classes, 1), max(n_chars, 1))
    shapes = param_shapes(config, sizes)
    per_tensor = {k: r * c for k, (r, c) in shapes.items()}
    hidden_names = [k for k in shapes if k in ("R", "H", "E_l", "W", "U")
                    or (k[:2] in ("W_", "U_") and k != "W_ch")]
    hidden = sum(per_tensor[k] for k in hidden_names)
    biases = sum(v for k, v in per_tensor.items() if is_bias(k))
    return {
        "per_tensor": per_tensor,
        "hidden_layer": hidden,
        "biases": biases,
        "total_weights": sum(v for k, v in per_tensor.items() if not is_bias(k)),
        "total": sum(per_tensor.values()),
    }
