"""Loss, hand-derived gradients, SGD with momentum and the training loops.

Recurrent inputs are treated as constants when differentiating: the label
context (gold labels under teacher forcing, or the model's own argmax
predictions) and, for Elman/LSTM/GRU, the previous hidden and cell state.
There is no backpropagation through time; each position is a feed-forward
network whose context is read explicitly from the previous step.

The per-sentence objective is the mean over positions of
``-log y_t[gold] + lambda/2 * ||Theta||^2`` where Theta holds every weight
matrix and embedding table (biases excluded).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import numkit
from .corpus import Encoded
from .errors import ConfigError, DataError
from .nets import (ModelParams, NetConfig, Sizes, StepState, assemble_label_input,
                   assemble_word_input, hidden_forward, init_params, initial_state,
                   is_bias, output_logits, _advance)

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.5
    epochs: int = 30
    momentum: float = 0.3
    l2: float = 0.01
    p_drop_hidden: float = 0.5
    p_drop_embed: float = 0.2
    patience: int = 5
    seed: int = 1
    teacher_forcing: bool = True

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not (0 <= self.p_drop_hidden < 1 and 0 <= self.p_drop_embed < 1):
            raise ConfigError("dropout probabilities must be in [0, 1)")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")

    def to_dict(self):
        return asdict(self)


BIDIR_DEFAULTS = dict(epochs=8, l2=3e-4)


def loss(y: np.ndarray, gold: int, params: Optional[ModelParams] = None, lam: float = 0.0) -> float:
    """Cross-entropy of one position plus the L2 penalty (lambda/2)*||Theta||^2.

    ``y[gold]`` is floored at 1e-300 before the log.
    """
    ce = -np.log(max(float(y[gold]), PROB_FLOOR))
    if params is not None and lam:
        ce += 0.5 * lam * l2_norm_sq(params)
    return ce


def l2_norm_sq(params: ModelParams) -> float:
    return float(sum(np.sum(v * v) for k, v in params.tensors.items() if not is_bias(k)))


# --- forward with cache -------------------------------------------------------

@dataclass
class StepCache:
    word_input: object
    x: np.ndarray            # network input after embedding dropout
    mask_e: Optional[np.ndarray]
    ctx_labels: list
    h: np.ndarray
    hidden_cache: dict
    hd: np.ndarray           # h after hidden dropout
    mask_h: Optional[np.ndarray]
    logits: np.ndarray
    y: np.ndarray


def forward_sentence(params: ModelParams, sent: Encoded, context: Optional[Sequence[int]] = None,
                     rng: Optional[numkit.Rng] = None, p_drop_hidden: float = 0.0,
                     p_drop_embed: float = 0.0) -> list[StepCache]:
    """Left-to-right pass keeping everything backprop needs.

    ``context`` supplies the labels pushed into the label context after each
    position (gold labels for teacher forcing); ``None`` feeds argmax predictions.
    Dropout is applied only when ``rng`` is given.
    """
    cfg = params.config
    state = initial_state(params)
    steps = []
    for t in range(len(sent)):
        wi = assemble_word_input(sent, t, params, with_cache=True)
        x = wi.x
        ctx_labels = list(state.labels)
        if cfg.arch == "ldrnn":
            x = np.concatenate([x, assemble_label_input(state, params)])
        mask_e = mask_h = None
        if rng is not None and p_drop_embed > 0:
            mask_e = numkit.dropout_mask(len(x), p_drop_embed, rng)
            x = x * mask_e
        h, c, hc = hidden_forward(x, state, params)
        hd = h
        if rng is not None and p_drop_hidden > 0:
            mask_h = numkit.dropout_mask(len(h), p_drop_hidden, rng)
            hd = h * mask_h
        logits = output_logits(hd, params)
        y = numkit.softmax(logits)
        steps.append(StepCache(wi, x, mask_e, ctx_labels, h, hc, hd, mask_h, logits, y))
        state = _advance(state, h, c)
        if context is None:
            state.push_label(int(np.argmax(y)), y)
        else:
            state.push_label(int(context[t]), None)
    return steps


# --- backward -----------------------------------------------------------------

def zeros_like(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.tensors.items()}


def _hidden_backward(dh, st: StepCache, params: ModelParams, g) -> np.ndarray:
    """Accumulate hidden-layer parameter gradients; return d(loss)/d(x)."""
    cfg = params.config
    arch = cfg.arch
    hc = st.hidden_cache
    if arch in ("elman", "jordan", "ldrnn"):
        da = dh * numkit.activation_grad(cfg.activation, st.h)
        g["H"] += np.outer(da, st.x)
        g["b_H"][:, 0] += da
        if arch != "ldrnn":
            g["R"] += np.outer(da, hc["ctx"])
        return params["H"].T @ da
    if arch == "lstm":
        f, i, o, chat, tc = hc["f"], hc["i"], hc["o"], hc["chat"], hc["tc"]
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc)
        pre = {
            "f": dc * hc["c_prev"] * f * (1.0 - f),
            "i": dc * chat * i * (1.0 - i),
            "c": dc * i * (1.0 - chat * chat),
            "o": do * o * (1.0 - o),
        }
        dx = np.zeros_like(st.x)
        for gname, da in pre.items():
            g[f"W_{gname}"] += np.outer(da, hc["h_prev"])
            g[f"U_{gname}"] += np.outer(da, st.x)
            g[f"b_{gname}"][:, 0] += da
            dx += params[f"U_{gname}"].T @ da
        return dx
    # gru
    z, r, hhat, h_prev = hc["z"], hc["r"], hc["hhat"], hc["h_prev"]
    dhhat = dh * z
    ah = dhhat * (1.0 - hhat * hhat)
    g["W"] += np.outer(ah, hc["rh"])
    g["U"] += np.outer(ah, st.x)
    g["b_h"][:, 0] += ah
    dr = (params["W"].T @ ah) * h_prev
    ar = dr * r * (1.0 - r)
    az = dh * (hhat - h_prev) * z * (1.0 - z)
    g["W_r"] += np.outer(ar, h_prev)
    g["U_r"] += np.outer(ar, st.x)
    g["b_r"][:, 0] += ar
    g["W_z"] += np.outer(az, h_prev)
    g["U_z"] += np.outer(az, st.x)
    g["b_z"][:, 0] += az
    return params["U"].T @ ah + params["U_r"].T @ ar + params["U_z"].T @ az


def _input_backward(dx, st: StepCache, params: ModelParams, g):
    """Scatter d(loss)/d(x) into the embedding tables and the char convolution."""
    cfg = params.config
    N = cfg.embed
    slot = 2 * N if cfg.use_classes else N
    off = cfg.window * slot
    dwin = dx[:off].reshape(cfg.window, slot)
    wi = st.word_input
    np.add.at(g["E_w"], wi.word_ids, dwin[:, :N])
    if cfg.use_classes:
        np.add.at(g["E_class"], wi.class_ids, dwin[:, N:])
    if cfg.use_charconv:
        dchar = dx[off:off + cfg.conv_size]
        off += cfg.conv_size
        cc = wi.char_cache
        if cc is not None:
            g["W_ch"] += dchar[:, None] * cc.stacked[cc.argmax]
            g["b_ch"][:, 0] += dchar
            dstack = np.zeros_like(cc.stacked)
            np.add.at(dstack, cc.argmax, dchar[:, None] * params["W_ch"])
            dstack = dstack.reshape(cc.windows.shape[0], cc.windows.shape[1], cfg.char_dim)
            np.add.at(g["E_ch"], cc.windows.ravel(), dstack.reshape(-1, cfg.char_dim))
    if cfg.arch == "ldrnn":
        dl = dx[off:].reshape(cfg.d_l, N)
        np.add.at(g["E_l"], st.ctx_labels, dl)


def backprop(params: ModelParams, steps: Sequence[StepCache], dlogits: Sequence[np.ndarray],
             grads: Optional[dict] = None) -> dict[str, np.ndarray]:
    """Gradients of the objective given d(objective)/d(logits) at every position."""
    g = zeros_like(params) if grads is None else grads
    O = params["O"]
    for st, dz in zip(steps, dlogits):
        g["O"] += np.outer(dz, st.hd)
        g["b_O"][:, 0] += dz
        dh = O.T @ dz
        if st.mask_h is not None:
            dh = dh * st.mask_h
        dx = _hidden_backward(dh, st, params, g)
        if st.mask_e is not None:
            dx = dx * st.mask_e
        _input_backward(dx, st, params, g)
    return g


def add_l2(params: ModelParams, grads: dict, lam: float) -> float:
    """Add lambda*theta to the gradients of weights; return the penalty value."""
    if not lam:
        return 0.0
    pen = 0.0
    for k, v in params.tensors.items():
        if not is_bias(k):
            grads[k] += lam * v
            pen += float(np.sum(v * v))
    return 0.5 * lam * pen


def backward(sent: Encoded, params: ModelParams, lam: float = 0.0,
             context: Optional[Sequence[int]] = None, rng: Optional[numkit.Rng] = None,
             p_drop_hidden: float = 0.0, p_drop_embed: float = 0.0):
    """Gradients and value of the per-sentence objective.

    Returns ``(grads, loss)``. ``context`` defaults to the gold labels.
    """
    if context is None:
        context = sent.labels
    steps = forward_sentence(params, sent, context, rng, p_drop_hidden, p_drop_embed)
    T = len(sent)
    dlogits = []
    total = 0.0
    for st, gold in zip(steps, sent.labels):
        d = st.y.copy()
        d[gold] -= 1.0
        dlogits.append(d / T)
        total += -np.log(max(st.y[gold], PROB_FLOOR))
    grads = backprop(params, steps, dlogits)
    total = total / T + add_l2(params, grads, lam)
    return grads, total


# --- optimisation -------------------------------------------------------------

def sgd_step(params: ModelParams, grads: dict, velocity: dict, lr: float, momentum: float) -> ModelParams:
    """In place: v <- momentum*v - lr*g; theta <- theta + v."""
    for k, theta in params.tensors.items():
        v = velocity.get(k)
        if v is None:
            v = velocity[k] = np.zeros_like(theta)
        v *= momentum
        v -= lr * grads[k]
        theta += v
    return params


def lr_schedule(lr0: float, epochs: int, epoch: int) -> float:
    """Linear decay by lr0/epochs per epoch; ``epoch`` counts from 0."""
    if not 0 <= epoch < epochs:
        raise ValueError(f"epoch {epoch} outside [0, {epochs})")
    return lr0 - epoch * (lr0 / epochs)


class EarlyStopping:
    """Tracks the best score (first epoch wins ties) and a copy of its parameters."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_score = -np.inf
        self.best_epoch = None
        self.best_state = None
        self.bad_epochs = 0

    def update(self, epoch: int, score: float, state) -> bool:
        """Record one epoch; return True when training should stop."""
        if score > self.best_score:
            self.best_score = score
            self.best_epoch = epoch
            self.best_state = state.copy() if hasattr(state, "copy") else state
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss: float
    dev_acc: float

    def line(self) -> str:
        return f"epoch={self.epoch} lr={self.lr:.6g} loss={self.loss:.6f} dev_acc={self.dev_acc:.6f}"


@dataclass
class History:
    records: list = field(default_factory=list)
    best_epoch: Optional[int] = None
    stopped_early: bool = False

    @property
    def dev_scores(self):
        return [r.dev_acc for r in self.records]


def _epoch_rng(seed: int, *tags: int) -> numkit.Rng:
    return np.random.default_rng([int(seed), *tags])


def _accuracy(pairs) -> float:
    right = total = 0
    for gold, pred in pairs:
        right += int(np.sum(np.asarray(gold) == np.asarray(pred)))
        total += len(gold)
    return right / total if total else 0.0


def dev_accuracy(params: ModelParams, sentences: Sequence[Encoded], direction: str = "forward") -> float:
    from .decode import predict
    return _accuracy((s.labels, predict(s, params, direction=direction)[0]) for s in sentences)


def train_model(train: Sequence[Encoded], dev: Sequence[Encoded], net_config: NetConfig,
                train_config: TrainConfig, sizes: Sizes, direction: str = "forward",
                pretrained: Optional[dict] = None, init: Optional[ModelParams] = None,
                dev_scorer: Optional[Callable[[ModelParams, int], float]] = None,
                on_epoch: Optional[Callable[[EpochRecord], None]] = None):
    """Train one directional tagger with per-sentence SGD and early stopping.

    Returns ``(best_params, history)``. ``dev_scorer(params, epoch)`` replaces
    the dev token accuracy when given.
    """
    if not train:
        raise DataError("empty training corpus")
    if direction not in ("forward", "backward"):
        raise ConfigError(f"direction must be 'forward' or 'backward', got {direction!r}")
    tc = train_config
    params = init.copy() if init is not None else init_params(
        net_config, sizes, _epoch_rng(tc.seed, 0, int(direction == "backward")), pretrained)
    data = [s.reversed() for s in train] if direction == "backward" else list(train)
    dev_set = list(dev) if dev else list(train)
    if dev_scorer is None:
        def dev_scorer(p, _epoch):
            return dev_accuracy(p, dev_set, direction)

    velocity: dict = {}
    stopper = EarlyStopping(tc.patience)
    history = History()
    for e in range(tc.epochs):
        lr = lr_schedule(tc.lr0, tc.epochs, e)
        order = _epoch_rng(tc.seed, 1, e).permutation(len(data))
        drop_rng = _epoch_rng(tc.seed, 2, e)
        total = 0.0
        for idx in order:
            sent = data[idx]
            context = sent.labels if tc.teacher_forcing else None
            grads, value = _sentence_grads(params, sent, tc, context, drop_rng)
            sgd_step(params, grads, velocity, lr, tc.momentum)
            total += value
        rec = EpochRecord(e + 1, lr, total / len(data), float(dev_scorer(params, e + 1)))
        history.records.append(rec)
        log.info(rec.line())
        if on_epoch is not None:
            on_epoch(rec)
        if stopper.update(e + 1, rec.dev_acc, params):
            history.stopped_early = e + 1 < tc.epochs
            break
    history.best_epoch = stopper.best_epoch
    return stopper.best_state, history


def _sentence_grads(params, sent, tc: TrainConfig, context, rng):
    if context is None:
        context = _self_fed(params, sent)
    return backward(sent, params, tc.l2, context=context, rng=rng,
                    p_drop_hidden=tc.p_drop_hidden, p_drop_embed=tc.p_drop_embed)


def _self_fed(params, sent):
    from .decode import predict
    return predict(sent, params)[0]


# --- bidirectional ----------------------------------------------------------------

def bidir_dev_accuracy(model, sentences: Sequence[Encoded]) -> float:
    from .decode import predict_bidirectional
    return _accuracy((s.labels, predict_bidirectional(s, model)) for s in sentences)


def train_bidirectional(fwd: ModelParams, bwd: ModelParams, train: Sequence[Encoded],
                        dev: Sequence[Encoded], train_config: Optional[TrainConfig] = None,
                        freeze: bool = False,
                        dev_scorer: Optional[Callable] = None,
                        on_epoch: Optional[Callable[[EpochRecord], None]] = None):
    """Fine-tune a forward and a backward tagger jointly through their combined output.

    The combined distribution sqrt(y_f * y_b), renormalised, equals
    softmax((z_f + z_b) / 2) for logits z, so each model receives half of the
    usual softmax cross-entropy gradient. Epoch 0 scores the untouched pair.
    """
    from .decode import BidirModel
    if fwd.sizes.labels != bwd.sizes.labels or fwd.sizes.words != bwd.sizes.words:
        raise ConfigError("forward and backward models use different vocabularies")
    if not train:
        raise DataError("empty training corpus")
    tc = train_config or TrainConfig(**BIDIR_DEFAULTS)
    model = BidirModel(fwd.copy(), bwd.copy())
    dev_set = list(dev) if dev else list(train)
    if dev_scorer is None:
        def dev_scorer(m, _epoch):
            return bidir_dev_accuracy(m, dev_set)
    stopper = EarlyStopping(tc.patience)
    history = History()
    rec = EpochRecord(0, 0.0, float("nan"), float(dev_scorer(model, 0)))
    history.records.append(rec)
    if on_epoch is not None:
        on_epoch(rec)
    stopper.update(0, rec.dev_acc, model)
    if freeze:
        history.best_epoch = 0
        return stopper.best_state, history
    vel_f: dict = {}
    vel_b: dict = {}
    data = list(train)
    for e in range(tc.epochs):
        lr = lr_schedule(tc.lr0, tc.epochs, e)
        order = _epoch_rng(tc.seed, 3, e).permutation(len(data))
        drop_rng = _epoch_rng(tc.seed, 4, e)
        total = 0.0
        for idx in order:
            gf, gb, value = bidir_backward(data[idx], model, tc, drop_rng)
            sgd_step(model.fwd, gf, vel_f, lr, tc.momentum)
            sgd_step(model.bwd, gb, vel_b, lr, tc.momentum)
            total += value
        rec = EpochRecord(e + 1, lr, total / len(data), float(dev_scorer(model, e + 1)))
        history.records.append(rec)
        log.info(rec.line())
        if on_epoch is not None:
            on_epoch(rec)
        if stopper.update(e + 1, rec.dev_acc, model):
            history.stopped_early = e + 1 < tc.epochs
            break
    history.best_epoch = stopper.best_epoch
    return stopper.best_state, history


def bidir_backward(sent: Encoded, model, tc: TrainConfig, rng: Optional[numkit.Rng] = None):
    """Gradients of the combined-output objective for both directions."""
    rev = sent.reversed()
    sf = forward_sentence(model.fwd, sent, sent.labels, rng, tc.p_drop_hidden, tc.p_drop_embed)
    sb = forward_sentence(model.bwd, rev, rev.labels, rng, tc.p_drop_hidden, tc.p_drop_embed)
    T = len(sent)
    df, db = [None] * T, [None] * T
    total = 0.0
    for t in range(T):
        r = T - 1 - t
        q = numkit.softmax(0.5 * (sf[t].logits + sb[r].logits))
        gold = sent.labels[t]
        total += -np.log(max(q[gold], PROB_FLOOR))
        d = q.copy()
        d[gold] -= 1.0
        d *= 0.5 / T
        df[t] = d
        db[r] = d
    gf = backprop(model.fwd, sf, df)
    gb = backprop(model.bwd, sb, db)
    total = total / T + add_l2(model.fwd, gf, tc.l2) + add_l2(model.bwd, gb, tc.l2)
    return gf, gb, total
