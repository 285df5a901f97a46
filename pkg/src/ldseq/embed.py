"""Embedding tables and feed-forward language-model pretraining.

The pretrainer is a Bengio-style NNLM: the embeddings of the ``context``
previous items are concatenated, passed through one ReLU hidden layer and a
softmax over the vocabulary that predicts the next item. Only the input
embedding table is kept. Word sequences and label sequences go through the
same code path; they differ only in the padding symbol.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import numkit
from .corpus import BOL_ID, BOS_ID, EOS_ID, Vocabulary
from .errors import BoundsError, DataError, ShapeError

log = logging.getLogger(__name__)


@dataclass
class EmbeddingTable:
    vocab: Vocabulary
    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.shape[0] != len(self.vocab):
            raise ShapeError(f"{self.matrix.shape[0]} rows for a vocabulary of {len(self.vocab)}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self):
        return self.matrix.shape[0]

    def lookup(self, index: int) -> np.ndarray:
        if not 0 <= index < len(self):
            raise BoundsError(f"index {index} outside table of {len(self)} rows")
        return self.matrix[index]

    def lookup_many(self, indices) -> np.ndarray:
        """Concatenation of the rows for ``indices``."""
        return np.concatenate([self.lookup(int(i)) for i in indices])


@dataclass(frozen=True)
class NNLMConfig:
    dim: int = 200
    context: int = 5
    hidden: int = 200
    epochs: int = 30
    lr: float = 0.05
    momentum: float = 0.0


WORD_EPOCHS, LABEL_EPOCHS = 30, 20


def _ngrams(sequences: Sequence[Sequence[int]], context: int, pad: int):
    """(context ids, target id) for every position plus a final EOS target."""
    ctxs, targets = [], []
    for seq in sequences:
        padded = [pad] * context + list(seq)
        for t, target in enumerate(list(seq) + [EOS_ID]):
            ctxs.append(padded[t:t + context])
            targets.append(target)
    return np.array(ctxs, dtype=np.int64).reshape(-1, context), np.array(targets, dtype=np.int64)


class NNLM:
    def __init__(self, vocab_size: int, cfg: NNLMConfig, rng: numkit.Rng):
        self.cfg = cfg
        self.E = numkit.xavier_init(vocab_size, cfg.dim, rng)
        self.W1 = numkit.xavier_init(cfg.hidden, cfg.context * cfg.dim, rng)
        self.b1 = np.zeros(cfg.hidden)
        self.W2 = numkit.xavier_init(vocab_size, cfg.hidden, rng)
        self.b2 = np.zeros(vocab_size)

    def params(self):
        return {"E": self.E, "W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def loss(self, ctx, target) -> float:
        x = self.E[ctx].ravel()
        h = numkit.relu(self.W1 @ x + self.b1)
        y = numkit.softmax(self.W2 @ h + self.b2)
        return -float(np.log(max(y[target], 1e-300)))

    def grads(self, ctx, target):
        """(loss, gradient dict) for one n-gram."""
        x = self.E[ctx].ravel()
        a = self.W1 @ x + self.b1
        h = numkit.relu(a)
        y = numkit.softmax(self.W2 @ h + self.b2)
        value = -float(np.log(max(y[target], 1e-300)))
        dz = y.copy()
        dz[target] -= 1.0
        da = (self.W2.T @ dz) * (a > 0)
        dx = (self.W1.T @ da).reshape(len(ctx), -1)
        return value, {"E": (ctx, dx), "W1": np.outer(da, x), "b1": da, "W2": np.outer(dz, h), "b2": dz}

    @staticmethod
    def dense(E, sparse):
        ctx, dx = sparse
        dE = np.zeros_like(E)
        np.add.at(dE, ctx, dx)
        return dE


def nnlm_pretrain(sequences: Sequence[Sequence[int]], vocab: Vocabulary, cfg: NNLMConfig,
                  rng: numkit.Rng, pad: int = BOS_ID, history: Optional[list] = None) -> EmbeddingTable:
    """Train the language model on index sequences and return its input embeddings.

    ``pad`` fills the context before the first item (BOS for words, BOL for
    labels). Mean per-epoch cross-entropy is appended to ``history`` if given.
    """
    ctxs, targets = _ngrams(sequences, cfg.context, pad)
    if len(targets) == 0 or not any(len(s) for s in sequences):
        raise DataError("cannot pretrain embeddings on an empty corpus")
    model = NNLM(len(vocab), cfg, rng)
    params = model.params()
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    for epoch in range(cfg.epochs):
        lr = cfg.lr - epoch * (cfg.lr / cfg.epochs)
        total = 0.0
        for i in rng.permutation(len(targets)):
            value, g = model.grads(ctxs[i], targets[i])
            total += value
            if cfg.momentum == 0:
                # only the context rows of E move
                ctx, dx = g.pop("E")
                np.add.at(model.E, ctx, -lr * dx)
            else:
                g["E"] = NNLM.dense(model.E, g["E"])
            for k, g_k in g.items():
                p = params[k]
                v = velocity[k]
                v *= cfg.momentum
                v -= lr * g_k
                p += v
        mean = total / len(targets)
        log.info("nnlm epoch=%d loss=%.6f", epoch + 1, mean)
        if history is not None:
            history.append(mean)
    return EmbeddingTable(vocab, model.E.copy())


def pretrain_words(sequences, vocab, rng, dim=200, epochs=WORD_EPOCHS, **kw) -> EmbeddingTable:
    return nnlm_pretrain(sequences, vocab, NNLMConfig(dim=dim, epochs=epochs, **kw), rng, pad=BOS_ID)


def pretrain_labels(sequences, vocab, rng, dim=200, epochs=LABEL_EPOCHS, **kw) -> EmbeddingTable:
    return nnlm_pretrain(sequences, vocab, NNLMConfig(dim=dim, epochs=epochs, **kw), rng, pad=BOL_ID)
