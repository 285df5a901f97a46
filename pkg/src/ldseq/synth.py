"""Synthetic tagging corpora with a tunable amount of label dependency.

Each label is drawn, with probability ``rho``, from an order-2 Markov chain
over labels and otherwise read off a fixed word -> label lexicon. Words are
drawn uniformly and independently of everything else, so at ``rho = 1`` the
words carry no information about the labels.

The chain follows a random de Bruijn cycle over label pairs with probability
``p_major`` and jumps to a uniformly random label otherwise. Every pair of
labels then has a distinct preferred successor (two labels of context are
needed to predict the next one) and the stationary label marginals are
uniform. Sentences start from the boundary context, where the chain has a
fixed preferred first label, so a model reading its own previous labels can
follow the cycle from the start.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import SequenceExample, Token
from .errors import ArgumentError

START = -1  # boundary context symbol


def label_names(n: int) -> list[str]:
    names = ["O"]
    k = 0
    while len(names) < n:
        names.append(f"B-T{k}")
        if len(names) < n:
            names.append(f"I-T{k}")
        k += 1
    return names


def pair_cycle(k: int, rng: np.random.Generator, horizon: int) -> list[int]:
    """Random de Bruijn cycle over ``k`` symbols (every ordered pair once).

    Built by Hierholzer's algorithm with shuffled edges, then rotated so the
    first ``horizon`` symbols are as evenly spread over labels as possible.
    """
    out_edges = {a: list(rng.permutation(k)) for a in range(k)}
    stack, circuit = [int(rng.integers(k))], []
    while stack:
        v = stack[-1]
        if out_edges[v]:
            stack.append(int(out_edges[v].pop()))
        else:
            circuit.append(stack.pop())
    cycle = circuit[::-1][:-1]          # closed walk, drop the repeated start
    L = len(cycle)

    def imbalance(r):
        head = [cycle[(r + i) % L] for i in range(min(horizon, L))]
        return max(np.bincount(head, minlength=k))

    best = min(range(L), key=imbalance)
    return cycle[best:] + cycle[:best]


@dataclass
class SynthSpec:
    n_labels: int = 5
    vocab_size: int = 50
    min_len: int = 10
    max_len: int = 30
    rho: float = 1.0
    p_major: float = 0.95
    n_classes: int = 0
    seed: int = 1
    successor: dict = field(default_factory=dict, repr=False)
    lexicon: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ArgumentError(f"rho must be in [0, 1], got {self.rho}")
        if not 0.0 <= self.p_major <= 1.0:
            raise ArgumentError(f"p_major must be in [0, 1], got {self.p_major}")
        if self.n_labels < 2 or self.vocab_size < 1 or not 1 <= self.min_len <= self.max_len:
            raise ArgumentError("invalid generator sizes")
        rng = np.random.default_rng([self.seed, 7])
        cycle = pair_cycle(self.n_labels, rng, self.max_len)
        L = len(cycle)
        succ = {}
        for i in range(L):
            succ[(cycle[i], cycle[(i + 1) % L])] = cycle[(i + 2) % L]
        succ[(START, START)] = cycle[0]
        for b in range(self.n_labels):
            succ[(START, b)] = cycle[(cycle.index(b) + 1) % L]
        self.successor = succ
        self.lexicon = rng.integers(0, self.n_labels, size=self.vocab_size)

    def transition(self, a: int, b: int) -> np.ndarray:
        """P(next label | previous two labels a, b)."""
        p = np.full(self.n_labels, (1.0 - self.p_major) / self.n_labels)
        p[self.successor[(a, b)]] += self.p_major
        return p

    def stationary_marginal(self) -> np.ndarray:
        """Stationary label distribution of the chain (computed over pair states)."""
        n = self.n_labels
        P = np.zeros((n * n, n * n))
        for a in range(n):
            for b in range(n):
                P[a * n + b, b * n:(b + 1) * n] = self.transition(a, b)
        w, v = np.linalg.eig(P.T)
        pi = np.real(v[:, np.argmin(np.abs(w - 1.0))])
        pi = pi / pi.sum()
        return pi.reshape(n, n).sum(axis=0)

    def label_blind_ceiling(self) -> float:
        return float(self.stationary_marginal().max())


def sample_sentence(spec: SynthSpec, rng: np.random.Generator, names: list[str]) -> SequenceExample:
    T = int(rng.integers(spec.min_len, spec.max_len + 1))
    words = rng.integers(0, spec.vocab_size, size=T)
    a = b = START
    tokens = []
    for t in range(T):
        if rng.random() < spec.rho:
            lab = int(rng.choice(spec.n_labels, p=spec.transition(a, b)))
        else:
            lab = int(spec.lexicon[words[t]])
        wc = f"k{words[t] % spec.n_classes}" if spec.n_classes else None
        tokens.append(Token(f"w{words[t]}", names[lab], wc))
        a, b = b, lab
    return SequenceExample(tuple(tokens))


def gen_synth(spec: SynthSpec, n_train: int, n_dev: int, n_test: int):
    """Train, dev and test sentence lists drawn from ``spec`` with its seed."""
    names = label_names(spec.n_labels)
    rng = np.random.default_rng([spec.seed, 11])
    split = []
    for n in (n_train, n_dev, n_test):
        split.append([sample_sentence(spec, rng, names) for _ in range(n)])
    return tuple(split)
