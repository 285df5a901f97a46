"""Token accuracy, BIO chunk precision/recall/F1 and Concept Error Rate."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

from .corpus import concepts, extract_chunks
from .errors import ArgumentError, ShapeError


def token_accuracy(gold: Sequence, pred: Sequence) -> float:
    if len(gold) != len(pred):
        raise ShapeError(f"sequence lengths differ: {len(gold)} vs {len(pred)}")
    if not gold:
        return 0.0
    return sum(g == p for g, p in zip(gold, pred)) / len(gold)


def _check_aligned(gold_corpus, pred_corpus):
    if len(gold_corpus) != len(pred_corpus):
        raise ShapeError(f"{len(gold_corpus)} gold sentences vs {len(pred_corpus)} predicted")
    for i, (g, p) in enumerate(zip(gold_corpus, pred_corpus)):
        if len(g) != len(p):
            raise ShapeError(f"sentence {i}: {len(g)} gold tokens vs {len(p)} predicted")


def corpus_accuracy(gold_corpus, pred_corpus) -> float:
    _check_aligned(gold_corpus, pred_corpus)
    right = sum(g == p for gs, ps in zip(gold_corpus, pred_corpus) for g, p in zip(gs, ps))
    total = sum(len(g) for g in gold_corpus)
    return right / total if total else 0.0


def chunk_counts(gold_corpus, pred_corpus) -> tuple[int, int, int]:
    """(correct, predicted, gold) chunk counts, micro-summed over sentences."""
    _check_aligned(gold_corpus, pred_corpus)
    correct = n_pred = n_gold = 0
    for g, p in zip(gold_corpus, pred_corpus):
        gc, pc = set(extract_chunks(g)), set(extract_chunks(p))
        correct += len(gc & pc)
        n_pred += len(pc)
        n_gold += len(gc)
    return correct, n_pred, n_gold


def prf(correct: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    p = correct / n_pred if n_pred else 0.0
    r = correct / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def chunk_f1(gold_corpus, pred_corpus) -> tuple[float, float, float]:
    """Micro-averaged chunk precision, recall and F1 (exact type and span match)."""
    return prf(*chunk_counts(gold_corpus, pred_corpus))


def edit_counts(ref: Sequence, hyp: Sequence) -> tuple[int, int, int]:
    """(I, D, S) of a minimal unit-cost alignment of ``hyp`` against ``ref``.

    Among minimal alignments the one with fewest substitutions, then fewest
    deletions, is chosen.
    """
    n, m = len(ref), len(hyp)
    # cost tuples (total, S, D) compared lexicographically
    prev = [(j, 0, 0) for j in range(m + 1)]
    for i in range(1, n + 1):
        cur = [(i, 0, i)]
        for j in range(1, m + 1):
            t, s, d = prev[j - 1]
            if ref[i - 1] == hyp[j - 1]:
                diag = (t, s, d)
            else:
                diag = (t + 1, s + 1, d)
            t, s, d = prev[j]
            dele = (t + 1, s, d + 1)
            t, s, d = cur[j - 1]
            ins = (t + 1, s, d)
            cur.append(min(diag, dele, ins))
        prev = cur
    total, s, d = prev[m]
    return total - s - d, d, s


def cer(gold_concepts: Sequence[Sequence], pred_concepts: Sequence[Sequence]):
    """Concept Error Rate (I + D + S) / R over a corpus of concept sequences.

    Returns ``(cer, I, D, S, R)``.
    """
    if len(gold_concepts) != len(pred_concepts):
        raise ShapeError(f"{len(gold_concepts)} gold sentences vs {len(pred_concepts)} predicted")
    I = D = S = R = 0
    for ref, hyp in zip(gold_concepts, pred_concepts):
        i, d, s = edit_counts(ref, hyp)
        I, D, S, R = I + i, D + d, S + s, R + len(ref)
    if R == 0:
        raise ArgumentError("CER is undefined when the reference has no concepts")
    return (I + D + S) / R, I, D, S, R


@dataclass
class EvalReport:
    token_accuracy: float
    precision: float
    recall: float
    f1: float
    cer: float
    insertions: int
    deletions: int
    substitutions: int
    reference_concepts: int

    def to_text(self, metric: str = "all") -> str:
        """Human-readable ``key = value`` block; rates as percentages with 2 decimals."""
        lines = []
        if metric in ("acc", "all"):
            lines.append(f"accuracy = {100 * self.token_accuracy:.2f}")
        if metric in ("f1", "all"):
            lines.append(f"precision = {100 * self.precision:.2f}")
            lines.append(f"recall = {100 * self.recall:.2f}")
            lines.append(f"f1 = {100 * self.f1:.2f}")
        if metric in ("cer", "all"):
            lines.append(f"cer = {100 * self.cer:.2f}")
            lines.append(f"I = {self.insertions}")
            lines.append(f"D = {self.deletions}")
            lines.append(f"S = {self.substitutions}")
            lines.append(f"R = {self.reference_concepts}")
        return "\n".join(lines)

    def to_record(self) -> str:
        """Single machine-readable line of ``key=value`` pairs (raw fractions)."""
        return " ".join(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}"
                        for k, v in asdict(self).items())


def evaluate(gold_corpus, pred_corpus, include_void: bool = False) -> EvalReport:
    """Full report over aligned label sequences. CER is NaN when the reference has no concepts."""
    acc = corpus_accuracy(gold_corpus, pred_corpus)
    p, r, f = chunk_f1(gold_corpus, pred_corpus)
    gc = [concepts(g, include_void) for g in gold_corpus]
    pc = [concepts(s, include_void) for s in pred_corpus]
    try:
        rate, I, D, S, R = cer(gc, pc)
    except ArgumentError:
        rate, I, D, S, R = float("nan"), 0, 0, 0, 0
    return EvalReport(acc, p, r, f, rate, I, D, S, R)
