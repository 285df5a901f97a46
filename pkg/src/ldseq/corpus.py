"""Column-format corpora, vocabularies, index encoding and BIO chunk utilities.

File layout: one token per line, whitespace separated ``word [class] label``,
a blank line between sentences, ``#`` lines ignored.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError, ParseError

UNK, BOS, EOS, BOL = "<unk>", "<s>", "</s>", "<bol>"
RESERVED = (UNK, BOS, EOS, BOL)
UNK_ID, BOS_ID, EOS_ID, BOL_ID = 0, 1, 2, 3
# characters outside a word reuse the BOS slot of the character vocabulary
PAD_CHAR_ID = BOS_ID


@dataclass(frozen=True)
class Token:
    word: str
    label: str
    word_class: Optional[str] = None


@dataclass(frozen=True)
class SequenceExample:
    tokens: tuple

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise DataError("a sequence needs at least one token")

    def __len__(self):
        return len(self.tokens)

    @property
    def words(self):
        return [t.word for t in self.tokens]

    @property
    def labels(self):
        return [t.label for t in self.tokens]

    @property
    def classes(self):
        return [t.word_class for t in self.tokens]

    @property
    def has_classes(self):
        return self.tokens[0].word_class is not None

    def with_labels(self, labels: Sequence[str]) -> "SequenceExample":
        if len(labels) != len(self.tokens):
            raise DataError(f"{len(labels)} labels for {len(self.tokens)} tokens")
        return SequenceExample(tuple(Token(t.word, l, t.word_class) for t, l in zip(self.tokens, labels)))


class Vocabulary:
    """Bijective item <-> index map with the four reserved entries at 0..3."""

    def __init__(self, items: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {s: i for i, s in enumerate(RESERVED)}
        for item in items:
            self.add(item)

    def add(self, item: str) -> int:
        if item not in self.stoi:
            self.stoi[item] = len(self.itos)
            self.itos.append(item)
        return self.stoi[item]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, item):
        return item in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def __repr__(self):
        return f"Vocabulary(size={len(self)})"

    def index(self, item: str) -> int:
        return self.stoi.get(item, UNK_ID)

    def item(self, index: int) -> str:
        return self.itos[index]


def build_vocab(sequences: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Vocabulary over items seen at least ``min_count`` times, in first-occurrence order."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter = Counter()
    order: list[str] = []
    for seq in sequences:
        for item in seq:
            if item not in counts:
                order.append(item)
            counts[item] += 1
    return Vocabulary(x for x in order if counts[x] >= min_count and x not in RESERVED)


@dataclass
class Vocabs:
    words: Vocabulary
    labels: Vocabulary
    classes: Optional[Vocabulary] = None
    chars: Optional[Vocabulary] = None

    @classmethod
    def from_examples(cls, examples: Sequence[SequenceExample], min_count: int = 1):
        if not examples:
            raise DataError("cannot build vocabularies from an empty corpus")
        words = build_vocab((ex.words for ex in examples), min_count)
        # labels form the closed output space: never pruned
        labels = build_vocab(ex.labels for ex in examples)
        classes = None
        if examples[0].has_classes:
            classes = build_vocab((ex.classes for ex in examples), min_count)
        chars = build_vocab((c for w in ex.words for c in w) for ex in examples)
        return cls(words, labels, classes, chars)


@dataclass
class Encoded:
    """Index view of one sentence; ``gold`` keeps the original label strings."""

    words: np.ndarray
    labels: np.ndarray
    gold: list
    classes: Optional[np.ndarray] = None
    chars: list = field(default_factory=list)

    def __len__(self):
        return len(self.words)

    def reversed(self) -> "Encoded":
        return Encoded(
            self.words[::-1].copy(),
            self.labels[::-1].copy(),
            self.gold[::-1],
            None if self.classes is None else self.classes[::-1].copy(),
            self.chars[::-1],
        )


def encode(example: SequenceExample, vocabs: Vocabs, training: bool = True) -> Encoded:
    """Map a sentence to indices. Unknown words/classes become UNK; unknown labels
    are an error in training mode and UNK otherwise."""
    words = np.array([vocabs.words.index(w) for w in example.words], dtype=np.int64)
    labels = []
    for lab in example.labels:
        if lab in vocabs.labels:
            labels.append(vocabs.labels.stoi[lab])
        elif training:
            raise DataError(f"label {lab!r} not in the label vocabulary")
        else:
            labels.append(UNK_ID)
    classes = None
    if vocabs.classes is not None and example.has_classes:
        classes = np.array([vocabs.classes.index(c) for c in example.classes], dtype=np.int64)
    chars = []
    if vocabs.chars is not None:
        chars = [np.array([vocabs.chars.index(c) for c in w], dtype=np.int64) for w in example.words]
    return Encoded(words, np.array(labels, dtype=np.int64), example.labels, classes, chars)


def decode_labels(indices: Iterable[int], vocab: Vocabulary) -> list[str]:
    return [vocab.item(int(i)) for i in indices]


def parse_conll(text: str) -> list[SequenceExample]:
    """Parse column-formatted text into sentences."""
    examples: list[SequenceExample] = []
    current: list[Token] = []
    ncols = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            continue
        if not line:
            if current:
                examples.append(SequenceExample(tuple(current)))
                current = []
            continue
        cols = line.split()
        if ncols is None:
            if len(cols) not in (2, 3):
                raise ParseError(f"expected 2 or 3 columns, found {len(cols)}", lineno)
            ncols = len(cols)
        elif len(cols) != ncols:
            raise ParseError(f"expected {ncols} columns, found {len(cols)}", lineno)
        if ncols == 2:
            current.append(Token(cols[0], cols[1]))
        else:
            current.append(Token(cols[0], cols[2], cols[1]))
    if current:
        examples.append(SequenceExample(tuple(current)))
    return examples


def read_conll(path) -> list[SequenceExample]:
    return parse_conll(Path(path).read_text(encoding="utf-8"))


def parse_label_column(text: str) -> list[list[str]]:
    """Last column of every token line, grouped into sentences.

    Works for plain corpus files and for prediction output, whose last
    column is the predicted label.
    """
    sents: list[list[str]] = []
    current: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("#"):
            continue
        if not line:
            if current:
                sents.append(current)
                current = []
            continue
        current.append(line.split()[-1])
    if current:
        sents.append(current)
    return sents


def read_label_column(path) -> list[list[str]]:
    return parse_label_column(Path(path).read_text(encoding="utf-8"))


def format_conll(examples: Iterable[SequenceExample], predicted: Optional[Iterable[Sequence[str]]] = None) -> str:
    """Serialize sentences; with ``predicted`` an extra label column is appended."""
    lines = []
    preds = iter(predicted) if predicted is not None else None
    for ex in examples:
        pred = next(preds) if preds is not None else None
        for i, tok in enumerate(ex.tokens):
            cols = [tok.word]
            if tok.word_class is not None:
                cols.append(tok.word_class)
            cols.append(tok.label)
            if pred is not None:
                cols.append(pred[i])
            lines.append(" ".join(cols))
        lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


# --- BIO chunks -----------------------------------------------------------

def split_label(label: str) -> tuple[str, Optional[str]]:
    """Return (tag, type) with tag in {"B", "I", "O"}.

    Accepts ``B-X``/``I-X`` prefixes and ``X-B``/``X-I`` suffixes. A bare label
    other than ``O`` behaves like ``I-label``, so runs of it form one chunk.
    """
    if label == "O":
        return "O", None
    if len(label) > 2 and label[1] == "-" and label[0] in "BI":
        return label[0], label[2:]
    if len(label) > 2 and label[-2] == "-" and label[-1] in "BI":
        return label[-1], label[:-2]
    return "I", label


def extract_chunks(labels: Sequence[str]) -> list[tuple[str, int, int]]:
    """Maximal chunks as (type, start, end) with ``end`` exclusive, sorted by start.

    A stray ``I-X`` (after ``O`` or a chunk of another type) opens a new chunk,
    as conlleval does.
    """
    chunks = []
    cur_type, start = None, 0
    for i, lab in enumerate(labels):
        tag, typ = split_label(lab)
        starts = tag == "B" or (tag == "I" and typ != cur_type)
        if cur_type is not None and (tag == "O" or starts):
            chunks.append((cur_type, start, i))
            cur_type = None
        if starts:
            cur_type, start = typ, i
    if cur_type is not None:
        chunks.append((cur_type, start, len(labels)))
    return chunks


def repair_bio(labels: Sequence[str]) -> list[str]:
    """Rewrite stray ``I-X`` labels as ``B-X`` (prefix notation only)."""
    out = []
    prev_type = None
    for lab in labels:
        tag, typ = split_label(lab)
        if lab.startswith("I-") and typ != prev_type:
            lab = "B-" + typ
        out.append(lab)
        prev_type = typ if tag != "O" else None
    return out


def concepts(labels: Sequence[str], include_void: bool = False) -> list[str]:
    """Concept (chunk type) sequence of one sentence in order.

    With ``include_void`` each maximal run of ``O`` adds one ``"O"`` concept.
    """
    chunks = extract_chunks(labels)
    if not include_void:
        return [c[0] for c in chunks]
    by_start = {c[1]: c[0] for c in chunks}
    out, in_void = [], False
    for i, lab in enumerate(labels):
        if i in by_start:
            out.append(by_start[i])
            in_void = False
        elif split_label(lab)[0] == "O":
            if not in_void:
                out.append("O")
            in_void = True
    return out
