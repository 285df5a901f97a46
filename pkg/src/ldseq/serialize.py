"""Binary container for trained models and embedding tables.

Layout::

    LDSEQ <version>\\n
    <one-line JSON header>\\n
    <payload>

The header records the file kind, the network configuration, vocabularies and
the ordered ``[name, rows, cols]`` list of tensors. The payload holds every
tensor in header order as row-major little-endian float64 values, so a file
written on one platform reads back bit-for-bit on any other.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import RESERVED, Vocabs, Vocabulary
from .embed import EmbeddingTable
from .errors import FormatError
from .nets import ModelParams, NetConfig, Sizes

MAGIC = "LDSEQ"
VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f8")


def atomic_write(path, data: bytes) -> None:
    """Write ``data`` to ``path`` through a temporary sibling and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _vocab_items(vocab: Optional[Vocabulary]):
    # reserved entries are implicit
    return None if vocab is None else vocab.itos[len(RESERVED):]


def _vocab_from(items) -> Optional[Vocabulary]:
    return None if items is None else Vocabulary(items)


def pack(header: dict, tensors: dict[str, np.ndarray]) -> bytes:
    header = dict(header, tensors=[[k, int(v.shape[0]), int(v.shape[1])] for k, v in tensors.items()])
    text = json.dumps(header, sort_keys=True, ensure_ascii=True, separators=(",", ":"))
    payload = b"".join(np.ascontiguousarray(v, dtype=PAYLOAD_DTYPE).tobytes(order="C")
                       for v in tensors.values())
    return f"{MAGIC} {VERSION}\n".encode() + text.encode() + b"\n" + payload


def unpack(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    first, sep, rest = data.partition(b"\n")
    parts = first.decode("ascii", errors="replace").split()
    if not sep or len(parts) != 2 or parts[0] != MAGIC:
        raise FormatError("not an ldseq file (bad magic line)")
    try:
        version = int(parts[1])
    except ValueError:
        raise FormatError(f"unreadable format version {parts[1]!r}") from None
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}; this build reads version {VERSION}")
    text, sep, payload = rest.partition(b"\n")
    if not sep:
        raise FormatError("truncated header")
    try:
        header = json.loads(text.decode("utf-8"))
        layout = [(str(n), int(r), int(c)) for n, r, c in header["tensors"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed header: {exc}") from None
    need = sum(r * c for _, r, c in layout) * PAYLOAD_DTYPE.itemsize
    if len(payload) != need:
        raise FormatError(f"payload has {len(payload)} bytes, header describes {need}")
    values = np.frombuffer(payload, dtype=PAYLOAD_DTYPE)
    tensors, offset = {}, 0
    for name, r, c in layout:
        tensors[name] = values[offset:offset + r * c].reshape(r, c).astype(np.float64)
        offset += r * c
    return header, tensors


@dataclass
class ModelFile:
    """A trained tagger together with everything needed to apply it to new text."""

    params: ModelParams
    vocabs: Vocabs
    direction: str = "forward"
    meta: dict = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        header = {
            "kind": "model",
            "direction": self.direction,
            "config": self.params.config.to_dict(),
            "sizes": asdict(self.params.sizes),
            "vocabs": {
                "words": _vocab_items(self.vocabs.words),
                "labels": _vocab_items(self.vocabs.labels),
                "classes": _vocab_items(self.vocabs.classes),
                "chars": _vocab_items(self.vocabs.chars),
            },
            "meta": self.meta,
        }
        return pack(header, self.params.tensors)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelFile":
        header, tensors = unpack(data)
        if header.get("kind") != "model":
            raise FormatError(f"expected a model file, found kind {header.get('kind')!r}")
        try:
            config = NetConfig.from_dict(header["config"])
            sizes = Sizes(**header["sizes"])
            v = header["vocabs"]
            vocabs = Vocabs(_vocab_from(v["words"]), _vocab_from(v["labels"]),
                            _vocab_from(v["classes"]), _vocab_from(v["chars"]))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed model header: {exc}") from None
        if len(vocabs.words) != sizes.words or len(vocabs.labels) != sizes.labels:
            raise FormatError("vocabulary sizes disagree with the stored tensor sizes")
        return cls(ModelParams(config, sizes, tensors), vocabs,
                   header.get("direction", "forward"), header.get("meta", {}))

    def save(self, path) -> None:
        atomic_write(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelFile":
        return cls.from_bytes(Path(path).read_bytes())


def save_embeddings(table: EmbeddingTable, path, column: str = "words") -> None:
    header = {"kind": "embeddings", "column": column, "vocab": _vocab_items(table.vocab)}
    atomic_write(path, pack(header, {"E": table.matrix}))


def load_embeddings(path) -> EmbeddingTable:
    header, tensors = unpack(Path(path).read_bytes())
    if header.get("kind") != "embeddings" or "E" not in tensors:
        raise FormatError(f"{path} is not an embedding file")
    return EmbeddingTable(_vocab_from(header["vocab"]), tensors["E"])
