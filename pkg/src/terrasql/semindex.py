"""Vector search over schema narratives.

Narratives are embedded into fixed-dimension vectors; entity text is matched
against them by cosine similarity; a largest-gap scan over the sorted scores
decides how many candidates survive. The bundled provider is deterministic
feature hashing, so every test and replay run is reproducible without a
model server.
"""

from __future__ import annotations

import hashlib
import io
import re
import struct
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .kb.narratives import Narrative

INDEX_MAGIC = b"TSQLIDX1"

_TOKEN = re.compile(r"[a-z0-9]+")


@dataclass
class EmbeddingVector:
    dims: np.ndarray
    norm: float

    @classmethod
    def from_values(cls, values) -> "EmbeddingVector":
        arr = np.asarray(values, dtype=np.float64)
        return cls(dims=arr, norm=float(np.linalg.norm(arr)))

    def __len__(self) -> int:
        return len(self.dims)


@dataclass
class IndexEntry:
    subject: tuple[str, Optional[str]]
    vector: EmbeddingVector
    narrative_ref: str


@dataclass
class ScoredCandidate:
    subject: tuple[str, Optional[str]]
    score: float


class HashingEmbeddingProvider:
    """Seeded feature hashing of token unigrams and bigrams.

    Buckets and signs come from sha256 over (seed, gram), never from
    Python's randomized hash().
    """

    def __init__(self, dim: int = 256, seed: int = 42):
        if dim < 1:
            raise ConfigError("embedding.dim", "dimension must be positive")
        self.dim = dim
        self.seed = seed

    @property
    def provider_id(self) -> str:
        return f"hash{self.dim}/seed{self.seed}"

    def embed(self, text: str) -> EmbeddingVector:
        tokens = _TOKEN.findall(text.lower())
        grams = list(tokens)
        grams.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
        vec = np.zeros(self.dim, dtype=np.float64)
        for gram in grams:
            digest = hashlib.sha256(f"{self.seed}:{gram}".encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:8], "little") % self.dim
            sign = 1.0 if digest[8] & 1 else -1.0
            vec[bucket] += sign
        return EmbeddingVector.from_values(vec)


def cosine_similarity(q: EmbeddingVector, c: EmbeddingVector) -> float:
    if len(q) != len(c):
        raise ValueError(f"dimension mismatch: {len(q)} vs {len(c)}")
    if q.norm == 0.0 or c.norm == 0.0:
        warnings.warn("cosine over a zero-norm vector (degenerate text); returning 0",
                      stacklevel=2)
        return 0.0
    value = float(np.dot(q.dims, c.dims) / (q.norm * c.norm))
    return max(-1.0, min(1.0, value))


@dataclass
class SemanticIndex:
    provider_id: str
    dim: int
    entries: list[IndexEntry]

    def __post_init__(self) -> None:
        for entry in self.entries:
            if len(entry.vector) != self.dim:
                raise ConfigError(
                    "embedding.dim",
                    f"index entry for {entry.subject} has dimension "
                    f"{len(entry.vector)}, expected {self.dim}")


def build_index(narratives: list[Narrative], provider) -> SemanticIndex:
    entries = [
        IndexEntry(
            subject=n.subject,
            vector=provider.embed(n.text),
            narrative_ref=hashlib.sha256(n.text.encode("utf-8")).hexdigest(),
        )
        for n in narratives
    ]
    return SemanticIndex(provider_id=provider.provider_id,
                         dim=provider.dim, entries=entries)


def rank_candidates(
    entity_text: str,
    index: SemanticIndex,
    provider,
) -> list[ScoredCandidate]:
    """All index entries scored against the entity, best first."""
    if provider.provider_id != index.provider_id:
        raise ConfigError(
            "embedding.provider",
            f"index was built with {index.provider_id}, "
            f"queried with {provider.provider_id}")
    if not index.entries:
        return []
    query = provider.embed(entity_text)
    scored = [
        ScoredCandidate(subject=e.subject,
                        score=cosine_similarity(query, e.vector))
        for e in index.entries
    ]
    scored.sort(key=lambda s: (-s.score, s.subject[0], s.subject[1] or ""))
    return scored


def select_by_natural_breaks(
    scores: list[float],
    k_min: int = 1,
    k_max: int = 8,
    flatness_epsilon: float = 1e-6,
) -> int:
    """Prefix length ending just before the largest gap between scores.

    Only break positions k_min..k_max are considered; a flat distribution
    (no gap above the epsilon) falls back to k_min.
    """
    if k_min < 1 or k_min > k_max:
        raise ValueError("requires 1 <= k_min <= k_max")
    n = len(scores)
    if n <= k_min:
        return n
    best_gap = 0.0
    best_at = None
    for i in range(k_min - 1, min(k_max - 1, n - 2) + 1):
        if i + 1 >= n:
            break
        gap = scores[i] - scores[i + 1]
        if gap > best_gap:
            best_gap = gap
            best_at = i
    if best_at is None or best_gap < flatness_epsilon:
        return min(k_min, n)
    return best_at + 1


# -- binary index container ----------------------------------------------------


def serialize_index(index: SemanticIndex) -> bytes:
    out = io.BytesIO()
    out.write(INDEX_MAGIC)
    provider = index.provider_id.encode("utf-8")
    out.write(struct.pack("<H", len(provider)))
    out.write(provider)
    out.write(struct.pack("<II", index.dim, len(index.entries)))
    for entry in index.entries:
        _write_str(out, entry.subject[0])
        if entry.subject[1] is None:
            out.write(b"\x00")
        else:
            out.write(b"\x01")
            _write_str(out, entry.subject[1])
        _write_str(out, entry.narrative_ref)
        out.write(struct.pack(f"<{index.dim}d", *entry.vector.dims))
    return out.getvalue()


def deserialize_index(blob: bytes) -> SemanticIndex:
    buf = io.BytesIO(blob)
    magic = buf.read(len(INDEX_MAGIC))
    if magic != INDEX_MAGIC:
        raise ValueError("not an embedding index file (bad magic)")
    provider_id = _read_str(buf, "<H")
    dim, count = struct.unpack("<II", buf.read(8))
    entries = []
    for _ in range(count):
        table = _read_str(buf, "<H")
        has_column = buf.read(1) == b"\x01"
        column = _read_str(buf, "<H") if has_column else None
        ref = _read_str(buf, "<H")
        values = struct.unpack(f"<{dim}d", buf.read(8 * dim))
        entries.append(IndexEntry(
            subject=(table, column),
            vector=EmbeddingVector.from_values(values),
            narrative_ref=ref,
        ))
    return SemanticIndex(provider_id=provider_id, dim=dim, entries=entries)


def _write_str(out: io.BytesIO, text: str) -> None:
    encoded = text.encode("utf-8")
    out.write(struct.pack("<H", len(encoded)))
    out.write(encoded)


def _read_str(buf: io.BytesIO, fmt: str) -> str:
    (length,) = struct.unpack(fmt, buf.read(struct.calcsize(fmt)))
    return buf.read(length).decode("utf-8")
