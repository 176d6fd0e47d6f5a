"""Embedding providers behind one deterministic contract.

Every provider must be deterministic (same text, same vector), emit a
fixed dimensionality, and the wrapper normalizes output to unit L2 norm.
The built-in provider hashes character 3-grams into a fixed number of
buckets with a seeded CRC, which keeps the core dependency-free while
preserving lexical similarity; a clinical-domain encoder can be served
over HTTP through RemoteEmbeddingProvider instead.

Empty text never yields a zero vector: it maps to the uniform vector
(all components equal, unit norm), which carries no direction preference
but stays dimensionally valid.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Protocol, Sequence

import requests

from .errors import DimMismatch, ProviderUnavailable

DEFAULT_DIM = 256
DEFAULT_HASH_SEED = 2654435761  # Knuth multiplicative constant, fixed for all builds


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Dot product of unit vectors, clamped into [-1, 1] against float drift.

    Uses exactly-rounded summation so the result is independent of
    component order; analytically equal similarities therefore compare
    equal bitwise, which keeps ranking tie-breaks reproducible.
    """
    if a.dim != b.dim:
        raise DimMismatch(f"vector dims differ: {a.dim} vs {b.dim}")
    dot = math.fsum(x * y for x, y in zip(a.values, b.values))
    return max(-1.0, min(1.0, dot))


class EmbeddingProvider(Protocol):
    embedder_id: str
    dim: int

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        ...


class HashedNgramProvider:
    """Character 3-gram counts hashed into ``dim`` buckets.

    Hashing uses CRC-32 with a fixed starting value, so vectors are stable
    across processes and platforms. Text is lowercased before extracting
    3-grams; no other normalization is applied.
    """

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = DEFAULT_HASH_SEED):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed & 0xFFFFFFFF
        self.embedder_id = f"hash3gram-d{dim}-s{self.seed}"

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        return [self._embed_one(t) for t in texts]

    def _embed_one(self, text: str) -> list[float]:
        counts = [0.0] * self.dim
        lowered = text.lower()
        for i in range(len(lowered) - 2):
            gram = lowered[i: i + 3]
            bucket = zlib.crc32(gram.encode("utf-8"), self.seed) % self.dim
            counts[bucket] += 1.0
        return counts

    @classmethod
    def from_embedder_id(cls, embedder_id: str) -> "HashedNgramProvider":
        try:
            prefix, d, s = embedder_id.split("-")
            assert prefix == "hash3gram"
            return cls(dim=int(d[1:]), seed=int(s[1:]))
        except (ValueError, AssertionError):
            raise ValueError(
                f"not a hashed-ngram embedder id: {embedder_id!r}"
            ) from None


class RemoteEmbeddingProvider:
    """HTTP embedding endpoint speaking {"texts": [...]} -> {"vectors": [[...]]}."""

    def __init__(self, endpoint: str, dim: int, timeout: float = 30.0):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.endpoint = endpoint
        self.dim = dim
        self.timeout = timeout
        self.embedder_id = f"remote:{endpoint}"

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        try:
            response = requests.post(
                self.endpoint, json={"texts": list(texts)}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise ProviderUnavailable(
                f"embedding endpoint {self.endpoint} unreachable",
                detail=str(exc),
            ) from exc
        if response.status_code != 200:
            raise ProviderUnavailable(
                f"embedding endpoint returned HTTP {response.status_code}",
                detail=response.text[:500],
            )
        try:
            vectors = response.json()["vectors"]
        except (ValueError, KeyError) as exc:
            raise ProviderUnavailable(
                "embedding endpoint returned an unexpected payload",
                detail=str(exc),
            ) from exc
        for vector in vectors:
            if len(vector) != self.dim:
                raise DimMismatch(
                    f"endpoint returned dim {len(vector)}, expected {self.dim}"
                )
        return [[float(x) for x in v] for v in vectors]


def uniform_vector(dim: int) -> EmbeddingVector:
    component = 1.0 / math.sqrt(dim)
    return EmbeddingVector(values=tuple([component] * dim))


def _normalize(raw: Sequence[float], dim: int) -> EmbeddingVector:
    if len(raw) != dim:
        raise DimMismatch(f"provider returned dim {len(raw)}, expected {dim}")
    if any(not math.isfinite(x) for x in raw):
        raise DimMismatch("provider returned non-finite components")
    norm = math.sqrt(math.fsum(x * x for x in raw))
    if norm == 0.0:
        return uniform_vector(dim)
    return EmbeddingVector(values=tuple(x / norm for x in raw))


def embed(text: str, provider: EmbeddingProvider) -> EmbeddingVector:
    """Embed one text: provider output, L2-normalized; empty text -> uniform."""
    if not text:
        return uniform_vector(provider.dim)
    raw = provider.embed_batch([text])[0]
    return _normalize(raw, provider.dim)


def embed_all(
    texts: Sequence[str], provider: EmbeddingProvider, batch_size: int = 128
) -> list[EmbeddingVector]:
    """Embed many texts, batching provider calls, in input order.

    Empty texts short-circuit to the uniform vector without a provider
    round trip.
    """
    out: list[EmbeddingVector | None] = [None] * len(texts)
    pending: list[int] = []
    for i, text in enumerate(texts):
        if not text:
            out[i] = uniform_vector(provider.dim)
        else:
            pending.append(i)
    for chunk_start in range(0, len(pending), batch_size):
        chunk = pending[chunk_start: chunk_start + batch_size]
        vectors = provider.embed_batch([texts[i] for i in chunk])
        if len(vectors) != len(chunk):
            raise DimMismatch("provider returned a different number of vectors")
        for i, raw in zip(chunk, vectors):
            out[i] = _normalize(raw, provider.dim)
    return [v for v in out if v is not None]
