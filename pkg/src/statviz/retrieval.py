"""Semantic dataset retrieval.

Catalog descriptions are encoded into dense vectors by a pluggable embedding
provider, stored in an immutable index, and ranked against user prompts by
cosine similarity. The top-1 match is what the pipeline runs on; hit@k
metrics quantify how often a gold table lands in the top k.

Index layout on disk (see also the README):

    <index_dir>/manifest.json   provider_id, dim, count, corpus_text
    <index_dir>/entries.jsonl   one {"ref", "text"} per line, in vector order
    <index_dir>/vectors.npy     float64 array of shape (count, dim)
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Protocol, Sequence

import numpy as np
import requests

from .errors import PayloadError, ProviderMismatchError, TransportError

if TYPE_CHECKING:
    from .catalog import TableMetadata

# The index stores the concatenation of each table's title and description;
# recorded in the manifest so an index is self-describing.
CORPUS_TEXT = "title+description"


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("embedding vector must have at least one component")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding vector contains non-finite values")

    @property
    def dim(self) -> int:
        return len(self.values)

    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)


class EmbeddingProvider(Protocol):
    """Anything that can turn text into fixed-dimension vectors."""

    provider_id: str
    dim: int

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


def embed(text: str, provider: EmbeddingProvider) -> EmbeddingVector:
    """Encode one text; deterministic per (provider, text)."""
    if not text or not text.strip():
        raise ValueError("cannot embed empty text")
    vector = provider.embed_batch([text])[0]
    if vector.dim != provider.dim:
        raise PayloadError(
            f"provider {provider.provider_id!r} declared dim {provider.dim} "
            f"but returned dim {vector.dim}")
    return vector


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a,b) / (|a| |b|), in [-1, 1] up to rounding."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.is_zero() or b.is_zero():
        raise ValueError("cosine similarity is undefined for the zero vector")
    va = np.asarray(a.values, dtype=np.float64)
    vb = np.asarray(b.values, dtype=np.float64)
    return float(np.dot(va, vb) / (np.linalg.norm(va) * np.linalg.norm(vb)))


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------

class PrecomputedEmbeddings:
    """Table-lookup provider over a fixed text -> vector mapping.

    Serves two purposes: deterministic fixtures in tests, and replaying
    vectors exported from a real sentence encoder without hosting the model.
    """

    def __init__(self, mapping: Mapping[str, Sequence[float]], provider_id: str,
                 dim: int | None = None):
        if not mapping:
            raise ValueError("precomputed mapping is empty")
        self._mapping = {text: tuple(float(v) for v in vec) for text, vec in mapping.items()}
        dims = {len(v) for v in self._mapping.values()}
        if len(dims) != 1:
            raise ValueError(f"mapping contains mixed dimensions: {sorted(dims)}")
        self.dim = dim if dim is not None else dims.pop()
        self.provider_id = provider_id

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        missing = [t for t in texts if t not in self._mapping]
        if missing:
            raise KeyError(f"no precomputed vector for: {missing[0]!r}")
        return [EmbeddingVector(self._mapping[t]) for t in texts]

    @classmethod
    def from_json(cls, path: Path | str, provider_id: str | None = None) -> "PrecomputedEmbeddings":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(payload["vectors"], provider_id or payload.get("provider_id", "precomputed"))


class HashedEmbeddings:
    """Deterministic token-hash vectors; no model, no network.

    Tokens are hashed into ``dim`` buckets with a sign bit, so any non-empty
    text maps to a non-zero vector and identical texts map to identical
    vectors. Quality is only good enough for tests and demos.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.provider_id = f"token-hash-{dim}"

    def _encode(self, text: str) -> EmbeddingVector:
        buckets = [0.0] * self.dim
        for token in text.lower().split():
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            index = int.from_bytes(digest[:4], "big") % self.dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            buckets[index] += sign
        if all(v == 0.0 for v in buckets):
            # Signs cancelled out; nudge the first token's bucket so the
            # vector stays usable for cosine.
            buckets[0] = 1.0
        norm = math.sqrt(sum(v * v for v in buckets))
        return EmbeddingVector(tuple(v / norm for v in buckets))

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self._encode(t) for t in texts]


class HttpEmbeddings:
    """Remote embedding service: POST {"texts": [...]} -> {"vectors": [[...]]}.

    Point it at any service hosting the sentence encoder of your choice; the
    provider_id should name the model so indexes are not silently mixed.
    """

    def __init__(self, endpoint: str, provider_id: str, dim: int,
                 api_key_env: str | None = None, timeout_s: float = 30.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint
        self.provider_id = provider_id
        self.dim = dim
        self._timeout_s = timeout_s
        self._session = session or requests.Session()
        self._headers = {}
        if api_key_env:
            token = os.environ.get(api_key_env, "")
            if token:
                self._headers["Authorization"] = f"Bearer {token}"

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        try:
            response = self._session.post(self.endpoint, json={"texts": list(texts)},
                                          headers=self._headers, timeout=self._timeout_s)
        except requests.RequestException as exc:
            raise TransportError(f"embedding service unreachable: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(
                f"embedding service returned HTTP {response.status_code}")
        try:
            vectors = response.json()["vectors"]
        except (ValueError, KeyError) as exc:
            raise PayloadError("embedding response missing 'vectors'",
                               fragment=response.text[:200]) from exc
        if len(vectors) != len(texts):
            raise PayloadError(
                f"asked for {len(texts)} vectors, got {len(vectors)}")
        return [EmbeddingVector(tuple(float(v) for v in vec)) for vec in vectors]


def embedder_from_config(config: Mapping[str, object]) -> EmbeddingProvider:
    """Build a provider from a config mapping with a ``kind`` discriminator."""
    kind = config.get("kind", "hash")
    if kind == "hash":
        return HashedEmbeddings(dim=int(config.get("dim", 64)))
    if kind == "precomputed":
        return PrecomputedEmbeddings.from_json(str(config["path"]),
                                               provider_id=config.get("provider_id"))
    if kind == "http":
        return HttpEmbeddings(
            endpoint=str(config["endpoint"]),
            provider_id=str(config.get("provider_id", "http")),
            dim=int(config["dim"]),
            api_key_env=config.get("api_key_env"),
        )
    raise ValueError(f"unknown embedder kind {kind!r}")


# ---------------------------------------------------------------------------
# Index
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndexEntry:
    ref: str
    text: str
    vector: EmbeddingVector


@dataclass(frozen=True)
class RankedMatch:
    ref: str
    score: float
    rank: int


class RetrievalIndex:
    """Immutable set of (ref, text, vector) entries sharing one provider."""

    def __init__(self, entries: Sequence[IndexEntry], provider_id: str):
        if not entries:
            raise ValueError("index must contain at least one entry")
        refs = [e.ref for e in entries]
        if len(set(refs)) != len(refs):
            dupes = sorted({r for r in refs if refs.count(r) > 1})
            raise ValueError(f"duplicate table refs in index: {dupes}")
        dims = {e.vector.dim for e in entries}
        if len(dims) != 1:
            raise ValueError(f"entries have mixed dimensions: {sorted(dims)}")
        self.entries = list(entries)
        self.provider_id = provider_id
        self.dim = dims.pop()
        self._matrix = np.asarray([e.vector.values for e in entries], dtype=np.float64)
        self._norms = np.linalg.norm(self._matrix, axis=1)
        if np.any(self._norms == 0.0):
            raise ValueError("index contains an all-zero vector")

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RetrievalIndex):
            return NotImplemented
        return (self.provider_id == other.provider_id
                and self.entries == other.entries)

    def scores_for(self, vector: EmbeddingVector) -> np.ndarray:
        if vector.dim != self.dim:
            raise ValueError(f"query dim {vector.dim} does not match index dim {self.dim}")
        if vector.is_zero():
            raise ValueError("cannot rank against the zero vector")
        q = np.asarray(vector.values, dtype=np.float64)
        return (self._matrix @ q) / (self._norms * np.linalg.norm(q))


def build_index(catalog: Sequence["TableMetadata"],
                provider: EmbeddingProvider) -> RetrievalIndex:
    """Encode every catalog entry's title+description into the index."""
    if not catalog:
        raise ValueError("catalog is empty")
    texts = [corpus_text(meta) for meta in catalog]
    vectors = provider.embed_batch(texts)
    entries = [
        IndexEntry(ref=meta.ref.id, text=text, vector=vec)
        for meta, text, vec in zip(catalog, texts, vectors)
    ]
    return RetrievalIndex(entries, provider_id=provider.provider_id)


def corpus_text(meta: "TableMetadata") -> str:
    return f"{meta.title}. {meta.description}"


def save_index(index: RetrievalIndex, index_dir: Path | str) -> None:
    index_dir = Path(index_dir)
    index_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "provider_id": index.provider_id,
        "dim": index.dim,
        "count": len(index),
        "corpus_text": CORPUS_TEXT,
    }
    (index_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    with (index_dir / "entries.jsonl").open("w", encoding="utf-8") as fh:
        for entry in index.entries:
            fh.write(json.dumps({"ref": entry.ref, "text": entry.text}) + "\n")
    np.save(index_dir / "vectors.npy",
            np.asarray([e.vector.values for e in index.entries], dtype=np.float64))


def load_index(index_dir: Path | str) -> RetrievalIndex:
    index_dir = Path(index_dir)
    manifest = json.loads((index_dir / "manifest.json").read_text(encoding="utf-8"))
    vectors = np.load(index_dir / "vectors.npy")
    entries = []
    with (index_dir / "entries.jsonl").open(encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            record = json.loads(line)
            entries.append(IndexEntry(ref=record["ref"], text=record["text"],
                                      vector=EmbeddingVector(tuple(vectors[i]))))
    if len(entries) != manifest["count"]:
        raise PayloadError(
            f"index manifest says {manifest['count']} entries, found {len(entries)}")
    return RetrievalIndex(entries, provider_id=manifest["provider_id"])


def query(index: RetrievalIndex, prompt: str, k: int,
          provider: EmbeddingProvider) -> list[RankedMatch]:
    """Top-k entries by cosine score, ties broken by lexicographic ref.

    ``k`` larger than the index simply returns everything ranked.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if provider.provider_id != index.provider_id:
        raise ProviderMismatchError(
            f"index was built with {index.provider_id!r}, "
            f"queried with {provider.provider_id!r}")
    vector = embed(prompt, provider)
    scores = index.scores_for(vector)
    order = sorted(range(len(index)),
                   key=lambda i: (-scores[i], index.entries[i].ref))
    return [
        RankedMatch(ref=index.entries[i].ref, score=float(scores[i]), rank=rank)
        for rank, i in enumerate(order[:k], start=1)
    ]


# ---------------------------------------------------------------------------
# Retrieval metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HitRates:
    n_queries: int
    hits_at: dict[int, float]


def exact_match_at_k(rankings: Mapping[str, int], ks: Sequence[int]) -> HitRates:
    """Fraction of queries whose gold table ranked within the top k.

    ``rankings`` maps each query to the 1-based rank its gold table achieved.
    """
    if not rankings:
        raise ValueError("no rankings given")
    for query_id, rank in rankings.items():
        if rank < 1:
            raise ValueError(f"gold rank for {query_id!r} must be >= 1, got {rank}")
    n = len(rankings)
    hits_at = {
        k: sum(1 for rank in rankings.values() if rank <= k) / n
        for k in sorted(ks)
    }
    return HitRates(n_queries=n, hits_at=hits_at)
