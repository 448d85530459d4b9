"""Sparse and dense retrieval over code units, fused by reciprocal rank.

The sparse side is BM25 over identifier-aware tokens; the dense side is
cosine over unit-normalized vectors from a pluggable embedding provider.
Sub-indices are kept per unit kind so file-level and symbol-level queries
stay separable, and results merge deterministically (score descending,
unit id ascending).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .errors import ProviderUnavailable
from .repo_model import CodeUnit, UnitKind

logger = logging.getLogger(__name__)

BM25_K1 = 1.2
BM25_B = 0.75
RRF_CONSTANT = 60

_WORD_RE = re.compile(r"[A-Za-z0-9_]+")
_SUBTOKEN_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z0-9])|[A-Z]?[a-z0-9]+|[A-Z]+|[0-9]+")


def tokenize_code(text: str) -> list[str]:
    """Lowercased sub-tokens plus compound tokens, in original order.

    ``getUserName`` yields ``[get, user, name, getusername]`` and
    ``load_data_frame`` yields its three words plus the compound form.
    Single-word identifiers are emitted once.
    """
    tokens: list[str] = []
    for word in _WORD_RE.findall(text):
        subs = [s.lower() for s in _SUBTOKEN_RE.findall(word)]
        compound = word.lower()
        if not subs:
            tokens.append(compound)
            continue
        tokens.extend(subs)
        if len(subs) > 1 or subs[0] != compound:
            tokens.append(compound)
    return tokens


@dataclass(frozen=True)
class RankedHit:
    unit_id: str
    score: float
    source: str
    rank: int


# ---------------------------------------------------------------------------
# sparse index (BM25)
# ---------------------------------------------------------------------------


@dataclass
class SparseIndex:
    postings: dict[str, tuple[tuple[str, int], ...]]  # term -> ((unit_id, tf), ...)
    doc_lengths: dict[str, int]
    avg_doc_length: float
    doc_count: int
    granularity: tuple[str, ...]


def build_sparse_index(entries: Sequence[tuple[str, str]], granularity: tuple[str, ...]) -> SparseIndex:
    """Index ``(unit_id, text)`` pairs; text is tokenized with tokenize_code."""
    postings: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    for unit_id, text in entries:
        tokens = tokenize_code(text)
        doc_lengths[unit_id] = len(tokens)
        for tok in tokens:
            bucket = postings.setdefault(tok, {})
            bucket[unit_id] = bucket.get(unit_id, 0) + 1
    frozen = {
        term: tuple(sorted(by_doc.items()))
        for term, by_doc in postings.items()
    }
    count = len(doc_lengths)
    avg = (sum(doc_lengths.values()) / count) if count else 0.0
    return SparseIndex(
        postings=frozen,
        doc_lengths=doc_lengths,
        avg_doc_length=avg,
        doc_count=count,
        granularity=tuple(granularity),
    )


def bm25_idf(doc_count: int, doc_freq: int) -> float:
    return math.log(1.0 + (doc_count - doc_freq + 0.5) / (doc_freq + 0.5))


def sparse_query(index: SparseIndex, terms: Sequence[str], k: int) -> list[RankedHit]:
    """Top-k BM25 hits; query term multiplicity is ignored.

    Units containing none of the query terms are excluded outright, and
    score ties break by unit id ascending.
    """
    if index.doc_count == 0 or k <= 0:
        return []
    unique_terms: list[str] = []
    seen: set[str] = set()
    for term in terms:
        if term not in seen:
            seen.add(term)
            unique_terms.append(term)
    scores: dict[str, float] = {}
    for term in unique_terms:
        posting = index.postings.get(term)
        if not posting:
            continue
        idf = bm25_idf(index.doc_count, len(posting))
        for unit_id, tf in posting:
            dl = index.doc_lengths[unit_id]
            denom = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / index.avg_doc_length)
            scores[unit_id] = scores.get(unit_id, 0.0) + idf * tf * (BM25_K1 + 1.0) / denom
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))[:k]
    return [
        RankedHit(unit_id=unit_id, score=score, source="sparse", rank=i + 1)
        for i, (unit_id, score) in enumerate(ranked)
    ]


# ---------------------------------------------------------------------------
# dense index
# ---------------------------------------------------------------------------


class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int

    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


def _normalize(vector: Sequence[float]) -> tuple[float, ...]:
    norm = math.sqrt(sum(v * v for v in vector))
    if norm == 0.0:
        unit = [0.0] * len(vector)
        if unit:
            unit[0] = 1.0
        return tuple(unit)
    return tuple(v / norm for v in vector)


class MockEmbeddingProvider:
    """Deterministic stand-in: vectors seeded from a digest of the text."""

    def __init__(self, dim: int = 64):
        self.dim = dim
        self.provider_id = f"mock-sha256/d{dim}"

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            rng = random.Random(int.from_bytes(digest[:8], "big"))
            out.append([rng.gauss(0.0, 1.0) for _ in range(self.dim)])
        return out


class HttpEmbeddingProvider:
    """POSTs ``{"texts": [...]}`` and expects ``{"vectors": [[...]]}``.

    One transport retry; after that the provider counts as unavailable
    and the caller degrades to sparse-only retrieval.
    """

    def __init__(self, url: str, dim: int, api_key: str | None = None, timeout: float = 10.0):
        self.url = url
        self.dim = dim
        self.api_key = api_key
        self.timeout = timeout
        self.provider_id = f"http/{url}/d{dim}"

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        body = json.dumps({"texts": list(texts)}).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for _ in range(2):
            try:
                req = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
                vectors = payload.get("vectors")
                if not isinstance(vectors, list) or len(vectors) != len(texts):
                    raise ProviderUnavailable("embedding response malformed")
                return [list(map(float, v)) for v in vectors]
            except ProviderUnavailable:
                raise
            except (urllib.error.URLError, OSError, ValueError, json.JSONDecodeError) as exc:
                last_error = exc
        raise ProviderUnavailable(f"embedding provider unreachable: {last_error}")


@dataclass
class DenseIndex:
    vectors: dict[str, tuple[float, ...]]
    dim: int
    provider_id: str


def embed_and_store(entries: Sequence[tuple[str, str]], provider: EmbeddingProvider) -> DenseIndex:
    texts = [text for _, text in entries]
    raw = provider.embed(texts) if texts else []
    vectors = {
        unit_id: _normalize(vec)
        for (unit_id, _), vec in zip(entries, raw)
    }
    return DenseIndex(vectors=vectors, dim=provider.dim, provider_id=provider.provider_id)


def dense_query(index: DenseIndex, query_vector: Sequence[float], k: int) -> list[RankedHit]:
    """Exhaustive cosine scan; vectors are unit length so dot suffices."""
    if not index.vectors or k <= 0:
        return []
    q = _normalize(query_vector)
    scored = [
        (sum(a * b for a, b in zip(q, vec)), unit_id)
        for unit_id, vec in index.vectors.items()
    ]
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [
        RankedHit(unit_id=unit_id, score=score, source="dense", rank=i + 1)
        for i, (score, unit_id) in enumerate(scored[:k])
    ]


# ---------------------------------------------------------------------------
# fusion
# ---------------------------------------------------------------------------


def fuse(sparse_hits: Sequence[RankedHit], dense_hits: Sequence[RankedHit], k: int) -> list[RankedHit]:
    """Reciprocal-rank fusion of the two streams."""
    fused: dict[str, float] = {}
    for hit in list(sparse_hits) + list(dense_hits):
        fused[hit.unit_id] = fused.get(hit.unit_id, 0.0) + 1.0 / (RRF_CONSTANT + hit.rank)
    ranked = sorted(fused.items(), key=lambda item: (-item[1], item[0]))[:k]
    return [
        RankedHit(unit_id=unit_id, score=score, source="fused", rank=i + 1)
        for i, (unit_id, score) in enumerate(ranked)
    ]


def relevance_weights(fused_hits: Sequence[RankedHit]) -> dict[str, float]:
    """Scores rescaled so the best fused hit is exactly 1.0."""
    if not fused_hits:
        return {}
    top = max(h.score for h in fused_hits)
    if top <= 0.0:
        return {h.unit_id: 0.0 for h in fused_hits}
    return {h.unit_id: h.score / top for h in fused_hits}


# ---------------------------------------------------------------------------
# repository-level assembly
# ---------------------------------------------------------------------------


@dataclass
class RepoIndices:
    sparse: dict[str, SparseIndex] = field(default_factory=dict)  # kind -> index
    dense: DenseIndex | None = None
    degraded: bool = False  # dense stream disabled after provider failure


def unit_index_text(unit: CodeUnit, file_text: str) -> str:
    """Text indexed for one unit: signature, docstring, then body."""
    lines = file_text.splitlines()
    if unit.kind is UnitKind.FILE:
        body = "\n".join(lines[unit.span[0] - 1 : unit.span[1]]) if unit.line_count else ""
    else:
        body = "\n".join(lines[unit.body_start_line - 1 : unit.span[1]])
    pieces = [unit.qualified_name, unit.signature or "", unit.docstring or "", body]
    return "\n".join(p for p in pieces if p)


def build_indices(
    units: Sequence[CodeUnit],
    texts: dict[str, str],
    provider: EmbeddingProvider | None,
) -> RepoIndices:
    """Build per-kind sparse indices plus an optional dense index."""
    entries_by_kind: dict[str, list[tuple[str, str]]] = {}
    all_entries: list[tuple[str, str]] = []
    for unit in units:
        text = unit_index_text(unit, texts.get(unit.file_path, ""))
        entries_by_kind.setdefault(unit.kind.value, []).append((unit.unit_id, text))
        all_entries.append((unit.unit_id, text))
    sparse = {
        kind: build_sparse_index(entries, granularity=(kind,))
        for kind, entries in sorted(entries_by_kind.items())
    }
    dense: DenseIndex | None = None
    degraded = False
    if provider is not None:
        try:
            dense = embed_and_store(all_entries, provider)
        except ProviderUnavailable as exc:
            logger.warning("dense index disabled: %s", exc)
            degraded = True
    return RepoIndices(sparse=sparse, dense=dense, degraded=degraded)


def query_sparse_merged(indices: RepoIndices, terms: Sequence[str], k: int) -> list[RankedHit]:
    """Query every sub-index and merge by score, re-ranking the union."""
    merged: list[RankedHit] = []
    for kind in sorted(indices.sparse):
        merged.extend(sparse_query(indices.sparse[kind], terms, k))
    merged.sort(key=lambda h: (-h.score, h.unit_id))
    return [
        RankedHit(unit_id=h.unit_id, score=h.score, source="sparse", rank=i + 1)
        for i, h in enumerate(merged[:k])
    ]


def query_dense(
    indices: RepoIndices, query_text: str, provider: EmbeddingProvider | None, k: int
) -> list[RankedHit]:
    if indices.dense is None or provider is None:
        return []
    vec = provider.embed([query_text])[0]
    return dense_query(indices.dense, vec, k)


def hybrid_query(
    indices: RepoIndices,
    sparse_terms: Sequence[str],
    dense_text: str,
    provider: EmbeddingProvider | None,
    k: int,
) -> list[RankedHit]:
    sparse_hits = query_sparse_merged(indices, sparse_terms, k)
    try:
        dense_hits = query_dense(indices, dense_text, provider, k)
    except ProviderUnavailable:
        logger.warning("dense query unavailable; continuing sparse-only")
        dense_hits = []
    if not dense_hits:
        # degenerate fusion keeps sparse ordering but normalized scoring
        return fuse(sparse_hits, [], k)
    return fuse(sparse_hits, dense_hits, k)
