"""Weighted sparse/dense score fusion with a CVE identifier boost."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from ctirag.corpus import Chunk
from ctirag.dense import DenseIndex, Embedder
from ctirag.errors import ContractError
from ctirag.sparse import SparseIndex, tokenize

# the trailing guard keeps a 7-digit suffix from yielding a bogus 6-digit id
CVE_PATTERN = re.compile(r"CVE-[0-9]{4}-[0-9]{4,6}(?![0-9])")


@dataclass(frozen=True)
class FusionConfig:
    """alpha weights the normalized BM25 score, ``1 - alpha`` the dense score."""

    alpha: float = 0.5
    k_sparse: int = 10
    k_dense: int = 10
    k_final: int = 3
    regex_boost_enabled: bool = True
    boost_value: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ContractError(f"alpha must lie in [0, 1], got {self.alpha}")
        for name in ("k_sparse", "k_dense", "k_final"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.boost_value < 0:
            raise ContractError(f"boost_value must be >= 0, got {self.boost_value}")


@dataclass(frozen=True)
class ScoredChunk:
    chunk_id: str
    sparse_score_norm: float
    dense_score: float
    boost: float
    fused_score: float


def _rank_key(sc: ScoredChunk):
    return (-sc.fused_score, sc.chunk_id)


def min_max_normalize(scores: Sequence[float]) -> list[float]:
    """Rescale to [0, 1]; a constant list maps to all 1.0."""
    if len(scores) == 0:
        raise ContractError("cannot normalize an empty score list")
    lo, hi = min(scores), max(scores)
    if hi == lo:
        return [1.0] * len(scores)
    span = hi - lo
    return [(s - lo) / span for s in scores]


def extract_cve_ids(text: str) -> list[str]:
    return CVE_PATTERN.findall(text)


def fuse(
    sparse_candidates: Sequence[tuple[str, float]],
    dense_candidates: Sequence[tuple[str, float]],
    cfg: FusionConfig,
) -> list[ScoredChunk]:
    sparse_norm: dict[str, float] = {}
    if sparse_candidates:
        ids = [cid for cid, _ in sparse_candidates]
        sparse_norm = dict(zip(ids, min_max_normalize([s for _, s in sparse_candidates])))
    dense = dict(dense_candidates)

    out = []
    for cid in sparse_norm.keys() | dense.keys():
        s = sparse_norm.get(cid, 0.0)
        d = dense.get(cid, 0.0)
        out.append(ScoredChunk(cid, s, d, 0.0, cfg.alpha * s + (1.0 - cfg.alpha) * d))
    out.sort(key=_rank_key)
    return out


def apply_regex_boost(
    query: str,
    candidates: Sequence[ScoredChunk],
    chunk_texts: Mapping[str, str],
    cfg: FusionConfig,
) -> list[ScoredChunk]:
    """Add ``cfg.boost_value`` once to each candidate mentioning a queried CVE id.

    Ids are compared whole, so CVE-2024-12345 does not match CVE-2024-123456.
    """
    if not cfg.regex_boost_enabled:
        return list(candidates)
    ids = set(extract_cve_ids(query))
    if not ids:
        return list(candidates)
    out = []
    for sc in candidates:
        boost = cfg.boost_value if ids & set(extract_cve_ids(chunk_texts[sc.chunk_id])) else 0.0
        base = cfg.alpha * sc.sparse_score_norm + (1.0 - cfg.alpha) * sc.dense_score
        out.append(replace(sc, boost=boost, fused_score=base + boost))
    out.sort(key=_rank_key)
    return out


class HybridRetriever:
    """Sparse + dense retrieval over one chunk set."""

    def __init__(self, chunks: Sequence[Chunk], sparse_index: SparseIndex,
                 dense_index: DenseIndex, embedder: Embedder):
        self.chunks = {c.chunk_id: c for c in chunks}
        self.texts = {cid: c.text for cid, c in self.chunks.items()}
        self.sparse_index = sparse_index
        self.dense_index = dense_index
        self.embedder = embedder
        if dense_index.dim != embedder.dim and len(dense_index):
            raise ContractError(
                f"dense index dim {dense_index.dim} != embedder dim {embedder.dim}"
            )

    def scored(self, query: str, cfg: FusionConfig) -> list[ScoredChunk]:
        """Full fused + boosted candidate list, before k_final truncation."""
        sparse = self.sparse_index.top_k(tokenize(query), cfg.k_sparse)
        dense = []
        if len(self.dense_index):
            dense = self.dense_index.top_k(self.embedder.embed(query), cfg.k_dense)
        fused = fuse(sparse, dense, cfg)
        return apply_regex_boost(query, fused, self.texts, cfg)

    def retrieve(self, query: str, cfg: FusionConfig) -> list[tuple[Chunk, ScoredChunk]]:
        return [(self.chunks[sc.chunk_id], sc) for sc in self.scored(query, cfg)[:cfg.k_final]]

    def retrieve_dense(self, query: str, k: int) -> list[tuple[Chunk, float]]:
        """Dense-only retrieval, used by the baseline RAG setting."""
        if not len(self.dense_index):
            return []
        hits = self.dense_index.top_k(self.embedder.embed(query), k)
        return [(self.chunks[cid], score) for cid, score in hits]


def retrieve_hybrid(query: str, sparse_index: SparseIndex, dense_index: DenseIndex,
                    embedder: Embedder, cfg: FusionConfig,
                    chunks: Sequence[Chunk]) -> list[tuple[Chunk, ScoredChunk]]:
    return HybridRetriever(chunks, sparse_index, dense_index, embedder).retrieve(query, cfg)
