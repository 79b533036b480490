"""Hybrid BM25 + dense retrieval with CVE-id boosting for threat-intel RAG."""

from ctirag.corpus import Chunk, ChunkerConfig, SourceDocument, chunk_document, load_corpus
from ctirag.dense import DenseIndex, Embedder, EmbedderSpec, cosine_similarity, dense_top_k
from ctirag.fusion import (
    FusionConfig,
    HybridRetriever,
    ScoredChunk,
    apply_regex_boost,
    extract_cve_ids,
    fuse,
    min_max_normalize,
    retrieve_hybrid,
)
from ctirag.sparse import BM25Params, SparseIndex, bm25_score, build_sparse_index, sparse_top_k, tokenize

__all__ = [
    "BM25Params",
    "Chunk",
    "ChunkerConfig",
    "DenseIndex",
    "Embedder",
    "EmbedderSpec",
    "FusionConfig",
    "HybridRetriever",
    "ScoredChunk",
    "SourceDocument",
    "SparseIndex",
    "apply_regex_boost",
    "bm25_score",
    "build_sparse_index",
    "chunk_document",
    "cosine_similarity",
    "dense_top_k",
    "extract_cve_ids",
    "fuse",
    "load_corpus",
    "min_max_normalize",
    "retrieve_hybrid",
    "sparse_top_k",
    "tokenize",
]
