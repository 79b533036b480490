"""Tokenization and an Okapi BM25 inverted index."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ctirag.corpus import Chunk
from ctirag.errors import ContractError, IndexFormatError

INDEX_VERSION = 1


def _keep(ch: str) -> bool:
    return ch.isalnum() or ch == "-"


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip edge punctuation but keep hyphens.

    >>> tokenize("See CVE-2024-5022, (critical).")
    ['see', 'cve-2024-5022', 'critical']
    """
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and not _keep(raw[start]):
            start += 1
        while end > start and not _keep(raw[end - 1]):
            end -= 1
        if start < end:
            tokens.append(raw[start:end])
    return tokens


@dataclass(frozen=True)
class BM25Params:
    k1: float = 1.5
    b: float = 0.75

    def __post_init__(self):
        if not self.k1 > 0:
            raise ContractError(f"k1 must be > 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ContractError(f"b must lie in [0, 1], got {self.b}")


def idf(n_docs: int, df: int) -> float:
    """Smoothed Robertson/Sparck-Jones IDF; non-negative for 0 <= df <= n_docs."""
    return math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


@dataclass
class SparseIndex:
    """Inverted index over chunk token counts.

    ``postings`` maps term -> {chunk_id: term frequency}. Treat as immutable
    once built; queries never mutate it.
    """

    postings: dict[str, dict[str, int]]
    doc_lengths: dict[str, int]
    params: BM25Params = field(default_factory=BM25Params)

    def __post_init__(self):
        self.n_docs = len(self.doc_lengths)
        self.avgdl = sum(self.doc_lengths.values()) / self.n_docs if self.n_docs else 0.0

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        return idf(self.n_docs, self.df(term))

    def _term_score(self, term: str, tf: int, dl: int) -> float:
        k1, b = self.params.k1, self.params.b
        norm = 1.0 - b + b * dl / self.avgdl
        return self.idf(term) * tf * (k1 + 1.0) / (tf + k1 * norm)

    def score(self, query: Sequence[str], chunk_id: str) -> float:
        try:
            dl = self.doc_lengths[chunk_id]
        except KeyError:
            raise KeyError(f"chunk_id not in index: {chunk_id!r}") from None
        total = 0.0
        for term in query:
            tf = self.postings.get(term, {}).get(chunk_id, 0)
            if tf:
                total += self._term_score(term, tf, dl)
        return total

    def scores(self, query: Sequence[str]) -> dict[str, float]:
        """Scores for every chunk containing at least one query term."""
        out: dict[str, float] = {}
        for term in query:
            plist = self.postings.get(term)
            if not plist:
                continue
            for cid, tf in plist.items():
                out[cid] = out.get(cid, 0.0) + self._term_score(term, tf, self.doc_lengths[cid])
        return out

    def top_k(self, query: Sequence[str], k: int) -> list[tuple[str, float]]:
        if k < 1:
            raise ContractError(f"k_sparse must be >= 1, got {k}")
        ranked = sorted(
            ((cid, s) for cid, s in self.scores(query).items() if s > 0.0),
            key=lambda item: (-item[1], item[0]),
        )
        return ranked[:k]

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": INDEX_VERSION,
            "params": {"k1": self.params.k1, "b": self.params.b},
            "n_docs": self.n_docs,
            "avgdl": self.avgdl,
            "doc_lengths": self.doc_lengths,
            "postings": {
                term: [[cid, tf] for cid, tf in sorted(plist.items())]
                for term, plist in self.postings.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SparseIndex":
        if d.get("version") != INDEX_VERSION:
            raise IndexFormatError(f"unsupported sparse index version: {d.get('version')!r}")
        try:
            params = BM25Params(**d["params"])
            postings = {t: {cid: int(tf) for cid, tf in plist} for t, plist in d["postings"].items()}
            doc_lengths = {cid: int(n) for cid, n in d["doc_lengths"].items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise IndexFormatError(f"malformed sparse index: {exc}") from exc
        for plist in postings.values():
            missing = plist.keys() - doc_lengths.keys()
            if missing:
                raise IndexFormatError(f"postings reference unknown chunks: {sorted(missing)[:3]}")
        return cls(postings, doc_lengths, params)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SparseIndex":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise IndexFormatError(f"{path}: not valid JSON: {exc.msg}") from exc
        return cls.from_dict(data)


def build_sparse_index(chunks: Iterable[Chunk], params: BM25Params | None = None) -> SparseIndex:
    postings: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    for chunk in chunks:
        if chunk.chunk_id in doc_lengths:
            raise ContractError(f"duplicate chunk_id {chunk.chunk_id!r}")
        tokens = tokenize(chunk.text)
        doc_lengths[chunk.chunk_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, {})[chunk.chunk_id] = tf
    return SparseIndex(postings, doc_lengths, params or BM25Params())


def bm25_score(index: SparseIndex, query: Sequence[str], chunk_id: str) -> float:
    return index.score(query, chunk_id)


def sparse_top_k(index: SparseIndex, query: Sequence[str], k_sparse: int) -> list[tuple[str, float]]:
    """Positive-scoring chunks, best first, ties by ascending chunk_id."""
    return index.top_k(query, k_sparse)
