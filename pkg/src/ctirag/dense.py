"""Dense embeddings and exact cosine top-k search."""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import httpx
import numpy as np

from ctirag.errors import ContractError, IndexFormatError, TransportError
from ctirag.sparse import tokenize

INDEX_VERSION = 1
EMBEDDER_KINDS = ("deterministic_test", "http_service")

# token-less text embeds onto this sentinel's bucket so the output stays unit-norm
_EMPTY_SENTINEL = "\x00<empty>"


@dataclass(frozen=True)
class EmbedderSpec:
    kind: str = "deterministic_test"
    dim: int = 256
    endpoint: str = ""
    model_name: str = ""
    timeout: float = 30.0
    max_retries: int = 3
    backoff: float = 0.5
    max_in_flight: int = 4
    batch_size: int = 32

    def __post_init__(self):
        if self.kind not in EMBEDDER_KINDS:
            raise ContractError(f"unknown embedder kind {self.kind!r}")
        if self.dim < 1:
            raise ContractError(f"dim must be >= 1, got {self.dim}")
        if self.kind == "http_service" and not (self.endpoint and self.model_name):
            raise ContractError("http_service embedder needs endpoint and model_name")


def bucket(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


def hashed_embedding(text: str, dim: int) -> np.ndarray:
    """L2-normalized hashed bag-of-tokens vector."""
    vec = np.zeros(dim, dtype=np.float64)
    tokens = tokenize(text) or [_EMPTY_SENTINEL]
    for tok in tokens:
        vec[bucket(tok, dim)] += 1.0
    return vec / np.linalg.norm(vec)


class HttpEmbedder:
    """Client for an embeddings endpoint speaking ``{"model", "input": [...]}``.

    The bearer token comes from ``EMBEDDINGS_API_KEY``. At most
    ``spec.max_in_flight`` requests run concurrently across threads.
    """

    def __init__(self, spec: EmbedderSpec, client: httpx.Client | None = None):
        self.spec = spec
        self._client = client or httpx.Client(timeout=spec.timeout)
        self._gate = threading.BoundedSemaphore(max(1, spec.max_in_flight))

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get("EMBEDDINGS_API_KEY", "").strip()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, texts: list[str]) -> list[list[float]]:
        payload = {"model": self.spec.model_name, "input": texts}
        last: TransportError | None = None
        for attempt in range(self.spec.max_retries + 1):
            if attempt:
                delay = self.spec.backoff * 2 ** (attempt - 1)
                if last is not None and last.retry_after is not None:
                    delay = max(delay, last.retry_after)
                time.sleep(delay)
            try:
                with self._gate:
                    resp = self._client.post(self.spec.endpoint, json=payload, headers=self._headers())
            except httpx.HTTPError as exc:
                last = TransportError(f"embedding request failed: {exc}")
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TransportError(
                    f"embedding service returned HTTP {resp.status_code}",
                    retry_after=_retry_after(resp),
                    status_code=resp.status_code,
                )
                continue
            if resp.status_code >= 400:
                raise TransportError(
                    f"embedding service returned HTTP {resp.status_code}: {resp.text[:200]}",
                    status_code=resp.status_code,
                )
            try:
                data = resp.json()["data"]
                return [list(map(float, item["embedding"])) for item in data]
            except (ValueError, KeyError, TypeError) as exc:
                raise ContractError(f"malformed embedding response: {exc}") from exc
        assert last is not None
        raise last

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        if any(not t for t in texts):
            raise ContractError("http_service embedder requires non-empty text")
        rows: list[list[float]] = []
        for i in range(0, len(texts), self.spec.batch_size):
            batch = list(texts[i:i + self.spec.batch_size])
            got = self._post(batch)
            if len(got) != len(batch):
                raise ContractError(f"expected {len(batch)} embeddings, got {len(got)}")
            rows.extend(got)
        out = np.asarray(rows, dtype=np.float64).reshape(len(rows), -1) if rows else np.zeros((0, self.spec.dim))
        if out.shape[1] != self.spec.dim:
            raise ContractError(f"embedding dim {out.shape[1]} != configured dim {self.spec.dim}")
        if not np.all(np.isfinite(out)):
            raise ContractError("embedding service returned non-finite values")
        return out


def _retry_after(resp: httpx.Response) -> float | None:
    value = resp.headers.get("Retry-After")
    if value is None:
        return None
    try:
        return float(value)
    except ValueError:
        return None


class Embedder:
    """Dispatches to the configured embedder kind."""

    def __init__(self, spec: EmbedderSpec, client: httpx.Client | None = None):
        self.spec = spec
        self.dim = spec.dim
        self._http = HttpEmbedder(spec, client) if spec.kind == "http_service" else None

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        if self._http is not None:
            return self._http.embed_many(texts)
        if not texts:
            return np.zeros((0, self.dim))
        return np.stack([hashed_embedding(t, self.dim) for t in texts])


def embed(spec: EmbedderSpec, text: str) -> np.ndarray:
    return Embedder(spec).embed(text)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ContractError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


class DenseIndex:
    """chunk_id -> vector store searched by brute-force cosine similarity."""

    def __init__(self, chunk_ids: Sequence[str], vectors, dim: int | None = None):
        mat = np.asarray(vectors, dtype=np.float64)
        if mat.size == 0:
            mat = mat.reshape(0, dim or 0)
        if mat.ndim != 2:
            raise ContractError("vectors must form a 2-D array")
        if dim is not None and mat.shape[1] != dim:
            raise ContractError(f"vector dim {mat.shape[1]} != index dim {dim}")
        if len(chunk_ids) != mat.shape[0]:
            raise ContractError("chunk_ids and vectors differ in length")
        if len(set(chunk_ids)) != len(chunk_ids):
            raise ContractError("duplicate chunk_id in dense index")
        if not np.all(np.isfinite(mat)):
            raise ContractError("non-finite embedding values")
        norms = np.linalg.norm(mat, axis=1)
        if np.any(norms == 0.0):
            raise ContractError("zero vector in dense index")
        self.chunk_ids = list(chunk_ids)
        self.vectors = mat
        self.dim = mat.shape[1]
        self._unit = mat / norms[:, None] if len(mat) else mat

    def __len__(self) -> int:
        return len(self.chunk_ids)

    def similarities(self, query_vec) -> np.ndarray:
        q = np.asarray(query_vec, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ContractError(f"query dim {q.shape} != index dim {self.dim}")
        nq = np.linalg.norm(q)
        if nq == 0.0:
            raise ContractError("cosine similarity is undefined for a zero vector")
        return np.clip(self._unit @ (q / nq), -1.0, 1.0)

    def top_k(self, query_vec, k: int) -> list[tuple[str, float]]:
        if k < 1:
            raise ContractError(f"k_dense must be >= 1, got {k}")
        if not self.chunk_ids:
            return []
        scores = (1.0 + self.similarities(query_vec)) / 2.0
        # rank on 12 decimals so cosines equal up to float noise (v vs 3v) tie by chunk_id
        keys = np.round(scores, 12)
        order = sorted(range(len(self.chunk_ids)), key=lambda i: (-keys[i], self.chunk_ids[i]))
        return [(self.chunk_ids[i], float(scores[i])) for i in order[:k]]

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": INDEX_VERSION,
            "dim": self.dim,
            "chunk_ids": self.chunk_ids,
            "vectors": self.vectors.reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DenseIndex":
        if d.get("version") != INDEX_VERSION:
            raise IndexFormatError(f"unsupported dense index version: {d.get('version')!r}")
        try:
            dim = int(d["dim"])
            ids = list(d["chunk_ids"])
            flat = np.asarray(d["vectors"], dtype=np.float64)
            mat = flat.reshape(len(ids), dim)
        except (KeyError, TypeError, ValueError) as exc:
            raise IndexFormatError(f"malformed dense index: {exc}") from exc
        return cls(ids, mat, dim)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DenseIndex":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise IndexFormatError(f"{path}: not valid JSON: {exc.msg}") from exc
        return cls.from_dict(data)


def build_dense_index(chunks: Iterable, embedder: Embedder) -> DenseIndex:
    chunks = list(chunks)
    vecs = embedder.embed_many([c.text for c in chunks])
    return DenseIndex([c.chunk_id for c in chunks], vecs, embedder.dim)


def dense_top_k(index: DenseIndex, query_vec, k_dense: int) -> list[tuple[str, float]]:
    """Exact top-k by ``(1 + cos) / 2``, ties by ascending chunk_id."""
    return index.top_k(query_vec, k_dense)
