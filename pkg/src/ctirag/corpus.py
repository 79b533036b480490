"""Corpus loading and recursive character chunking."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ctirag.errors import ContractError, RecordError

log = logging.getLogger(__name__)

DEFAULT_SEPARATORS: tuple[str, ...] = ("\n\n", "\n", ". ", " ", "")

FORMATS = ("plain_text_dir", "jsonl", "pdf_extracted_text")


@dataclass(frozen=True)
class SourceDocument:
    doc_id: str
    text: str
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    text: str
    char_start: int
    char_end: int

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "text": self.text,
            "char_start": self.char_start,
            "char_end": self.char_end,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Chunk":
        return cls(d["chunk_id"], d["doc_id"], d["text"], int(d["char_start"]), int(d["char_end"]))


@dataclass(frozen=True)
class ChunkerConfig:
    chunk_size: int = 512
    overlap: int = 20
    separators: tuple[str, ...] = DEFAULT_SEPARATORS

    def __post_init__(self):
        if self.chunk_size < 1:
            raise ContractError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if not 0 <= self.overlap < self.chunk_size:
            raise ContractError(
                f"overlap must satisfy 0 <= overlap < chunk_size, got {self.overlap}"
            )
        # keep the hard character split reachable as a last resort
        if "" not in self.separators:
            object.__setattr__(self, "separators", tuple(self.separators) + ("",))
        else:
            object.__setattr__(self, "separators", tuple(self.separators))


@dataclass
class LoadResult:
    """Documents loaded from a corpus plus the number of records skipped."""

    documents: list[SourceDocument]
    skipped: int = 0

    def __iter__(self):
        return iter(self.documents)

    def __len__(self):
        return len(self.documents)


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def load_corpus(path, format: str = "plain_text_dir") -> LoadResult:
    """Read source documents from ``path``.

    ``plain_text_dir`` and ``pdf_extracted_text`` take a directory in which
    every regular file becomes one document (file name as ``doc_id``);
    ``pdf_extracted_text`` expects the text to have been extracted already.
    ``jsonl`` takes a file of ``{"id", "description", "metadata"?}`` records.
    Documents whose text is blank are skipped and counted.
    """
    path = Path(path)
    if format not in FORMATS:
        raise ContractError(f"unknown corpus format {format!r}; expected one of {FORMATS}")
    if not path.exists():
        raise FileNotFoundError(f"corpus path does not exist: {path}")
    if format == "jsonl":
        result = _load_jsonl(path)
    else:
        result = _load_dir(path)
    if result.skipped:
        log.warning("skipped %d empty record(s) in %s", result.skipped, path)
    return result


def _load_dir(path: Path) -> LoadResult:
    if not path.is_dir():
        raise NotADirectoryError(f"expected a directory of text files: {path}")
    docs: list[SourceDocument] = []
    skipped = 0
    for fp in sorted(p for p in path.iterdir() if p.is_file()):
        text = fp.read_text(encoding="utf-8")
        if not text.strip():
            skipped += 1
            continue
        docs.append(SourceDocument(fp.name, text, {"source": str(fp)}))
    return LoadResult(docs, skipped)


def _load_jsonl(path: Path) -> LoadResult:
    docs: list[SourceDocument] = []
    seen: set[str] = set()
    skipped = 0
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(rec, dict):
                raise RecordError(path, line_no, "record is not a JSON object")
            doc_id = rec.get("id")
            if not isinstance(doc_id, str) or not doc_id:
                raise RecordError(path, line_no, "missing string field 'id'")
            text = rec.get("description", "")
            if text is None:
                text = ""
            if not isinstance(text, str):
                raise RecordError(path, line_no, "field 'description' must be a string")
            meta = rec.get("metadata") or {}
            if not isinstance(meta, dict):
                raise RecordError(path, line_no, "field 'metadata' must be an object")
            if doc_id in seen:
                raise RecordError(path, line_no, f"duplicate id {doc_id!r}")
            seen.add(doc_id)
            if not text.strip():
                skipped += 1
                continue
            docs.append(SourceDocument(doc_id, text, {str(k): str(v) for k, v in meta.items()}))
    return LoadResult(docs, skipped)


# ---------------------------------------------------------------------------
# Chunking
# ---------------------------------------------------------------------------


def _split_on(text: str, start: int, end: int, sep: str) -> list[tuple[int, int]]:
    """Split ``text[start:end]`` after every occurrence of ``sep``.

    The separator stays attached to the fragment it terminates, so the
    fragments tile the input range exactly.
    """
    spans = []
    pos = start
    while True:
        hit = text.find(sep, pos, end)
        if hit < 0:
            break
        cut = hit + len(sep)
        spans.append((pos, cut))
        pos = cut
    if pos < end:
        spans.append((pos, end))
    return spans


def _fragments(text: str, start: int, end: int, seps: Sequence[str], size: int,
               step: int) -> list[tuple[int, int]]:
    if end - start <= size:
        return [(start, end)]
    sep, rest = seps[0], seps[1:]
    if sep == "":
        # hard split leaves room for the overlap prefix
        return [(i, min(i + step, end)) for i in range(start, end, step)]
    out = []
    for s, e in _split_on(text, start, end, sep):
        if e - s > size:
            out.extend(_fragments(text, s, e, rest, size, step))
        else:
            out.append((s, e))
    return out


def chunk_spans(text: str, cfg: ChunkerConfig) -> list[tuple[int, int]]:
    """Return ``(char_start, char_end)`` for each chunk of ``text``.

    Fragments from the separator hierarchy are merged greedily. Every chunk
    after the first starts up to ``overlap`` characters before its
    predecessor's end, provided the chunk still fits in ``chunk_size``.
    """
    if not text:
        return []
    frags = _fragments(text, 0, len(text), cfg.separators, cfg.chunk_size,
                       cfg.chunk_size - cfg.overlap)
    spans: list[tuple[int, int]] = []
    i = 0
    while i < len(frags):
        core_start, core_end = frags[i]
        ov = 0
        if spans:
            prev_start, prev_end = spans[-1]
            ov = min(cfg.overlap, prev_end - prev_start)
            if ov + (core_end - core_start) > cfg.chunk_size:
                ov = 0
        i += 1
        while i < len(frags) and ov + frags[i][1] - core_start <= cfg.chunk_size:
            core_end = frags[i][1]
            i += 1
        spans.append((core_start - ov, core_end))
    return spans


def chunk_document(doc: SourceDocument, cfg: ChunkerConfig | None = None) -> list[Chunk]:
    cfg = cfg or ChunkerConfig()
    return [
        Chunk(f"{doc.doc_id}#{n}", doc.doc_id, doc.text[s:e], s, e)
        for n, (s, e) in enumerate(chunk_spans(doc.text, cfg))
    ]


def chunk_corpus(docs: Iterable[SourceDocument], cfg: ChunkerConfig | None = None) -> list[Chunk]:
    cfg = cfg or ChunkerConfig()
    out: list[Chunk] = []
    for doc in docs:
        out.extend(chunk_document(doc, cfg))
    return out


def reconstruct(chunks: Sequence[Chunk]) -> str:
    """Concatenate one document's chunks with each leading overlap removed."""
    parts = []
    prev_end = None
    for c in chunks:
        skip = 0 if prev_end is None else prev_end - c.char_start
        parts.append(c.text[skip:])
        prev_end = c.char_end
    return "".join(parts)


def write_chunk_store(chunks: Sequence[Chunk], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for c in chunks:
            fh.write(json.dumps(c.to_dict(), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_chunk_store(path) -> list[Chunk]:
    path = Path(path)
    chunks = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                chunks.append(Chunk.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise RecordError(path, line_no, f"bad chunk record: {exc}") from exc
    return chunks
