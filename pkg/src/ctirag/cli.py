"""Command-line entry point: ``ctirag {ingest,index,query,eval}``.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O or malformed
input, 3 remote service failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from ctirag.config import AppConfig, load_config
from ctirag.corpus import FORMATS, chunk_corpus, load_corpus, read_chunk_store, write_chunk_store
from ctirag.dense import DenseIndex, Embedder, build_dense_index
from ctirag.errors import ContractError, IndexFormatError, RecordError, TransportError
from ctirag.evaluation import (
    SETTINGS,
    EvalAborted,
    format_table,
    load_benchmark,
    load_preformatted,
    make_setting,
    run_setting,
)
from ctirag.fusion import HybridRetriever
from ctirag.generation import AnswerSpace, build_prompt, generate_answer, parse_answer
from ctirag.sparse import SparseIndex, build_sparse_index

log = logging.getLogger("ctirag")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_TRANSPORT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ctirag", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--seed", type=int, help="seed echoed into reports (config: seed)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ing = sub.add_parser("ingest", help="load a corpus and write the chunk store")
    ing.add_argument("corpus", help="directory of text files or a JSONL file")
    ing.add_argument("--format", choices=FORMATS, help="default: jsonl for files, plain_text_dir otherwise")
    ing.add_argument("--out", help="chunk store path (config: paths.chunks)")

    idx = sub.add_parser("index", help="build sparse and dense indexes from the chunk store")
    idx.add_argument("--force", action="store_true", help="overwrite an index built with another dim")

    q = sub.add_parser("query", help="retrieve ranked contexts for a query")
    q.add_argument("text")
    q.add_argument("--alpha", type=float, help="config: fusion.alpha")
    q.add_argument("--k-final", type=int, help="config: fusion.k_final")
    q.add_argument("--no-regex", action="store_true", default=None, help="config: fusion.regex_boost_enabled = false")
    q.add_argument("--show-scores", action="store_true", default=None, help="config: query.show_scores")
    q.add_argument("--ask", action="store_true", default=None, help="also generate an answer (config: query.ask)")

    ev = sub.add_parser("eval", help="run benchmark settings and write reports")
    ev.add_argument("benchmark", nargs="?", help="benchmark JSONL (config: paths.benchmark)")
    ev.add_argument("--setting", action="append", choices=SETTINGS + ("all",),
                    help="repeatable (config: eval.settings)")
    ev.add_argument("--iterations", type=int, help="config: eval.iterations")
    ev.add_argument("--mock", action="store_true", default=None, help="config: generation.mock_mode")
    ev.add_argument("--mock-rule", help="config: eval.mock_rule")
    ev.add_argument("--parallelism", type=int, help="config: eval.parallelism")
    ev.add_argument("--preformatted", help="qid -> context file (config: paths.preformatted)")
    ev.add_argument("--report-dir", help="config: paths.reports")
    ev.add_argument("--temperature", type=float, help="config: generation.temperature")
    return p


def _apply_flags(cfg: AppConfig, args) -> AppConfig:
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.command == "ingest":
        cfg = cfg.override("paths", chunks=args.out)
    elif args.command == "query":
        cfg = cfg.override("fusion", alpha=args.alpha, k_final=args.k_final,
                           regex_boost_enabled=False if args.no_regex else None)
        cfg = cfg.override("query", show_scores=args.show_scores, ask=args.ask)
    elif args.command == "eval":
        settings = None
        if args.setting:
            if "all" in args.setting:
                # preformatted_context joins "all" only when a context file is known
                has_ctx = bool(args.preformatted or cfg.paths.preformatted)
                settings = tuple(s for s in SETTINGS if has_ctx or s != "preformatted_context")
            else:
                settings = tuple(dict.fromkeys(args.setting))
        cfg = cfg.override("eval", settings=settings, iterations=args.iterations,
                           mock_rule=args.mock_rule, parallelism=args.parallelism)
        cfg = cfg.override("generation", mock_mode=args.mock, temperature=args.temperature)
        cfg = cfg.override("paths", benchmark=args.benchmark, preformatted=args.preformatted,
                           reports=args.report_dir)
    return cfg


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(cfg: AppConfig, corpus_path, fmt: str | None = None) -> dict:
    corpus_path = Path(corpus_path)
    if fmt is None:
        fmt = "jsonl" if corpus_path.is_file() else "plain_text_dir"
    loaded = load_corpus(corpus_path, fmt)
    chunks = chunk_corpus(loaded.documents, cfg.chunker)
    store = Path(cfg.paths.chunks)
    write_chunk_store(chunks, store)
    summary = {"documents": len(loaded.documents), "chunks": len(chunks), "skipped": loaded.skipped}
    store.with_name(store.stem + ".summary.json").write_text(
        json.dumps(summary, sort_keys=True) + "\n", encoding="utf-8")
    if not loaded.documents:
        log.warning("no documents found in %s; wrote an empty chunk store", corpus_path)
    print(f"ingested {summary['documents']} document(s) -> {summary['chunks']} chunk(s), "
          f"skipped {summary['skipped']}; store: {store}")
    return summary


def cmd_index(cfg: AppConfig, force: bool = False) -> tuple[SparseIndex, DenseIndex]:
    store = Path(cfg.paths.chunks)
    if not store.exists():
        raise FileNotFoundError(f"chunk store not found: {store} (run `ctirag ingest` first)")
    dense_path = Path(cfg.paths.dense_index)
    if dense_path.exists() and not force:
        stored = DenseIndex.load(dense_path)
        if len(stored) and stored.dim != cfg.embedder.dim:
            raise ContractError(
                f"{dense_path} has dim {stored.dim} but the configured embedder has dim "
                f"{cfg.embedder.dim}; pass --force to rebuild"
            )
    chunks = read_chunk_store(store)
    sparse = build_sparse_index(chunks, cfg.bm25)
    dense = build_dense_index(chunks, Embedder(cfg.embedder))
    sparse.save(cfg.paths.sparse_index)
    dense.save(dense_path)
    print(f"sparse index: {sparse.n_docs} chunks, {len(sparse.postings)} terms, "
          f"avgdl {sparse.avgdl:.2f} -> {cfg.paths.sparse_index}")
    print(f"dense index: {len(dense)} chunks, dim {dense.dim} -> {dense_path}")
    return sparse, dense


def load_retriever(cfg: AppConfig) -> HybridRetriever:
    for label, p in (("chunk store", cfg.paths.chunks), ("sparse index", cfg.paths.sparse_index),
                     ("dense index", cfg.paths.dense_index)):
        if not Path(p).exists():
            raise FileNotFoundError(f"{label} not found: {p} (run `ctirag ingest` and `ctirag index`)")
    chunks = read_chunk_store(cfg.paths.chunks)
    sparse = SparseIndex.load(cfg.paths.sparse_index)
    dense = DenseIndex.load(cfg.paths.dense_index)
    if len(dense) and dense.dim != cfg.embedder.dim:
        raise ContractError(
            f"dense index dim {dense.dim} does not match configured embedder dim {cfg.embedder.dim}"
        )
    return HybridRetriever(chunks, sparse, dense, Embedder(cfg.embedder))


def _snippet(text: str, width: int = 70) -> str:
    flat = " ".join(text.split())
    return flat if len(flat) <= width else flat[: width - 3] + "..."


def cmd_query(cfg: AppConfig, text: str) -> list:
    retriever = load_retriever(cfg)
    hits = retriever.retrieve(text, cfg.fusion)
    f = cfg.fusion
    print(f"query: {text}")
    print(f"alpha={f.alpha} k_sparse={f.k_sparse} k_dense={f.k_dense} k_final={f.k_final} "
          f"regex_boost={'on' if f.regex_boost_enabled else 'off'}")
    if cfg.query.show_scores:
        print(f"{'rank':>4}  {'chunk_id':<28} {'sparse':>9} {'dense':>9} {'boost':>6} {'fused':>9}  text")
        for rank, (chunk, sc) in enumerate(hits, 1):
            print(f"{rank:>4}  {chunk.chunk_id:<28} {sc.sparse_score_norm:>9.6f} {sc.dense_score:>9.6f} "
                  f"{sc.boost:>6.3f} {sc.fused_score:>9.6f}  {_snippet(chunk.text)}")
    else:
        for rank, (chunk, sc) in enumerate(hits, 1):
            print(f"{rank:>4}  {chunk.chunk_id:<28} {sc.fused_score:>9.6f}  {_snippet(chunk.text)}")
    if cfg.query.ask:
        prompt = build_prompt(text, [c for c, _ in hits], cfg.template)
        space = AnswerSpace.true_false()
        raw = generate_answer(prompt, cfg.generation, mock_rule=lambda _p: space.labels[0])
        label = parse_answer(raw, space)
        print(f"answer: {raw.strip()!r} (parsed: {label if label is not None else 'parse failure'})")
    return hits


def cmd_eval(cfg: AppConfig) -> list:
    if not cfg.paths.benchmark:
        raise UsageError("no benchmark given (positional argument or paths.benchmark)")
    questions = load_benchmark(cfg.paths.benchmark)
    settings = cfg.eval.settings
    retriever = None
    if any(s in ("baseline_rag", "hybrid", "hybrid_regex") for s in settings):
        retriever = load_retriever(cfg)
    preformatted = None
    if "preformatted_context" in settings:
        if not cfg.paths.preformatted:
            raise UsageError("preformatted_context needs --preformatted or paths.preformatted")
        preformatted = load_preformatted(cfg.paths.preformatted)

    report_dir = Path(cfg.paths.reports)
    reports = []
    for name in settings:
        setting = make_setting(name, cfg.fusion, cfg.generation)
        report = run_setting(
            questions, retriever, setting, cfg.eval.iterations, cfg.seed,
            mock_rule=cfg.eval.mock_rule,
            template=cfg.template,
            preformatted=preformatted,
            parallelism=cfg.eval.parallelism,
            checkpoint=None if cfg.generation.mock_mode else report_dir / f"{name}.checkpoint.json",
            config=cfg.to_dict(),
        )
        report.save(report_dir / f"{name}.json")
        ckpt = report_dir / f"{name}.checkpoint.json"
        if ckpt.exists():
            ckpt.unlink()
        reports.append(report)
    print(format_table(reports))
    print(f"reports written to {report_dir}")
    return reports


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_flags(load_config(args.config), args)
        if args.command == "ingest":
            cmd_ingest(cfg, args.corpus, args.format)
        elif args.command == "index":
            cmd_index(cfg, force=args.force)
        elif args.command == "query":
            cmd_query(cfg, args.text)
        elif args.command == "eval":
            cmd_eval(cfg)
    except (UsageError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RecordError, IndexFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EvalAborted as exc:
        print(f"aborted: {exc}; progress saved to {exc.checkpoint}", file=sys.stderr)
        return EXIT_TRANSPORT
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
