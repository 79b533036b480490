#!/usr/bin/env python3
"""Run every retrieval setting on the synthetic benchmark with the evidence-oracle mock.

Prints mean accuracy per setting next to recall@k_final split by question
group, which is what the evidence oracle measures. Everything runs in memory.
"""

import argparse
from collections import defaultdict

from ctirag.corpus import chunk_corpus
from ctirag.dense import Embedder, EmbedderSpec, build_dense_index
from ctirag.evaluation import format_table, make_setting, run_setting
from ctirag.fusion import FusionConfig, HybridRetriever
from ctirag.generation import GenerationParams
from ctirag.sparse import build_sparse_index
from ctirag.synthetic import GROUPS, make_synthetic_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--questions", type=int, default=30)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--dim", type=int, default=256)
    ap.add_argument("--iterations", type=int, default=10)
    args = ap.parse_args()

    bench = make_synthetic_benchmark(args.questions, args.seed)
    chunks = chunk_corpus(bench.documents)
    emb = Embedder(EmbedderSpec(dim=args.dim))
    retriever = HybridRetriever(chunks, build_sparse_index(chunks), build_dense_index(chunks, emb), emb)
    mock = GenerationParams(mock_mode=True)

    reports = []
    for name in ("no_rag", "baseline_rag", "hybrid", "hybrid_regex"):
        setting = make_setting(name, FusionConfig(alpha=args.alpha), mock)
        reports.append(run_setting(bench.questions, retriever, setting, args.iterations, args.seed))
    print(format_table(reports))

    print()
    print(f"{'setting':<14}" + "".join(f"{g:>10}" for g in GROUPS))
    for rep in reports:
        by_group = defaultdict(list)
        for rec in rep.records:
            if rec.iteration == 0:
                by_group[bench.groups[rec.qid]].append(rec.correct)
        print(f"{rep.setting:<14}" + "".join(
            f"{sum(by_group[g]) / len(by_group[g]):>10.2f}" if by_group[g] else f"{'-':>10}" for g in GROUPS))


if __name__ == "__main__":
    main()
