#!/usr/bin/env python3
"""Write the synthetic CVE corpus and benchmark used by the mock evaluation."""

import argparse
import json
from collections import Counter

from ctirag.synthetic import make_synthetic_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir", help="directory for corpus.jsonl and benchmark.jsonl")
    ap.add_argument("--questions", type=int, default=30)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    bench = make_synthetic_benchmark(args.questions, args.seed)
    corpus, questions = bench.write(args.out_dir)
    (corpus.parent / "groups.json").write_text(json.dumps(bench.groups, indent=1, sort_keys=True) + "\n")
    print(f"{len(bench.documents)} records -> {corpus}")
    print(f"{len(bench.questions)} questions -> {questions}")
    print("groups:", dict(sorted(Counter(bench.groups.values()).items())))


if __name__ == "__main__":
    main()
