"""Synthetic CVE corpus and benchmark for desk-scale checks of the harness.

Every question names one CVE id and has exactly one gold record carrying
a unique evidence string. Questions come in three groups of equal size:

``lexical``  the gold record restates the question closely; any retriever finds it.
``codename`` the gold record shares the CVE id, a rare component codename and the
             product name with the question; three distractors repeat the
             question's attack wording. The hashed dense embedder prefers the
             distractors, BM25 puts the gold record first.
``id_only``  the gold record shares nothing but the CVE id, and four distractors
             match the rest of the question. Only the regex boost lifts the gold
             record into the top 3.

Records are short enough to form a single chunk each.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from ctirag.corpus import SourceDocument
from ctirag.evaluation import BenchmarkQuestion, write_benchmark
from ctirag.generation import AnswerSpace

GROUPS = ("lexical", "codename", "id_only")

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr", "tr", "st")
_VOWELS = ("a", "e", "i", "o", "u")
_CODAS = ("", "n", "x", "r", "l", "s")

# id_only questions draw from their own pool so that no other record shares
# their attack wording; the other groups share the second pool
_ATTACKS = (
    ("heap overflow", "remote code execution"),
    ("path traversal", "arbitrary file read"),
    ("sql injection", "database disclosure"),
    ("cross-site scripting", "session hijacking"),
    ("use-after-free", "memory corruption"),
    ("integer underflow", "denial of service"),
    ("xml external entity", "server-side request forgery"),
    ("race condition", "privilege escalation"),
    ("format string", "information leak"),
    ("deserialization flaw", "gadget chain execution"),
)
_ATTACKS_SHARED = (
    ("stack exhaustion", "process crash"),
    ("open redirect", "credential phishing"),
    ("csrf token bypass", "account takeover"),
    ("ldap filter tampering", "directory enumeration"),
    ("prototype pollution", "logic hijack"),
    ("cache poisoning", "content spoofing"),
    ("signature bypass", "firmware tampering"),
    ("weak randomness", "token prediction"),
    ("clickjacking", "ui redress"),
    ("symlink following", "file overwrite"),
)

_FILLER = (
    "the vendor advisory lists mitigations for affected deployments",
    "researchers reported the issue through a coordinated disclosure program",
    "administrators should review access logs for anomalous requests",
    "the maintainers published guidance alongside updated packages",
    "no public exploit was observed at the time of publication",
    "operators running older branches are advised to upgrade promptly",
)


def _word(rng: random.Random, syllables: int = 3) -> str:
    return "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) + rng.choice(_CODAS)
                   for _ in range(syllables))


@dataclass
class SyntheticBenchmark:
    documents: list[SourceDocument]
    questions: list[BenchmarkQuestion]
    groups: dict[str, str]
    gold_doc: dict[str, str]

    def write(self, out_dir) -> tuple[Path, Path]:
        """Write ``corpus.jsonl`` and ``benchmark.jsonl`` under ``out_dir``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        corpus, bench = out_dir / "corpus.jsonl", out_dir / "benchmark.jsonl"
        with corpus.open("w", encoding="utf-8", newline="\n") as fh:
            for d in self.documents:
                fh.write(json.dumps({"id": d.doc_id, "description": d.text, "metadata": d.metadata},
                                    sort_keys=True) + "\n")
        write_benchmark(self.questions, bench)
        return corpus, bench


def make_synthetic_benchmark(n_questions: int = 30, seed: int = 7) -> SyntheticBenchmark:
    rng = random.Random(seed)
    docs: list[SourceDocument] = []
    questions: list[BenchmarkQuestion] = []
    groups: dict[str, str] = {}
    gold_doc: dict[str, str] = {}
    used_words: set[str] = set()
    used_ids: set[str] = set()

    def fresh_word() -> str:
        while True:
            w = _word(rng)
            if w not in used_words:
                used_words.add(w)
                return w

    def fresh_id() -> str:
        while True:
            cid = f"CVE-2024-{rng.randint(10000, 99999)}"
            if cid not in used_ids:
                used_ids.add(cid)
                return cid

    for i in range(n_questions):
        group = GROUPS[i % len(GROUPS)]
        qid = f"syn-{i:03d}"
        vendor, product, codename = fresh_word(), fresh_word(), fresh_word()
        if group == "id_only":
            flaw, impact = _ATTACKS[(i // 3) % len(_ATTACKS)]
        else:
            flaw, impact = _ATTACKS_SHARED[i % len(_ATTACKS_SHARED)]
        cve = fresh_id()
        build = f"{rng.randint(2, 9)}.{rng.randint(0, 20)}.{1000 + i}"
        evidence = f"resolved in build {build}"
        label = "T" if i % 2 == 0 else "F"

        if group == "lexical":
            question = f"Does {cve} in {vendor} {product} allow {impact} through a {flaw}?"
            gold = (f"{cve}: a {flaw} in {vendor} {product} allows {impact}. "
                    f"The {flaw} in {product} is reachable over the network. {evidence}.")
            distractors = [
                f"{other}: a {flaw} in {vendor} {product} leads to {impact} on affected "
                f"hosts; {rng.choice(_FILLER)}."
                for other in (fresh_id() for _ in range(2))
            ]
        elif group == "codename":
            question = (f"Is {cve} in the {codename} component of {vendor} {product} "
                        f"a {flaw} that leads to {impact}?")
            gold = f"{cve} affects the {codename} component of {vendor} {product}. {evidence}."
            distractors = [
                f"{other}: a {flaw} that leads to {impact} in the parser component; "
                f"the bug leads to {impact} when {rng.choice(_FILLER)}."
                for other in (fresh_id() for _ in range(3))
            ]
        else:
            question = f"Can {cve} in {vendor} {product} cause {impact} through a {flaw}?"
            gold = f"{cve} was {evidence}."
            distractors = [
                f"{other}: a {flaw} in {vendor} {product} can cause {impact}; "
                f"{vendor} {product} {rng.choice(_FILLER)}."
                for other in (fresh_id() for _ in range(4))
            ]

        docs.append(SourceDocument(cve, gold, {"group": group, "qid": qid}))
        gold_doc[qid] = cve
        for text in distractors:
            docs.append(SourceDocument(text.split(":", 1)[0], text, {"group": "distractor", "qid": qid}))

        questions.append(BenchmarkQuestion(qid, question, AnswerSpace.true_false(), label, evidence))
        groups[qid] = group

    docs.sort(key=lambda d: d.doc_id)
    return SyntheticBenchmark(docs, questions, groups, gold_doc)
