"""Benchmark harness: settings, mock answerers, repeated runs and reports."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from ctirag.errors import ContractError, RecordError, TransportError
from ctirag.fusion import FusionConfig, HybridRetriever
from ctirag.generation import (
    AnswerSpace,
    ChatClient,
    GenerationParams,
    PromptTemplate,
    build_prompt,
    generate_answer,
    parse_answer,
)

log = logging.getLogger(__name__)

SETTINGS = ("no_rag", "baseline_rag", "hybrid", "hybrid_regex", "preformatted_context")
RETRIEVAL_SETTINGS = ("baseline_rag", "hybrid", "hybrid_regex")
MOCK_RULES = ("evidence_oracle", "first_label")
STDDEV_CONVENTION = "population"


@dataclass(frozen=True)
class BenchmarkQuestion:
    qid: str
    question: str
    answer_space: AnswerSpace
    gold_label: str
    gold_evidence: str | None = None
    options: tuple[str, ...] = ()

    def __post_init__(self):
        if self.gold_label not in self.answer_space.labels:
            raise ContractError(
                f"{self.qid}: gold label {self.gold_label!r} not in {self.answer_space.labels}"
            )

    def prompt_text(self) -> str:
        """Question stem followed by lettered options, if any."""
        if not self.options:
            return self.question
        lines = [self.question]
        lines += [f"{lab}. {opt}" for lab, opt in zip(self.answer_space.labels, self.options)]
        return "\n".join(lines)


def load_benchmark(path) -> list[BenchmarkQuestion]:
    """Read ``{qid, question, type, options?, answer, evidence?}`` JSONL records."""
    path = Path(path)
    questions: list[BenchmarkQuestion] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            try:
                q = _question_from_record(rec)
            except (ContractError, KeyError, TypeError) as exc:
                msg = f"missing field {exc}" if isinstance(exc, KeyError) else str(exc)
                raise RecordError(path, line_no, msg) from exc
            if q.qid in seen:
                raise RecordError(path, line_no, f"duplicate qid {q.qid!r}")
            seen.add(q.qid)
            questions.append(q)
    return questions


def _question_from_record(rec: dict) -> BenchmarkQuestion:
    if not isinstance(rec, dict):
        raise ContractError("record is not a JSON object")
    qtype = rec["type"]
    options: tuple[str, ...] = ()
    if qtype == "tf":
        space = AnswerSpace.true_false()
    elif qtype == "mcq":
        options = tuple(str(o) for o in rec.get("options") or ())
        if not options:
            raise ContractError("mcq record needs a non-empty 'options' list")
        space = AnswerSpace.multiple_choice(len(options))
    else:
        raise ContractError(f"unknown question type {qtype!r} (expected 'tf' or 'mcq')")
    answer = str(rec["answer"]).strip().upper()
    if qtype == "tf" and answer in ("TRUE", "FALSE"):
        answer = answer[0]
    return BenchmarkQuestion(
        qid=str(rec["qid"]),
        question=str(rec["question"]),
        answer_space=space,
        gold_label=answer,
        gold_evidence=rec.get("evidence"),
        options=options,
    )


def write_benchmark(questions: Sequence[BenchmarkQuestion], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for q in questions:
            rec = {
                "qid": q.qid,
                "question": q.question,
                "type": "tf" if q.answer_space.kind == "true_false" else "mcq",
                "answer": q.gold_label,
            }
            if q.options:
                rec["options"] = list(q.options)
            if q.gold_evidence is not None:
                rec["evidence"] = q.gold_evidence
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Settings and mock answerers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalSetting:
    name: str
    fusion: FusionConfig | None
    generation: GenerationParams

    def __post_init__(self):
        if self.name not in SETTINGS:
            raise ContractError(f"unknown setting {self.name!r}; expected one of {SETTINGS}")
        if self.name in ("no_rag", "preformatted_context"):
            if self.fusion is not None:
                raise ContractError(f"{self.name} takes no fusion config")
            return
        if self.fusion is None:
            raise ContractError(f"{self.name} needs a fusion config")
        if self.name == "hybrid_regex" and not self.fusion.regex_boost_enabled:
            raise ContractError("hybrid_regex requires regex_boost_enabled")
        if self.name == "hybrid" and self.fusion.regex_boost_enabled:
            raise ContractError("hybrid runs without the regex boost")
        if self.name == "baseline_rag" and (self.fusion.alpha != 0.0 or self.fusion.regex_boost_enabled):
            raise ContractError("baseline_rag is dense-only: alpha 0, regex disabled")


def make_setting(name: str, fusion: FusionConfig | None = None,
                 generation: GenerationParams | None = None) -> EvalSetting:
    """Derive the canonical setting ``name`` from a base fusion config."""
    generation = generation or GenerationParams()
    base = fusion or FusionConfig()
    if name in ("no_rag", "preformatted_context"):
        return EvalSetting(name, None, generation)
    if name == "baseline_rag":
        return EvalSetting(name, replace(base, alpha=0.0, regex_boost_enabled=False), generation)
    if name == "hybrid":
        return EvalSetting(name, replace(base, regex_boost_enabled=False), generation)
    if name == "hybrid_regex":
        return EvalSetting(name, replace(base, regex_boost_enabled=True), generation)
    raise ContractError(f"unknown setting {name!r}; expected one of {SETTINGS}")


def first_label_rule(question: BenchmarkQuestion) -> Callable[[str], str]:
    label = question.answer_space.labels[0]
    return lambda prompt: label


def evidence_oracle_rule(question: BenchmarkQuestion) -> Callable[[str], str]:
    """Answer correctly iff the gold evidence string appears in the prompt.

    Otherwise answer the first label that is not gold. Questions without
    evidence are always answered wrongly.
    """
    gold = question.gold_label
    wrong = next((l for l in question.answer_space.labels if l != gold), gold)
    evidence = question.gold_evidence

    def rule(prompt: str) -> str:
        return gold if evidence and evidence in prompt else wrong

    return rule


MOCK_FACTORIES = {"evidence_oracle": evidence_oracle_rule, "first_label": first_label_rule}


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


@dataclass
class QuestionRecord:
    qid: str
    iteration: int
    predicted: str | None
    gold: str
    correct: bool
    retrieved: list[str]
    parse_failure: bool
    raw: str


@dataclass
class EvalReport:
    setting: str
    iterations: int
    per_iteration_accuracy: list[float]
    mean: float
    stddev: float
    seed: int
    n_questions: int
    records: list[QuestionRecord] = field(default_factory=list)
    stddev_convention: str = STDDEV_CONVENTION
    config: dict = field(default_factory=dict)

    @property
    def parse_failures(self) -> int:
        return sum(r.parse_failure for r in self.records)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["parse_failures"] = self.parse_failures
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")


def accuracy_stats(values: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation."""
    if len(values) == 0:
        raise ContractError("accuracy_stats needs at least one value")
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


class EvalAborted(RuntimeError):
    """A live run stopped on a transport error; progress is in ``checkpoint``."""

    def __init__(self, message: str, checkpoint: Path | None):
        super().__init__(message)
        self.checkpoint = checkpoint


def _contexts(q: BenchmarkQuestion, setting: EvalSetting, retriever: HybridRetriever | None,
              preformatted: Mapping[str, str] | None) -> tuple[list[str], list[str]]:
    """Context texts and their chunk ids for one question."""
    if setting.name == "no_rag":
        return [], []
    if setting.name == "preformatted_context":
        if preformatted is None or q.qid not in preformatted:
            raise ContractError(f"no preformatted context for question {q.qid!r}")
        return [preformatted[q.qid]], []
    if retriever is None:
        raise ContractError(f"setting {setting.name} needs built indexes")
    assert setting.fusion is not None
    if setting.name == "baseline_rag":
        hits = retriever.retrieve_dense(q.question, setting.fusion.k_final)
        return [c.text for c, _ in hits], [c.chunk_id for c, _ in hits]
    hits = retriever.retrieve(q.question, setting.fusion)
    return [c.text for c, _ in hits], [c.chunk_id for c, _ in hits]


def _load_checkpoint(path: Path | None, setting: str, seed: int, n_questions: int):
    if path is None or not path.exists():
        return [], {}
    data = json.loads(path.read_text(encoding="utf-8"))
    if (data.get("setting"), data.get("seed"), data.get("n_questions")) != (setting, seed, n_questions):
        log.warning("ignoring checkpoint %s from a different run", path)
        return [], {}
    done = [[QuestionRecord(**r) for r in it] for it in data["completed"]]
    partial = {r["qid"]: QuestionRecord(**r) for r in data.get("partial", [])}
    return done, partial


def _save_checkpoint(path: Path | None, setting: str, seed: int, n_questions: int,
                     done: list[list[QuestionRecord]], partial: Mapping[str, QuestionRecord]) -> None:
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "setting": setting,
        "seed": seed,
        "n_questions": n_questions,
        "completed": [[asdict(r) for r in it] for it in done],
        "partial": [asdict(r) for r in partial.values()],
    }
    path.write_text(json.dumps(data, indent=1, sort_keys=True), encoding="utf-8")


def run_setting(
    questions: Sequence[BenchmarkQuestion],
    retriever: HybridRetriever | None,
    setting: EvalSetting,
    iterations: int = 10,
    seed: int = 0,
    *,
    mock_rule: str = "evidence_oracle",
    client: ChatClient | None = None,
    template: PromptTemplate | None = None,
    preformatted: Mapping[str, str] | None = None,
    parallelism: int = 1,
    checkpoint: str | Path | None = None,
    config: dict | None = None,
) -> EvalReport:
    """Score ``questions`` under ``setting`` for ``iterations`` rounds.

    Retrieval is deterministic, so it runs once per question and is reused
    across iterations; only generation repeats. In live mode a transport
    error saves progress to ``checkpoint`` and raises :class:`EvalAborted`;
    calling again with the same checkpoint resumes.
    """
    if iterations < 1:
        raise ContractError(f"iterations must be >= 1, got {iterations}")
    if not questions:
        raise ContractError("benchmark is empty")
    gen = setting.generation
    if gen.mock_mode and mock_rule not in MOCK_FACTORIES:
        raise ContractError(f"unknown mock rule {mock_rule!r}; expected one of {MOCK_RULES}")
    if not gen.mock_mode and client is None:
        client = ChatClient(gen)
    ckpt = Path(checkpoint) if checkpoint is not None else None

    prepared = []
    for q in questions:
        texts, ids = _contexts(q, setting, retriever, preformatted)
        prompt = build_prompt(q.prompt_text(), texts, template)
        rule = MOCK_FACTORIES[mock_rule](q) if gen.mock_mode else None
        prepared.append((q, prompt, ids, rule))

    def ask(item, iteration: int) -> QuestionRecord:
        q, prompt, ids, rule = item
        raw = generate_answer(prompt, gen, mock_rule=rule, client=client)
        label = parse_answer(raw, q.answer_space)
        return QuestionRecord(q.qid, iteration, label, q.gold_label, label == q.gold_label,
                              list(ids), label is None, raw)

    done, partial = _load_checkpoint(ckpt, setting.name, seed, len(questions))
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        for it in range(len(done), iterations):
            todo = [p for p in prepared if p[0].qid not in partial]
            futures = [(p[0].qid, pool.submit(ask, p, it)) for p in todo]
            error: TransportError | None = None
            for qid, fut in futures:
                try:
                    partial[qid] = fut.result()
                except TransportError as exc:
                    error = error or exc
            if error is not None:
                _save_checkpoint(ckpt, setting.name, seed, len(questions), done, partial)
                raise EvalAborted(
                    f"{setting.name}: iteration {it + 1} aborted: {error}", ckpt
                ) from error
            done.append([partial[q.qid] for q in questions])
            partial = {}
            _save_checkpoint(ckpt, setting.name, seed, len(questions), done, partial)

    accs = [sum(r.correct for r in it) / len(questions) for it in done]
    mean, sd = accuracy_stats(accs)
    return EvalReport(
        setting=setting.name,
        iterations=iterations,
        per_iteration_accuracy=accs,
        mean=mean,
        stddev=sd,
        seed=seed,
        n_questions=len(questions),
        records=[r for it in done for r in it],
        config=dict(config or {}),
    )


def load_preformatted(path) -> dict[str, str]:
    """Read a qid -> context mapping from a JSON object or ``{qid, context}`` JSONL."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = None
    if isinstance(data, dict):
        return {str(k): str(v) for k, v in data.items()}
    out = {}
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out[str(rec["qid"])] = str(rec["context"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise RecordError(path, line_no, f"bad context record: {exc}") from exc
    return out


def format_table(reports: Sequence[EvalReport]) -> str:
    rows = [("setting", "iters", "accuracy (%)", "parse fails")]
    for r in reports:
        rows.append((r.setting, str(r.iterations),
                     f"{100 * r.mean:.1f} ± {100 * r.stddev:.2f}", str(r.parse_failures)))
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    lines.append(f"(σ: {STDDEV_CONVENTION} standard deviation over iterations)")
    return "\n".join(lines)
