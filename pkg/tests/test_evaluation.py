import json
import math

import httpx
import pytest

from ctirag.corpus import ChunkerConfig, chunk_corpus
from ctirag.dense import Embedder, EmbedderSpec, build_dense_index
from ctirag.errors import ContractError, RecordError
from ctirag.evaluation import (
    BenchmarkQuestion,
    EvalAborted,
    EvalSetting,
    accuracy_stats,
    format_table,
    load_benchmark,
    load_preformatted,
    make_setting,
    run_setting,
    write_benchmark,
)
from ctirag.fusion import FusionConfig, HybridRetriever
from ctirag.generation import AnswerSpace, ChatClient, GenerationParams
from ctirag.sparse import build_sparse_index
from ctirag.synthetic import make_synthetic_benchmark

MOCK = GenerationParams(mock_mode=True)


def _write(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def test_load_many_tf(tmp_path):
    recs = [{"qid": f"q{i}", "question": f"Is {i} even?", "type": "tf",
             "answer": "T" if i % 2 == 0 else "FALSE"} for i in range(466)]
    qs = load_benchmark(_write(tmp_path / "kcv.jsonl", recs))
    assert len(qs) == 466
    assert qs[1].gold_label == "F" and qs[0].answer_space.labels == ("T", "F")


def test_load_mcq(tmp_path):
    rec = {"qid": "m1", "question": "Which?", "type": "mcq", "options": ["w", "x", "y", "z"], "answer": "c"}
    (q,) = load_benchmark(_write(tmp_path / "b.jsonl", [rec]))
    assert q.answer_space.labels == ("A", "B", "C", "D") and q.gold_label == "C"
    assert q.prompt_text() == "Which?\nA. w\nB. x\nC. y\nD. z"


def test_load_errors_carry_line_numbers(tmp_path):
    ok = {"qid": "a", "question": "?", "type": "tf", "answer": "T"}
    bad_label = {"qid": "b", "question": "?", "type": "mcq", "options": list("wxyz"), "answer": "E"}
    with pytest.raises(RecordError) as info:
        load_benchmark(_write(tmp_path / "x.jsonl", [ok, bad_label]))
    assert info.value.line_no == 2
    with pytest.raises(RecordError) as info:
        load_benchmark(_write(tmp_path / "y.jsonl", [ok, ok]))
    assert info.value.line_no == 2 and "duplicate" in str(info.value)
    (tmp_path / "z.jsonl").write_text('{"qid": "a",\n', encoding="utf-8")
    with pytest.raises(RecordError):
        load_benchmark(tmp_path / "z.jsonl")


def test_benchmark_roundtrip(tmp_path):
    qs = make_synthetic_benchmark(6).questions
    write_benchmark(qs, tmp_path / "s.jsonl")
    assert load_benchmark(tmp_path / "s.jsonl") == qs


@pytest.mark.parametrize("values,expected", [
    ([0.5, 0.5, 0.5], (0.5, 0.0)),
    ([0.0, 1.0], (0.5, 0.5)),
])
def test_accuracy_stats_examples(values, expected):
    assert accuracy_stats(values) == expected


def test_accuracy_stats_ten_values():
    # hand computation with exact fractions: mean 67/100, variance 51/10000
    v = [0.60, 0.70, 0.65, 0.80, 0.55, 0.70, 0.75, 0.60, 0.65, 0.70]
    mean, sd = accuracy_stats(v)
    assert mean == pytest.approx(0.67, abs=1e-12)
    assert sd == pytest.approx(math.sqrt(51) / 100, abs=1e-12)


def test_accuracy_stats_empty():
    with pytest.raises(ContractError):
        accuracy_stats([])


def test_setting_invariants():
    with pytest.raises(ContractError):
        EvalSetting("no_rag", FusionConfig(), MOCK)
    with pytest.raises(ContractError):
        EvalSetting("hybrid_regex", FusionConfig(regex_boost_enabled=False), MOCK)
    with pytest.raises(ContractError):
        EvalSetting("baseline_rag", FusionConfig(alpha=0.5, regex_boost_enabled=False), MOCK)
    b = make_setting("baseline_rag", FusionConfig(alpha=0.7))
    assert b.fusion.alpha == 0.0 and not b.fusion.regex_boost_enabled
    assert make_setting("hybrid", FusionConfig(alpha=0.7)).fusion.alpha == 0.7


def _tf(n, gold="T"):
    return [BenchmarkQuestion(f"q{i}", f"question {i}?", AnswerSpace.true_false(), gold) for i in range(n)]


def test_first_label_mock_perfect():
    rep = run_setting(_tf(5), None, make_setting("no_rag", generation=MOCK), 10, mock_rule="first_label")
    assert rep.per_iteration_accuracy == [1.0] * 10 and rep.stddev == 0.0
    assert len(rep.records) == 50


def test_first_label_mock_wrong_gold():
    rep = run_setting(_tf(4, "F"), None, make_setting("no_rag", generation=MOCK), 3, mock_rule="first_label")
    assert rep.mean == 0.0


def _synthetic_retriever(n=30, seed=7):
    bench = make_synthetic_benchmark(n, seed)
    chunks = chunk_corpus(bench.documents, ChunkerConfig())
    emb = Embedder(EmbedderSpec())
    return bench, HybridRetriever(chunks, build_sparse_index(chunks), build_dense_index(chunks, emb), emb)


def test_evidence_oracle_equals_recall():
    bench, retriever = _synthetic_retriever()
    for name in ("baseline_rag", "hybrid", "hybrid_regex"):
        setting = make_setting(name, FusionConfig(), MOCK)
        rep = run_setting(bench.questions, retriever, setting, 3)
        hits = 0
        for q in bench.questions:
            if name == "baseline_rag":
                texts = [c.text for c, _ in retriever.retrieve_dense(q.question, 3)]
            else:
                texts = [c.text for c, _ in retriever.retrieve(q.question, setting.fusion)]
            hits += any(q.gold_evidence in t for t in texts)
        assert rep.per_iteration_accuracy == [hits / len(bench.questions)] * 3


def test_no_rag_fails_evidence_oracle():
    bench, _ = _synthetic_retriever(6)
    rep = run_setting(bench.questions, None, make_setting("no_rag", generation=MOCK), 2)
    assert rep.mean == 0.0


def test_retrieval_setting_needs_indexes():
    with pytest.raises(ContractError):
        run_setting(_tf(1), None, make_setting("hybrid", generation=MOCK), 1)


def test_preformatted(tmp_path):
    bench, _ = _synthetic_retriever(6)
    ctx = {q.qid: f"notes: {q.gold_evidence}" for q in bench.questions}
    (tmp_path / "c.json").write_text(json.dumps(ctx), encoding="utf-8")
    (tmp_path / "c.jsonl").write_text("".join(json.dumps({"qid": k, "context": v}) + "\n"
                                              for k, v in ctx.items()), encoding="utf-8")
    assert load_preformatted(tmp_path / "c.json") == load_preformatted(tmp_path / "c.jsonl") == ctx
    rep = run_setting(bench.questions, None, make_setting("preformatted_context", generation=MOCK), 2,
                      preformatted=ctx)
    assert rep.mean == 1.0
    with pytest.raises(ContractError):
        run_setting(bench.questions, None, make_setting("preformatted_context", generation=MOCK), 1,
                    preformatted={})


def test_report_reproducible_and_parallel_invariant():
    bench, retriever = _synthetic_retriever(9)
    setting = make_setting("hybrid_regex", FusionConfig(), MOCK)
    a = run_setting(bench.questions, retriever, setting, 2, seed=5).to_json()
    b = run_setting(bench.questions, retriever, setting, 2, seed=5, parallelism=4).to_json()
    assert a == b
    d = json.loads(a)
    assert d["stddev_convention"] == "population"
    assert (d["mean"], d["stddev"]) == accuracy_stats(d["per_iteration_accuracy"])


def test_parse_failures_recorded():
    q = _tf(2)
    rep = run_setting(q, None, make_setting("no_rag", generation=MOCK), 1, mock_rule="first_label")
    assert rep.parse_failures == 0
    client = ChatClient(GenerationParams(endpoint="http://x/"), httpx.Client(transport=httpx.MockTransport(
        lambda r: httpx.Response(200, json={"choices": [{"message": {"content": "maybe"}}]}))))
    rep = run_setting(q, None, make_setting("no_rag"), 1, client=client)
    assert rep.parse_failures == 2 and rep.mean == 0.0
    assert "parse fails" in format_table([rep])


def test_checkpoint_resume(tmp_path):
    state = {"calls": 0, "fail_at": 5}

    def handler(request):
        state["calls"] += 1
        if state["calls"] == state["fail_at"]:
            return httpx.Response(503)
        return httpx.Response(200, json={"choices": [{"message": {"content": "T"}}]})

    params = GenerationParams(endpoint="http://x/", max_retries=0)
    client = ChatClient(params, httpx.Client(transport=httpx.MockTransport(handler)), sleep=lambda s: None)
    setting = make_setting("no_rag", generation=params)
    ckpt = tmp_path / "run.ckpt.json"
    qs = _tf(3)
    with pytest.raises(EvalAborted) as info:
        run_setting(qs, None, setting, 3, client=client, checkpoint=ckpt)
    assert info.value.checkpoint == ckpt and ckpt.exists()
    saved = json.loads(ckpt.read_text())
    assert len(saved["completed"]) == 1 and len(saved["partial"]) == 2

    rep = run_setting(qs, None, setting, 3, client=client, checkpoint=ckpt)
    assert rep.per_iteration_accuracy == [1.0, 1.0, 1.0]
    assert state["calls"] == 10  # 9 answers + the one failed attempt
