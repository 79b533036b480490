import json

import httpx
import pytest
from hypothesis import given, strategies as st

from ctirag.errors import ContractError, TransportError
from ctirag.generation import (
    AnswerSpace,
    ChatClient,
    GenerationParams,
    PromptTemplate,
    build_prompt,
    generate_answer,
    parse_answer,
)

from conftest import make_chunks

TF = AnswerSpace.true_false()
MC = AnswerSpace.multiple_choice()


def test_prompt_without_contexts():
    p = build_prompt("Is X true?", [])
    assert "Document" not in p and "Context:" not in p
    assert p.count("Is X true?") == 1
    assert p.endswith("Answer with a single letter.")


def test_prompt_with_contexts_in_order():
    chunks = make_chunks(["first text", "second text", "third text"])
    p = build_prompt("Q?", chunks)
    positions = [p.index(f"Document {i}: {t}") for i, t in
                 enumerate(["first text", "second text", "third text"], 1)]
    assert positions == sorted(positions)
    assert p.index("Context:") < positions[0] < p.index("Question: Q?")
    assert build_prompt("Q?", chunks) == p


def test_prompt_accepts_strings_and_custom_template():
    t = PromptTemplate(preamble="", context_header="", question_header="Q: ", answer_instruction="Go.")
    assert build_prompt("why", ["ctx"]) .count("Document 1: ctx") == 1
    assert build_prompt("why", ["ctx"], t) == "Document 1: ctx\n\nQ: why\nGo."


@given(st.text(min_size=1, max_size=50), st.lists(st.text(max_size=80), max_size=3))
def test_prompt_length_bound(question, contexts):
    t = PromptTemplate()
    p = build_prompt(question, contexts, t)
    overhead = len(t.preamble) + len(t.context_header) + len(t.question_header) + len(t.answer_instruction) + 40
    assert len(p) <= len(question) + sum(len(c) for c in contexts) + overhead + 16 * len(contexts)
    for c in contexts:
        assert c in p  # no silent truncation


@pytest.mark.parametrize("raw,space,expected", [
    (" t ", TF, "T"),
    ("B.", MC, "B"),
    ("maybe", TF, None),
    ("", TF, None),
    ("  (c) because", MC, "C"),
    ("E", MC, None),
    ("1. f", TF, "F"),
])
def test_parse_examples(raw, space, expected):
    assert parse_answer(raw, space) == expected


@given(st.sampled_from(["A", "B", "C", "D"]))
def test_parse_idempotent(label):
    once = parse_answer(label, MC)
    assert parse_answer(once, MC) == once == label


def test_answer_space_validation():
    assert MC.labels == ("A", "B", "C", "D")
    with pytest.raises(ContractError):
        AnswerSpace("essay")
    with pytest.raises(ContractError):
        AnswerSpace("true_false", ("T", "t"))


def test_mock_generation():
    params = GenerationParams(mock_mode=True)
    assert generate_answer("has evidence", params, mock_rule=lambda p: "T" if "evidence" in p else "F") == "T"
    with pytest.raises(ContractError):
        generate_answer("x", params)
    with pytest.raises(ContractError):
        generate_answer("x", params, mock_rule=lambda p: "")


def _client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_chat_payload(monkeypatch):
    monkeypatch.setenv("LLM_API_KEY", "k1")
    seen = []

    def handler(request):
        seen.append((request.headers.get("authorization"), json.loads(request.content)))
        return httpx.Response(200, json={"choices": [{"message": {"content": "T"}}]})

    params = GenerationParams(temperature=0.2, max_tokens=1, model_name="m", endpoint="http://llm.test/chat")
    assert generate_answer("prompt text", params, client=ChatClient(params, _client(handler))) == "T"
    auth, body = seen[0]
    assert auth == "Bearer k1"
    assert body == {"model": "m", "messages": [{"role": "user", "content": "prompt text"}],
                    "temperature": 0.2, "max_tokens": 1}


def test_chat_retries_then_succeeds():
    calls, sleeps = [], []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(500)
        return httpx.Response(200, json={"choices": [{"message": {"content": "F"}}]})

    params = GenerationParams(endpoint="http://llm.test/chat", backoff=0.5)
    assert ChatClient(params, _client(handler), sleep=sleeps.append).complete("p") == "F"
    assert sleeps == [0.5, 1.0]


def test_chat_gives_up():
    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    params = GenerationParams(endpoint="http://llm.test/chat", max_retries=2)
    with pytest.raises(TransportError):
        ChatClient(params, _client(handler), sleep=lambda s: None).complete("p")


def test_chat_honors_retry_after():
    sleeps, calls = [], []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            return httpx.Response(429, headers={"Retry-After": "3"})
        return httpx.Response(200, json={"choices": [{"message": {"content": "A"}}]})

    ChatClient(GenerationParams(endpoint="http://x/", backoff=0.1), _client(handler), sleep=sleeps.append).complete("p")
    assert sleeps == [3.0]


def test_chat_client_errors_are_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, text="nope")

    with pytest.raises(TransportError):
        ChatClient(GenerationParams(endpoint="http://x/"), _client(handler), sleep=lambda s: None).complete("p")
    assert len(calls) == 1


def test_chat_empty_response():
    handler = lambda r: httpx.Response(200, json={"choices": [{"message": {"content": "  "}}]})
    with pytest.raises(ContractError):
        ChatClient(GenerationParams(endpoint="http://x/"), _client(handler)).complete("p")


def test_params_validation():
    with pytest.raises(ContractError):
        GenerationParams(temperature=-1)
    with pytest.raises(ContractError):
        GenerationParams(max_tokens=0)
