"""Prompt assembly, chat-completion calls and constrained answer parsing."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import httpx

from ctirag.errors import ContractError, TransportError

TRUE_FALSE = ("T", "F")
MULTIPLE_CHOICE = ("A", "B", "C", "D")

MockRule = Callable[[str], str]


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.7
    max_tokens: int = 1
    model_name: str = "meta-llama/Meta-Llama-3-8B-Instruct"
    endpoint: str = "http://localhost:8000/v1/chat/completions"
    mock_mode: bool = False
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ContractError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_tokens < 1:
            raise ContractError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.max_retries < 0:
            raise ContractError("max_retries must be >= 0")


@dataclass(frozen=True)
class PromptTemplate:
    preamble: str = (
        "You are a cybersecurity analyst. Use the documents below, if any, "
        "to answer the question."
    )
    context_header: str = "Context:"
    question_header: str = "Question: "
    answer_instruction: str = "Answer with a single letter."


@dataclass(frozen=True)
class AnswerSpace:
    kind: str
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("true_false", "multiple_choice"):
            raise ContractError(f"unknown answer space kind {self.kind!r}")
        if not self.labels:
            default = TRUE_FALSE if self.kind == "true_false" else MULTIPLE_CHOICE
            object.__setattr__(self, "labels", default)
        labels = tuple(str(l).upper() for l in self.labels)
        if len(set(labels)) != len(labels):
            raise ContractError(f"answer labels must be unique: {labels}")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def true_false(cls) -> "AnswerSpace":
        return cls("true_false", TRUE_FALSE)

    @classmethod
    def multiple_choice(cls, n: int = 4) -> "AnswerSpace":
        if not 1 <= n <= 26:
            raise ContractError(f"unsupported number of options: {n}")
        return cls("multiple_choice", tuple(chr(ord("A") + i) for i in range(n)))


def build_prompt(question: str, contexts: Sequence, template: PromptTemplate | None = None) -> str:
    """Render the prompt; ``contexts`` are chunks (or plain strings) in rank order.

    With no contexts the context section is left out entirely.
    """
    t = template or PromptTemplate()
    parts = []
    if t.preamble:
        parts.append(t.preamble)
    if contexts:
        docs = [
            f"Document {i}: {getattr(c, 'text', c)}" for i, c in enumerate(contexts, 1)
        ]
        parts.append("\n\n".join([t.context_header, *docs]) if t.context_header else "\n\n".join(docs))
    parts.append(f"{t.question_header}{question}\n{t.answer_instruction}")
    return "\n\n".join(parts)


def parse_answer(raw: str, space: AnswerSpace) -> str | None:
    """Label named by the first alphabetic character of ``raw``, or None.

    ``None`` marks a parse failure, which the harness scores as incorrect.

    >>> parse_answer(" t ", AnswerSpace.true_false())
    'T'
    >>> parse_answer("maybe", AnswerSpace.true_false()) is None
    True
    """
    for ch in raw:
        if ch.isalpha():
            label = ch.upper()
            return label if label in space.labels else None
    return None


class ChatClient:
    """Minimal client for a chat-completion endpoint with bounded retries."""

    def __init__(self, params: GenerationParams, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.params = params
        self._client = client or httpx.Client(timeout=params.timeout)
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get("LLM_API_KEY", "").strip()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt: str) -> str:
        p = self.params
        payload = {
            "model": p.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": p.temperature,
            "max_tokens": p.max_tokens,
        }
        last: TransportError | None = None
        for attempt in range(p.max_retries + 1):
            if attempt:
                delay = p.backoff * 2 ** (attempt - 1)
                if last is not None and last.retry_after is not None:
                    delay = max(delay, last.retry_after)
                self._sleep(delay)
            try:
                resp = self._client.post(p.endpoint, json=payload, headers=self._headers())
            except httpx.HTTPError as exc:
                last = TransportError(f"chat request to {p.endpoint} failed: {exc}")
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                ra = resp.headers.get("Retry-After")
                last = TransportError(
                    f"chat endpoint returned HTTP {resp.status_code}",
                    retry_after=float(ra) if ra and ra.replace(".", "", 1).isdigit() else None,
                    status_code=resp.status_code,
                )
                continue
            if resp.status_code >= 400:
                raise TransportError(
                    f"chat endpoint returned HTTP {resp.status_code}: {resp.text[:200]}",
                    status_code=resp.status_code,
                )
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ContractError(f"malformed chat response: {exc}") from exc
            if not isinstance(content, str) or not content.strip():
                raise ContractError("chat endpoint returned an empty response")
            return content
        assert last is not None
        raise TransportError(
            f"{last} (gave up after {p.max_retries + 1} attempts)",
            retry_after=last.retry_after, status_code=last.status_code,
        )


def generate_answer(prompt: str, params: GenerationParams, *, mock_rule: MockRule | None = None,
                    client: ChatClient | None = None) -> str:
    """Return the raw model response for ``prompt``.

    In mock mode ``mock_rule`` produces the response; otherwise ``client``
    (or a fresh :class:`ChatClient`) calls the configured endpoint.
    """
    if params.mock_mode:
        if mock_rule is None:
            raise ContractError("mock_mode requires a mock rule")
        out = mock_rule(prompt)
        if not out:
            raise ContractError("mock rule returned an empty response")
        return out
    return (client or ChatClient(params)).complete(prompt)
