"""Chat and embedding clients plus the prompt template registry.

Two client families share one interface: HTTP clients speaking the
OpenAI-compatible wire format, and deterministic mocks that make every
pipeline stage a pure function of its inputs (selected with provider
"mock"). Every pipeline call site renders a registered template at
temperature 0; clients record (template, temperature) so tests can audit
that no call site ever deviates.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field

import httpx
import numpy as np

from .errors import AuthenticationError, ContextLengthError, ProviderError, ValidationError

MOCK_EMBED_DIM = 64
DEFAULT_EMBED_BATCH = 64


@dataclass
class ChatRequest:
    system_prompt: str
    user_prompt: str
    temperature: float = 0.0
    max_output_tokens: int = 2048
    template: str | None = None


@dataclass
class PromptTemplate:
    name: str
    system: str
    user: str
    output_schema: str

    def render(self, **kwargs: str) -> ChatRequest:
        return ChatRequest(
            system_prompt=self.system,
            user_prompt=self.user.format(**kwargs),
            template=self.name,
        )


PROMPTS: dict[str, PromptTemplate] = {
    "decompose": PromptTemplate(
        name="decompose",
        system=(
            "You are a precise information extraction engine. Split the given text "
            "into self-contained semantic units: each unit is one standalone event or "
            "claim, rephrased so it reads on its own. For each unit list the named "
            "entities it mentions and the relationships it asserts as "
            "[source entity, relationship phrase, target entity] triples whose "
            "endpoints appear in that unit's entity list. Reply with a single JSON "
            'object only: {"units": [{"text": str, "entities": [str], '
            '"relationships": [[str, str, str]]}]}'
        ),
        user="Text:\n{chunk}",
        output_schema='{"units": [{"text", "entities", "relationships"}]}',
    ),
    "attribute": PromptTemplate(
        name="attribute",
        system=(
            "Write a concise factual profile of the given entity using only the "
            "numbered statements provided. Do not invent facts beyond them. Reply "
            "with the profile text only."
        ),
        user="Entity: {title}\nStatements:\n{context}",
        output_schema="plain text profile",
    ),
    "high_level": PromptTemplate(
        name="high_level",
        system=(
            "You are given statements that all come from one closely related cluster "
            "of a corpus. Produce one or more high-level insights that summarize the "
            "cluster (themes, outcomes, notable patterns), each with a short keyword "
            'title. Reply with a single JSON object only: {"elements": '
            '[{"insight": str, "title": str}]}'
        ),
        user="Statements:\n{context}",
        output_schema='{"elements": [{"insight", "title"}]}',
    ),
    "query_entities": PromptTemplate(
        name="query_entities",
        system=(
            "Extract the named entities mentioned in the question. Reply with a "
            'single JSON object only: {"entities": [str]}'
        ),
        user="Question: {query}",
        output_schema='{"entities": [str]}',
    ),
    "unified_answer": PromptTemplate(
        name="unified_answer",
        system=(
            "Answer the question using only the retrieved context below. Be direct "
            "and complete. If the context is empty or insufficient, say so instead "
            "of guessing."
        ),
        user="Context:\n{context}\n\nQuestion: {query}\n\nAnswer:",
        output_schema="plain text answer",
    ),
}


@dataclass
class CallRecord:
    template: str | None
    temperature: float


_REPAIR_SUFFIX = (
    "\n\nYour previous reply could not be parsed:\n{reply}\n\n"
    "It failed because: {reason}. Reply again with exactly one valid JSON "
    "object matching the requested schema and nothing else."
)


_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n|\n?```$")


def extract_json_object(text: str) -> dict:
    """Pull the first JSON object out of a model reply, tolerating code fences
    and surrounding prose."""
    cleaned = _FENCE_RE.sub("", text.strip())
    start, end = cleaned.find("{"), cleaned.rfind("}")
    if start < 0 or end <= start:
        raise ValueError("no JSON object in reply")
    obj = json.loads(cleaned[start:end + 1])
    if not isinstance(obj, dict):
        raise ValueError("reply is not a JSON object")
    return obj


def chat_structured(client, request: ChatRequest, parse_fn):
    """Call chat and parse; on parse failure send one repair round-trip.

    Raises whatever parse_fn raised on the second reply.
    """
    reply = client.chat(request)
    try:
        return parse_fn(reply)
    except (ValueError, KeyError, TypeError, ValidationError) as first:
        repair = ChatRequest(
            system_prompt=request.system_prompt,
            user_prompt=request.user_prompt + _REPAIR_SUFFIX.format(
                reply=reply[:2000], reason=first),
            temperature=request.temperature,
            max_output_tokens=request.max_output_tokens,
            template=request.template,
        )
        return parse_fn(client.chat(repair))


class RateLimiter:
    """Process-global concurrency ceiling plus an optional token bucket."""

    def __init__(self, max_concurrent: int = 8,
                 requests_per_minute: float | None = None,
                 clock=time.monotonic, sleep=time.sleep) -> None:
        self._sem = threading.Semaphore(max_concurrent)
        self._rpm = requests_per_minute
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._tokens = float(requests_per_minute) if requests_per_minute else 0.0
        self._last = clock()

    def _take_token(self) -> None:
        if not self._rpm:
            return
        rate = self._rpm / 60.0
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self._rpm, self._tokens + (now - self._last) * rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / rate
            self._sleep(wait)

    def __enter__(self):
        self._sem.acquire()
        self._take_token()
        return self

    def __exit__(self, *exc):
        self._sem.release()
        return False


def _digest(request: ChatRequest) -> str:
    h = hashlib.sha256()
    h.update(request.system_prompt.encode("utf-8"))
    h.update(b"\x00")
    h.update(request.user_prompt.encode("utf-8"))
    return h.hexdigest()[:8]


_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")
_NAME_RE = re.compile(r"\b[A-Z][\w-]*(?:\s+[A-Z][\w-]*)*")
_NAME_STOPWORDS = {
    "the", "a", "an", "it", "its", "this", "that", "these", "those", "he", "she",
    "they", "we", "i", "you", "in", "on", "at", "and", "but", "or", "if", "when",
    "where", "why", "how", "what", "who", "which", "there", "after", "before",
}


def _heuristic_names(text: str) -> list[str]:
    names: list[str] = []
    for m in _NAME_RE.finditer(text):
        name = m.group(0)
        if name.lower() in _NAME_STOPWORDS:
            continue
        if name not in names:
            names.append(name)
    return names


def _heuristic_units(text: str) -> list[dict]:
    units = []
    for sent in _SENTENCE_RE.split(text.strip()):
        sent = sent.strip()
        if not sent:
            continue
        names = _heuristic_names(sent)
        rels = []
        if len(names) >= 2:
            rels.append([names[0], f"{names[0]} linked to {names[1]}", names[1]])
        units.append({"text": sent, "entities": names, "relationships": rels})
    return units


class MockChatClient:
    """Pure function of the request: structured templates get rule-derived JSON,
    everything else gets "MOCK:" + the first 8 hex chars of the prompt hash."""

    def __init__(self) -> None:
        self.calls: list[CallRecord] = []

    def chat(self, request: ChatRequest) -> str:
        self.calls.append(CallRecord(request.template, request.temperature))
        if request.template == "decompose":
            chunk = request.user_prompt.split("Text:\n", 1)[1]
            return json.dumps({"units": _heuristic_units(chunk)})
        if request.template == "query_entities":
            query = request.user_prompt.split("Question: ", 1)[1]
            return json.dumps({"entities": _heuristic_names(query)})
        if request.template == "high_level":
            tag = _digest(request)
            return json.dumps({"elements": [
                {"insight": f"MOCK-INSIGHT:{tag}", "title": f"MOCK-TOPIC:{tag}"},
            ]})
        return f"MOCK:{_digest(request)}"


class MockEmbeddingClient:
    """Hash-seeded gaussian vectors, unit-normalized; identical text, identical vector."""

    def __init__(self, dim: int = MOCK_EMBED_DIM, max_batch: int = DEFAULT_EMBED_BATCH) -> None:
        self.dim = dim
        self.max_batch = max_batch
        self.model_tag = f"mock-embed-{dim}"

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        if not texts:
            raise ProviderError("empty embedding batch")
        if len(texts) > self.max_batch:
            raise ProviderError(f"batch of {len(texts)} exceeds max {self.max_batch}")
        out = []
        for text in texts:
            seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
            rng = np.random.default_rng(seed)
            v = rng.standard_normal(self.dim)
            out.append((v / np.linalg.norm(v)).astype(np.float32))
        return out


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}
MAX_ATTEMPTS = 5


@dataclass
class HttpConfig:
    base_url: str
    chat_model: str = "gpt-4o-mini"
    embed_model: str = "text-embedding-3-small"
    api_key_env: str = "NODERAG_API_KEY"
    timeout: float = 60.0
    backoff_base: float = 0.5
    embed_dim: int = 1536
    max_batch: int = DEFAULT_EMBED_BATCH


class _HttpBase:
    def __init__(self, config: HttpConfig, limiter: RateLimiter | None = None) -> None:
        self.config = config
        self.limiter = limiter or RateLimiter()
        self._client = httpx.Client(base_url=config.base_url, timeout=config.timeout)
        self.calls: list[CallRecord] = []

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(self.config.api_key_env, "")
        return {"Authorization": f"Bearer {key}"} if key else {}

    def _post(self, path: str, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(MAX_ATTEMPTS):
            if attempt:
                time.sleep(self.config.backoff_base * (2 ** (attempt - 1)))
            try:
                with self.limiter:
                    resp = self._client.post(path, json=payload, headers=self._headers())
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if resp.status_code == 200:
                return resp.json()
            if resp.status_code in (401, 403):
                raise AuthenticationError(f"authentication failed ({resp.status_code})")
            body = resp.text[:500]
            if resp.status_code == 400 and "context" in body.lower() and "length" in body.lower():
                raise ContextLengthError(f"context length rejected: {body}")
            if resp.status_code in _RETRYABLE_STATUS:
                last_error = ProviderError(f"status {resp.status_code}: {body}", retryable=True)
                continue
            raise ProviderError(f"status {resp.status_code}: {body}")
        raise ProviderError(f"exhausted {MAX_ATTEMPTS} attempts: {last_error}", retryable=True)


class OpenAIChatClient(_HttpBase):
    def chat(self, request: ChatRequest) -> str:
        self.calls.append(CallRecord(request.template, request.temperature))
        data = self._post("/chat/completions", {
            "model": self.config.chat_model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat response: {exc}") from exc


class OpenAIEmbeddingClient(_HttpBase):
    def __init__(self, config: HttpConfig, limiter: RateLimiter | None = None) -> None:
        super().__init__(config, limiter)
        self.dim = config.embed_dim
        self.max_batch = config.max_batch
        self.model_tag = config.embed_model

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        if not texts:
            raise ProviderError("empty embedding batch")
        if len(texts) > self.max_batch:
            raise ProviderError(f"batch of {len(texts)} exceeds max {self.max_batch}")
        data = self._post("/embeddings", {"model": self.config.embed_model, "input": texts})
        try:
            rows = sorted(data["data"], key=lambda r: r["index"])
            vectors = [np.asarray(r["embedding"], dtype=np.float64) for r in rows]
        except (KeyError, TypeError) as exc:
            raise ProviderError(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(texts):
            raise ProviderError("embedding count does not match input count")
        out = []
        for v in vectors:
            if v.shape[0] != self.dim:
                raise ProviderError(
                    f"embedding dim {v.shape[0]} differs from configured {self.dim}"
                )
            out.append((v / np.linalg.norm(v)).astype(np.float32))
        return out
