"""Chat-completion gateway: request/response types, backends, retries, replay.

Backends are callables ``backend(request) -> ChatResponse``. ``llm_chat``
wraps any backend with bounded retries on :class:`TransportError`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

from .errors import GatewayError, ReplayMissError, RetriesExhausted, TransportError

logger = logging.getLogger(__name__)

VALID_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 1024
    model: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("chat request needs at least one message")
        for m in self.messages:
            if m.role not in VALID_ROLES:
                raise ValueError(f"invalid role {m.role!r}")

    @classmethod
    def simple(cls, user: str, system: Optional[str] = None, **kwargs) -> "ChatRequest":
        msgs = []
        if system:
            msgs.append(ChatMessage("system", system))
        msgs.append(ChatMessage("user", user))
        return cls(tuple(msgs), **kwargs)

    def payload(self) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }

    def request_hash(self) -> str:
        blob = json.dumps(self.payload(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @property
    def last_user_message(self) -> str:
        for m in reversed(self.messages):
            if m.role == "user":
                return m.content
        return ""

    @property
    def system_message(self) -> str:
        return "\n".join(m.content for m in self.messages if m.role == "system")


@dataclass
class ChatResponse:
    text: str
    finish_reason: str = "stop"
    usage: dict = field(default_factory=dict)
    retry_count: int = 0


Script = Union[Mapping[str, str], Sequence, Callable[[ChatRequest], str]]


class MockBackend:
    """Scripted backend for tests and offline runs.

    ``script`` may be a mapping from the last user message to a reply (with an
    optional ``default``), a sequence consumed one reply per call (an
    ``Exception`` instance in the sequence is raised instead), or a callable.
    """

    def __init__(self, script: Script, default: Optional[str] = None):
        self.script = script
        self.default = default
        self.calls: list[ChatRequest] = []
        self._pos = 0
        self._lock = threading.Lock()

    def __call__(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls.append(request)
            if callable(self.script):
                reply = self.script(request)
            elif isinstance(self.script, Mapping):
                key = request.last_user_message
                if key in self.script:
                    reply = self.script[key]
                elif self.default is not None:
                    reply = self.default
                else:
                    raise GatewayError("mock script has no reply for request")
            else:
                if self._pos >= len(self.script):
                    if self.default is None:
                        raise GatewayError("mock script exhausted")
                    reply = self.default
                else:
                    reply = self.script[self._pos]
                    self._pos += 1
        if isinstance(reply, BaseException):
            raise reply
        return ChatResponse(text=reply, usage={"prompt_tokens": 0, "completion_tokens": len(reply.split())})


class HTTPBackend:
    """JSON-over-HTTP chat-completion client (OpenAI-compatible wire format)."""

    def __init__(self, url: str, model: str, api_key: Optional[str] = None, timeout: float = 60.0, client=None):
        import httpx

        self.url = url
        self.model = model
        self.api_key = api_key
        self._client = client or httpx.Client(timeout=timeout)
        self._httpx = httpx

    def __call__(self, request: ChatRequest) -> ChatResponse:
        payload = request.payload()
        payload["model"] = request.model or self.model
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(self.url, json=payload, headers=headers)
        except self._httpx.TransportError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise GatewayError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        body = resp.json()
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed completion body: {body!r:.200}") from exc
        return ChatResponse(text=text, finish_reason=choice.get("finish_reason") or "stop", usage=body.get("usage") or {})


class ReplayBackend:
    """Serves responses from a JSONL log of ``{request_hash, response_text}``."""

    def __init__(self, log_path: Union[str, Path]):
        self.table: dict[str, str] = {}
        with open(log_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    self.table[row["request_hash"]] = row["response_text"]

    def __call__(self, request: ChatRequest) -> ChatResponse:
        key = request.request_hash()
        if key not in self.table:
            raise ReplayMissError(f"no recorded response for request {key[:12]}")
        return ChatResponse(text=self.table[key])


class RecordingBackend:
    """Forwards to ``inner`` and appends each exchange to a replay log."""

    def __init__(self, inner, log_path: Union[str, Path]):
        self.inner = inner
        self.log_path = Path(log_path)
        self._lock = threading.Lock()

    def __call__(self, request: ChatRequest) -> ChatResponse:
        response = self.inner(request)
        row = {"request_hash": request.request_hash(), "response_text": response.text}
        with self._lock, open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
        return response


def llm_chat(
    request: ChatRequest,
    backend,
    max_retries: int = 3,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> ChatResponse:
    """Send ``request`` through ``backend``, retrying transport errors with exponential backoff."""
    attempt = 0
    while True:
        try:
            response = backend(request)
        except TransportError as exc:
            if attempt >= max_retries:
                raise RetriesExhausted(f"gave up after {attempt} retries: {exc}") from exc
            delay = backoff * (2**attempt)
            logger.warning("transport error (%s); retry %d in %.2fs", exc, attempt + 1, delay)
            sleep(delay)
            attempt += 1
            continue
        response.retry_count = attempt
        return response


class Gateway:
    """Backend plus sampling defaults, retry policy and an in-flight cap."""

    def __init__(
        self,
        backend,
        temperature: float = 0.0,
        top_p: float = 1.0,
        max_tokens: int = 1024,
        max_retries: int = 3,
        backoff: float = 0.5,
        max_in_flight: int = 4,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.temperature = temperature
        self.top_p = top_p
        self.max_tokens = max_tokens
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_in_flight = max(1, max_in_flight)
        self.sleep = sleep
        self.call_count = 0
        self._lock = threading.Lock()

    def chat(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.call_count += 1
        return llm_chat(request, self.backend, self.max_retries, self.backoff, self.sleep)

    def complete(self, user: str, system: Optional[str] = None, history: Sequence[ChatMessage] = ()) -> ChatResponse:
        messages = []
        if system:
            messages.append(ChatMessage("system", system))
        messages.extend(history)
        messages.append(ChatMessage("user", user))
        req = ChatRequest(tuple(messages), self.temperature, self.top_p, self.max_tokens)
        return self.chat(req)

    def map(self, fn, items: Sequence) -> list:
        """Apply ``fn`` to ``items`` with at most ``max_in_flight`` concurrent calls; results keep input order.

        Exceptions are returned in place of results rather than raised.
        """

        def safe(x):
            try:
                return fn(x)
            except Exception as exc:  # noqa: BLE001 - surfaced to caller per item
                return exc

        if self.max_in_flight == 1 or len(items) <= 1:
            return [safe(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(safe, items))
