"""Pluggable chat-completion backends for translation and judging.

Real endpoints speak the de-facto chat-completions JSON shape, so any hosted
model works unmodified. Tests run hermetically against ``MockBackend`` (pure,
deterministic, counts its calls) or against recorded cassettes.

Errors are typed so the retry layer can tell transient failures (timeout,
5xx, 429) from permanent ones (bad credentials, malformed response).
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Protocol

import httpx

DEFAULT_CREDENTIALS_ENV = "PALO_FORGE_API_KEY"

Message = dict[str, str]  # {"role": ..., "content": ...}


class BackendKind(Enum):
    TRANSLATOR = "translator"
    JUDGE = "judge"


@dataclass(frozen=True)
class BackendDescriptor:
    backend_id: str
    kind: BackendKind
    endpoint: str
    model: str
    credentials_env: str = DEFAULT_CREDENTIALS_ENV
    rate_limit_per_minute: int = 60
    timeout_seconds: float = 60.0

    def __post_init__(self) -> None:
        if self.rate_limit_per_minute <= 0:
            raise ValueError("rate limit must be positive")


class BackendError(Exception):
    """Base class for backend failures."""


class BackendConfigError(BackendError):
    """Unusable configuration (for example an unset credential variable)."""


class BackendTimeoutError(BackendError):
    retryable = True


class BackendConnectionError(BackendError):
    """Transport-level failure (refused, reset, DNS); worth retrying."""

    retryable = True


class BackendRateLimitError(BackendError):
    retryable = True


class BackendHTTPError(BackendError):
    def __init__(self, status: int, body: str = ""):
        self.status = status
        super().__init__(f"backend returned HTTP {status}: {body[:200]}")

    @property
    def retryable(self) -> bool:
        return self.status >= 500


class BackendProtocolError(BackendError):
    """Response did not carry text where the wire format promises it."""

    retryable = False


def is_retryable(exc: BaseException) -> bool:
    return bool(getattr(exc, "retryable", False))


class RateLimiter:
    """Sliding-window limiter: at most ``per_minute`` acquisitions in any 60 s
    window. Clock and sleep are injectable so tests can drive virtual time.
    Safe to share across worker threads."""

    WINDOW = 60.0

    def __init__(
        self,
        per_minute: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if per_minute <= 0:
            raise ValueError("per_minute must be positive")
        self.per_minute = per_minute
        self._clock = clock
        self._sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                while self._stamps and now - self._stamps[0] >= self.WINDOW:
                    self._stamps.popleft()
                if len(self._stamps) < self.per_minute:
                    self._stamps.append(now)
                    return
                wait = self.WINDOW - (now - self._stamps[0])
            self._sleep(max(wait, 0.0))


class CompletionBackend(Protocol):
    descriptor: BackendDescriptor

    def complete(self, messages: list[Message]) -> str: ...


class HttpChatBackend:
    """Client for a chat-completions endpoint.

    Credentials are resolved at construction so a missing key fails before
    any network call. A custom httpx transport can be injected for tests.
    """

    def __init__(
        self,
        descriptor: BackendDescriptor,
        *,
        transport: httpx.BaseTransport | None = None,
        rate_limiter: RateLimiter | None = None,
    ):
        self.descriptor = descriptor
        api_key = os.environ.get(descriptor.credentials_env)
        if not api_key:
            raise BackendConfigError(
                f"credential variable {descriptor.credentials_env} is not set "
                f"(required by backend {descriptor.backend_id})"
            )
        self._limiter = rate_limiter or RateLimiter(descriptor.rate_limit_per_minute)
        self._client = httpx.Client(
            timeout=descriptor.timeout_seconds,
            headers={"Authorization": f"Bearer {api_key}"},
            transport=transport,
        )

    def complete(self, messages: list[Message]) -> str:
        self._limiter.acquire()
        payload = {"model": self.descriptor.model, "messages": messages}
        try:
            response = self._client.post(self.descriptor.endpoint, json=payload)
        except httpx.TimeoutException as exc:
            raise BackendTimeoutError(str(exc)) from exc
        except httpx.TransportError as exc:
            raise BackendConnectionError(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise BackendError(str(exc)) from exc
        if response.status_code == 429:
            raise BackendRateLimitError("backend rate limit exceeded")
        if response.status_code != 200:
            raise BackendHTTPError(response.status_code, response.text)
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendProtocolError(f"unexpected response shape: {exc}") from exc


_LANG_CODE_IN_PROMPT = re.compile(r"language code:\s*([A-Za-z]{2})")


def _last_user_content(messages: list[Message]) -> str:
    for message in reversed(messages):
        if message.get("role") == "user":
            return message.get("content", "")
    raise BackendProtocolError("no user message in prompt")


class MockBackend:
    """Deterministic in-process backend for hermetic tests and dry runs.

    Translator kind echoes the user content prefixed with ``[<code>] `` where
    the code is read from the prompt's "language code: xx" marker. Judge kind
    replies ``Score-A: 8 Score-B: 8`` unless a scripted response queue is
    provided. Pure: same messages, same output, no network.
    """

    def __init__(
        self,
        kind: BackendKind = BackendKind.TRANSLATOR,
        *,
        backend_id: str = "mock",
        script: Iterable[str] | None = None,
    ):
        self.descriptor = BackendDescriptor(
            backend_id=backend_id,
            kind=kind,
            endpoint="mock:",
            model="mock",
        )
        self._script: deque[str] | None = deque(script) if script is not None else None
        self._lock = threading.Lock()
        self.call_count = 0

    def complete(self, messages: list[Message]) -> str:
        with self._lock:
            self.call_count += 1
            scripted = self._script.popleft() if self._script else None
        if scripted is not None:
            return scripted
        if self.descriptor.kind is BackendKind.JUDGE:
            return "Score-A: 8 Score-B: 8"
        joined = " ".join(m.get("content", "") for m in messages if m.get("role") == "system")
        match = _LANG_CODE_IN_PROMPT.search(joined)
        if not match:
            raise BackendProtocolError("translator prompt does not name a language code")
        return f"[{match.group(1)}] {_last_user_content(messages)}"


def request_fingerprint(model: str, messages: list[Message]) -> str:
    canonical = json.dumps([model, messages], ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class CassetteRecorder:
    """Wrap a live backend and append every exchange to a cassette file
    (JSON Lines of ``{"request_hash", "response"}``)."""

    def __init__(self, inner: CompletionBackend, path: str | Path):
        self.descriptor = inner.descriptor
        self._inner = inner
        self._path = Path(path)

    def complete(self, messages: list[Message]) -> str:
        response = self._inner.complete(messages)
        line = json.dumps(
            {
                "request_hash": request_fingerprint(self.descriptor.model, messages),
                "response": response,
            },
            ensure_ascii=False,
        )
        with self._path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        return response


class CassettePlayer:
    """Replay recorded responses; a request that was never recorded is an error."""

    def __init__(self, descriptor: BackendDescriptor, path: str | Path):
        self.descriptor = descriptor
        self._responses: dict[str, str] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            self._responses[entry["request_hash"]] = entry["response"]

    def complete(self, messages: list[Message]) -> str:
        key = request_fingerprint(self.descriptor.model, messages)
        try:
            return self._responses[key]
        except KeyError:
            raise BackendProtocolError("request not present in cassette") from None


def load_backend_config(path: str | Path) -> dict[str, BackendDescriptor]:
    """Read a backend config file: JSON array of descriptor objects."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    descriptors = {}
    for entry in raw:
        descriptor = BackendDescriptor(
            backend_id=entry["backend_id"],
            kind=BackendKind(entry["kind"]),
            endpoint=entry["endpoint"],
            model=entry["model"],
            credentials_env=entry.get("credentials_env", DEFAULT_CREDENTIALS_ENV),
            rate_limit_per_minute=entry.get("rate_limit_per_minute", 60),
            timeout_seconds=entry.get("timeout_seconds", 60.0),
        )
        if descriptor.backend_id in descriptors:
            raise BackendConfigError(f"duplicate backend_id {descriptor.backend_id!r}")
        descriptors[descriptor.backend_id] = descriptor
    return descriptors


def create_backend(
    descriptor: BackendDescriptor, *, cassette: str | Path | None = None
) -> CompletionBackend:
    """Instantiate a backend from its descriptor.

    ``mock:`` endpoints build a MockBackend; with ``cassette`` the backend
    replays recorded traffic instead of going to the network.
    """
    if cassette is not None:
        return CassettePlayer(descriptor, cassette)
    if descriptor.endpoint.startswith("mock:"):
        return MockBackend(descriptor.kind, backend_id=descriptor.backend_id)
    return HttpChatBackend(descriptor)
