"""Transport backends: a live chat-completions HTTP client, a scriptable mock
for fault injection, and a replay backend that answers from a recorded raw
log for fully deterministic end-to-end runs."""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx

from ..corpus import estimate_tokens
from .config import ModelConfig
from .errors import (
    AuthFailedError,
    ContentRefusedError,
    GatewayError,
    GatewayTimeoutError,
    InvalidRequestError,
    RateLimitedError,
    ServerError,
    error_for_kind,
)


@dataclass
class BackendResult:
    raw: str
    usage_in: int | None = None
    usage_out: int | None = None
    reported_version: str | None = None
    # Replay only: retry count recorded for the original call.
    retries_override: int | None = None


class Backend(Protocol):
    def send(self, config: ModelConfig, system: str, user: str, tag: str) -> BackendResult: ...


class HttpBackend:
    """OpenAI-compatible chat-completions client. One wire shape covers most
    hosted providers and local servers; the base URL comes from the config."""

    def __init__(self, client: httpx.Client | None = None):
        self._client = client or httpx.Client()

    def send(self, config: ModelConfig, system: str, user: str, tag: str) -> BackendResult:
        api_key = os.environ.get(config.api_key_env, "")
        if not api_key:
            raise AuthFailedError(f"no API key in environment variable {config.api_key_env}")
        payload = {
            "model": config.model_id,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": config.temperature,
            "top_p": config.top_p,
            "max_tokens": config.max_output_tokens,
        }
        url = config.base_url.rstrip("/") + "/chat/completions"
        try:
            resp = self._client.post(
                url,
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=config.timeout_s,
            )
        except httpx.TimeoutException as exc:
            raise GatewayTimeoutError(str(exc)) from exc
        except httpx.TransportError as exc:
            raise ServerError(f"transport failure: {exc}") from exc

        if resp.status_code in (401, 403):
            raise AuthFailedError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code == 429:
            raise RateLimitedError(resp.text[:200])
        if resp.status_code >= 500:
            raise ServerError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise InvalidRequestError(f"HTTP {resp.status_code}: {resp.text[:200]}")

        try:
            body = resp.json()
            choice = body["choices"][0]
        except (ValueError, LookupError, TypeError) as exc:
            raise ServerError(f"unparseable provider response: {exc}") from exc

        message = choice.get("message") or {}
        if choice.get("finish_reason") == "content_filter" or message.get("refusal"):
            raise ContentRefusedError(str(message.get("refusal") or "content filtered"))
        content = message.get("content")
        if content is None:
            raise ServerError("provider response has no message content")

        usage = body.get("usage") or {}
        return BackendResult(
            raw=content,
            usage_in=usage.get("prompt_tokens"),
            usage_out=usage.get("completion_tokens"),
            reported_version=body.get("model"),
        )


@dataclass
class FaultScript:
    """Per-call directives for the mock backend, keyed by (doc tag, attempt).

    Each doc's directive list is consumed one entry per attempt; the final
    entry repeats once the list is exhausted. Directive kinds: respond (text),
    respond_json (value), malformed_json, rate_limit, timeout, server_error,
    refuse, auth_failed.
    """

    default: list[dict] = field(default_factory=list)
    docs: dict[str, list[dict]] = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> FaultScript:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(default=data.get("default", []), docs=data.get("docs", {}))

    @classmethod
    def respond_all(cls, text: str) -> FaultScript:
        return cls(default=[{"kind": "respond", "text": text}])

    def directive(self, tag: str, attempt_index: int) -> dict:
        seq = self.docs.get(tag) or self.default
        if not seq:
            raise ValueError(f"fault script has no directives for doc '{tag}' and no default")
        return seq[min(attempt_index, len(seq) - 1)]


class MockBackend:
    """Deterministic scripted backend with a concurrency probe."""

    MALFORMED = 'Sure! Here is the JSON you asked for: {"answer": '

    def __init__(self, script: FaultScript, version_suffix: str = "+mock"):
        self._script = script
        self._version_suffix = version_suffix
        self._lock = threading.Lock()
        self._attempts: dict[str, int] = {}
        self._in_flight = 0
        self.max_in_flight = 0
        self.calls: list[tuple[str, int]] = []

    def attempts_for(self, tag: str) -> int:
        with self._lock:
            return self._attempts.get(tag, 0)

    def send(self, config: ModelConfig, system: str, user: str, tag: str) -> BackendResult:
        with self._lock:
            index = self._attempts.get(tag, 0)
            self._attempts[tag] = index + 1
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)
            self.calls.append((tag, index))
        try:
            directive = self._script.directive(tag, index)
            kind = directive.get("kind")
            if kind == "respond":
                raw = directive["text"]
            elif kind == "respond_json":
                raw = json.dumps(directive["value"], ensure_ascii=False)
            elif kind == "malformed_json":
                raw = directive.get("text", self.MALFORMED)
            elif kind == "rate_limit":
                raise RateLimitedError("scripted rate limit")
            elif kind == "timeout":
                raise GatewayTimeoutError("scripted timeout")
            elif kind == "server_error":
                raise ServerError("scripted server error")
            elif kind == "refuse":
                raise ContentRefusedError("scripted refusal")
            elif kind == "auth_failed":
                raise AuthFailedError("scripted auth failure")
            else:
                raise ValueError(f"unknown fault directive kind {kind!r}")
            return BackendResult(
                raw=raw,
                usage_in=estimate_tokens(system + "\n" + user),
                usage_out=estimate_tokens(raw),
                reported_version=config.model_id + self._version_suffix,
            )
        finally:
            with self._lock:
                self._in_flight -= 1


class ReplayBackend:
    """Answers from a prior run's raw log (one call record JSON per line).

    Calls are replayed per document in recorded order; recorded failures
    re-raise the same error kind, and recorded retry counts are carried
    through so replayed call records match the originals.
    """

    def __init__(self, records: list[dict]):
        self._by_tag: dict[str, list[dict]] = {}
        for rec in records:
            self._by_tag.setdefault(rec.get("doc_id", ""), []).append(rec)
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()
        self.access_dates = sorted(
            {rec["timestamp"][:10] for rec in records if rec.get("timestamp")}
        )

    @classmethod
    def from_file(cls, path: str | Path) -> ReplayBackend:
        records = []
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        return cls(records)

    def send(self, config: ModelConfig, system: str, user: str, tag: str) -> BackendResult:
        with self._lock:
            index = self._cursor.get(tag, 0)
            self._cursor[tag] = index + 1
        recorded = self._by_tag.get(tag, [])
        if index >= len(recorded):
            raise GatewayError(
                f"replay log has {len(recorded)} calls for doc '{tag}', call {index + 1} requested"
            )
        rec = recorded[index]
        status = rec.get("status", {})
        if status.get("state") == "failed":
            raise error_for_kind(status.get("kind", "gateway_error"), "replayed failure")
        retries = status.get("retries", 0)
        return BackendResult(
            raw=rec.get("raw_output", ""),
            usage_in=rec.get("input_tokens"),
            usage_out=rec.get("output_tokens"),
            reported_version=rec.get("model_version_reported"),
            retries_override=retries if retries > 0 else None,
        )
