"""The gateway client: context precondition, rate limiting, retries, and a
complete audit record for every invocation."""

from __future__ import annotations

import hashlib
import random
import time
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone

from ..corpus import estimate_tokens
from .backends import Backend
from .clock import Clock, SystemClock
from .config import ModelConfig
from .errors import ContextOverflowError, GatewayError
from .limiter import SlidingWindowLimiter
from .retry import RetryPolicy, with_retry


def prompt_hash(system: str, user: str) -> str:
    h = hashlib.sha256()
    h.update(system.encode("utf-8"))
    h.update(b"\x00")
    h.update(user.encode("utf-8"))
    return h.hexdigest()


@dataclass(frozen=True)
class CallStatus:
    """Outcome of one logical completion. ``retries`` counts the recovery
    attempts behind it: transport retries plus, for a re-ask, the prior
    failed ask. ok means first try; retried_ok(n) means success after n
    retries; failed(kind) is terminal."""

    state: str  # "ok" | "retried_ok" | "failed"
    retries: int = 0
    kind: str | None = None  # failure kind when state == "failed"

    @classmethod
    def ok(cls, retries: int = 0) -> CallStatus:
        return cls(state="ok" if retries == 0 else "retried_ok", retries=retries)

    @classmethod
    def failed(cls, kind: str, retries: int = 0) -> CallStatus:
        return cls(state="failed", retries=retries, kind=kind)

    def to_dict(self) -> dict:
        out: dict = {"state": self.state, "retries": self.retries}
        if self.kind is not None:
            out["kind"] = self.kind
        return out

    @classmethod
    def from_dict(cls, data: dict) -> CallStatus:
        return cls(
            state=data["state"], retries=data.get("retries", 0), kind=data.get("kind")
        )


@dataclass
class CallRecord:
    call_id: str
    doc_id: str
    prompt_hash: str
    promptbook_version: str
    model_id: str
    model_version_reported: str | None
    params: dict
    timestamp: str  # UTC ISO-8601
    input_tokens: int
    output_tokens: int
    raw_output: str
    latency_ms: int
    status: CallStatus

    @property
    def ok(self) -> bool:
        return self.status.state in ("ok", "retried_ok")

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["status"] = self.status.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> CallRecord:
        data = dict(data)
        data["status"] = CallStatus.from_dict(data["status"])
        return cls(**data)


class Gateway:
    """Rate-limited, retrying completion client over any Backend.

    ``complete`` never raises provider errors; every invocation, successful or
    not, comes back as a CallRecord whose status tells the caller what to do.
    """

    def __init__(
        self,
        config: ModelConfig,
        backend: Backend,
        limiter: SlidingWindowLimiter | None = None,
        retry_policy: RetryPolicy | None = None,
        clock: Clock | None = None,
        rng: random.Random | None = None,
        promptbook_version: str = "",
    ):
        self.config = config
        self.backend = backend
        self.clock = clock or SystemClock()
        self.limiter = limiter or SlidingWindowLimiter(
            config.rpm_limit, config.tpm_limit, clock=self.clock
        )
        self.retry_policy = retry_policy or RetryPolicy()
        self.rng = rng or random.Random()
        self.promptbook_version = promptbook_version
        self.reported_versions: set[str] = set()

    def _params(self) -> dict:
        return {
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
            "max_output_tokens": self.config.max_output_tokens,
        }

    def complete(
        self,
        system: str,
        user: str,
        tag: str = "",
        call_id: str | None = None,
        base_retries: int = 0,
    ) -> CallRecord:
        """One logical completion. ``base_retries`` counts recovery attempts
        already spent on this document (a re-ask passes 1), so the record's
        retried_ok accounting spans the whole recovery chain."""
        cfg = self.config
        call_id = call_id or uuid.uuid4().hex
        est_in = estimate_tokens(system + "\n" + user)
        record = CallRecord(
            call_id=call_id,
            doc_id=tag,
            prompt_hash=prompt_hash(system, user),
            promptbook_version=self.promptbook_version,
            model_id=cfg.model_id,
            model_version_reported=None,
            params=self._params(),
            timestamp=datetime.now(timezone.utc).isoformat(),
            input_tokens=est_in,
            output_tokens=0,
            raw_output="",
            latency_ms=0,
            status=CallStatus.failed("gateway_error"),
        )

        if est_in + cfg.max_output_tokens > cfg.context_window:
            record.status = CallStatus.failed(ContextOverflowError.kind)
            return record

        tokens_needed = est_in + cfg.max_output_tokens

        def attempt_once():
            permit = self.limiter.acquire(tokens_needed)
            t0 = time.perf_counter()
            result = self.backend.send(cfg, system, user, tag)
            latency = int((time.perf_counter() - t0) * 1000)
            actual_in = result.usage_in if result.usage_in is not None else est_in
            actual_out = (
                result.usage_out if result.usage_out is not None else estimate_tokens(result.raw)
            )
            self.limiter.reconcile(permit, actual_in + actual_out)
            return result, latency

        try:
            (result, latency), attempts = with_retry(
                attempt_once, self.retry_policy, sleep=self.clock.sleep, rng=self.rng
            )
        except GatewayError as exc:
            record.status = CallStatus.failed(
                exc.kind, retries=base_retries + getattr(exc, "attempts", 1) - 1
            )
            return record

        retries = base_retries + attempts - 1
        if result.retries_override is not None:
            retries = result.retries_override
        record.status = CallStatus.ok(retries)
        record.raw_output = result.raw
        record.latency_ms = latency
        record.input_tokens = result.usage_in if result.usage_in is not None else est_in
        record.output_tokens = (
            result.usage_out if result.usage_out is not None else estimate_tokens(result.raw)
        )
        record.model_version_reported = result.reported_version
        if result.reported_version:
            self.reported_versions.add(result.reported_version)
        return record
