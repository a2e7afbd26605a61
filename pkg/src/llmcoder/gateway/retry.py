"""Exponential backoff with jitter around retryable gateway errors."""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Callable, TypeVar

from .errors import GatewayError

T = TypeVar("T")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_delay: float = 1.0
    cap: float = 60.0
    jitter: float = 0.25  # fraction; delay scaled by 1 +/- jitter

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.base_delay < 0 or self.cap < 0 or not 0 <= self.jitter < 1:
            raise ValueError("invalid retry policy")

    def delay_for(self, attempt: int, rng: random.Random | None = None) -> float:
        """Delay after the given failed attempt: min(cap, base * 2^(attempt-1)),
        scaled by a uniform jitter factor when an rng is supplied."""
        delay = min(self.cap, self.base_delay * 2 ** (attempt - 1))
        if self.jitter and rng is not None:
            delay *= 1 + self.jitter * (2 * rng.random() - 1)
        return delay


def with_retry(
    op: Callable[[], T],
    policy: RetryPolicy,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> tuple[T, int]:
    """Run ``op``, retrying retryable GatewayErrors with backoff.

    Returns (result, attempts). Fatal errors propagate immediately; when the
    policy is exhausted, the last retryable error is re-raised. Either way the
    raised error carries the attempt count in ``exc.attempts``.
    """
    for attempt in range(1, policy.max_attempts + 1):
        try:
            return op(), attempt
        except GatewayError as exc:
            exc.attempts = attempt
            if not exc.retryable or attempt == policy.max_attempts:
                raise
            sleep(policy.delay_for(attempt, rng))
    raise AssertionError("unreachable")
