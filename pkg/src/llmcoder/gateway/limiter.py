"""Sliding-window rate limiter over both requests per minute and tokens per
minute. Callers block until both budgets have room; token reservations are
estimates that can be reconciled with provider-reported usage afterward."""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass

from .clock import Clock, SystemClock
from .errors import UnsatisfiableRequestError

WINDOW_SECONDS = 60.0


@dataclass
class Permit:
    granted_at: float
    entry: list  # [timestamp, tokens], shared with the window deque


class SlidingWindowLimiter:
    def __init__(
        self,
        rpm_limit: int,
        tpm_limit: int,
        clock: Clock | None = None,
        window: float = WINDOW_SECONDS,
    ):
        if rpm_limit <= 0 or tpm_limit <= 0:
            raise ValueError("rpm_limit and tpm_limit must be positive")
        self.rpm_limit = rpm_limit
        self.tpm_limit = tpm_limit
        self.window = window
        self._clock = clock or SystemClock()
        self._lock = threading.Lock()
        self._events: deque[list] = deque()  # [timestamp, tokens]
        self._tokens_in_window = 0

    def _prune(self, now: float) -> None:
        cutoff = now - self.window
        while self._events and self._events[0][0] <= cutoff:
            old = self._events.popleft()
            self._tokens_in_window -= old[1]

    def acquire(self, tokens_needed: int) -> Permit:
        """Block until a request slot and ``tokens_needed`` tokens are free in
        the current window, then reserve them."""
        if tokens_needed < 0:
            raise ValueError("tokens_needed must be non-negative")
        if tokens_needed > self.tpm_limit:
            raise UnsatisfiableRequestError(
                f"request needs {tokens_needed} tokens but the per-minute limit is {self.tpm_limit}"
            )
        while True:
            with self._lock:
                now = self._clock.now()
                self._prune(now)
                if (
                    len(self._events) < self.rpm_limit
                    and self._tokens_in_window + tokens_needed <= self.tpm_limit
                ):
                    entry = [now, tokens_needed]
                    self._events.append(entry)
                    self._tokens_in_window += tokens_needed
                    return Permit(granted_at=now, entry=entry)
                # Oldest event leaving the window is the earliest anything can
                # change; wait that long (tiny floor keeps simulated clocks moving).
                wait = self._events[0][0] + self.window - now if self._events else 0.0
            self._clock.sleep(max(wait, 1e-3))

    def reconcile(self, permit: Permit, actual_tokens: int) -> None:
        """Replace a permit's estimated token reservation with actual usage."""
        if actual_tokens < 0:
            raise ValueError("actual_tokens must be non-negative")
        with self._lock:
            if any(e is permit.entry for e in self._events):
                self._tokens_in_window += actual_tokens - permit.entry[1]
            permit.entry[1] = actual_tokens
