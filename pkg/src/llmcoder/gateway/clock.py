"""Injectable clock so rate limiting and backoff are testable without real
waiting. The simulated clock advances virtual time instantly on sleep."""

from __future__ import annotations

import threading
import time
from typing import Protocol


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class SystemClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class SimulatedClock:
    def __init__(self, start: float = 0.0):
        self._t = start
        self._lock = threading.Lock()
        self.total_slept = 0.0

    def now(self) -> float:
        with self._lock:
            return self._t

    def sleep(self, seconds: float) -> None:
        if seconds <= 0:
            return
        with self._lock:
            self._t += seconds
            self.total_slept += seconds

    def advance(self, seconds: float) -> None:
        with self._lock:
            self._t += seconds
