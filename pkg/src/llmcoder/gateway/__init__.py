"""Provider-agnostic LLM client: dual rate limiting, retries with backoff,
full per-call audit records, cost estimation, and mock/replay backends."""

from .backends import BackendResult, FaultScript, HttpBackend, MockBackend, ReplayBackend
from .client import CallRecord, CallStatus, Gateway
from .clock import SimulatedClock, SystemClock
from .config import ModelConfig
from .cost import CostEstimate, estimate_cost
from .errors import (
    AuthFailedError,
    ContentRefusedError,
    ContextOverflowError,
    GatewayError,
    GatewayTimeoutError,
    InvalidRequestError,
    RateLimitedError,
    ServerError,
    UnsatisfiableRequestError,
)
from .limiter import Permit, SlidingWindowLimiter
from .retry import RetryPolicy, with_retry

__all__ = [
    "AuthFailedError",
    "BackendResult",
    "CallRecord",
    "CallStatus",
    "ContentRefusedError",
    "ContextOverflowError",
    "CostEstimate",
    "FaultScript",
    "Gateway",
    "GatewayError",
    "GatewayTimeoutError",
    "HttpBackend",
    "InvalidRequestError",
    "MockBackend",
    "ModelConfig",
    "Permit",
    "RateLimitedError",
    "ReplayBackend",
    "RetryPolicy",
    "ServerError",
    "SimulatedClock",
    "SlidingWindowLimiter",
    "SystemClock",
    "UnsatisfiableRequestError",
    "estimate_cost",
    "with_retry",
]
