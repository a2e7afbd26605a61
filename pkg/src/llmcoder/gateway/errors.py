"""Gateway error taxonomy. ``retryable`` drives the retry loop; everything
else is fatal either for the run (auth) or for the single document."""

from __future__ import annotations


class GatewayError(Exception):
    kind = "gateway_error"
    retryable = False


class RateLimitedError(GatewayError):
    kind = "rate_limited"
    retryable = True


class GatewayTimeoutError(GatewayError):
    kind = "timeout"
    retryable = True


class ServerError(GatewayError):
    kind = "server_error"
    retryable = True


class AuthFailedError(GatewayError):
    kind = "auth_failed"


class ContentRefusedError(GatewayError):
    kind = "content_refused"


class ContextOverflowError(GatewayError):
    kind = "context_overflow"


class InvalidRequestError(GatewayError):
    kind = "invalid_request"


class UnsatisfiableRequestError(GatewayError):
    kind = "unsatisfiable_request"


ERRORS_BY_KIND = {
    cls.kind: cls
    for cls in (
        RateLimitedError,
        GatewayTimeoutError,
        ServerError,
        AuthFailedError,
        ContentRefusedError,
        ContextOverflowError,
        InvalidRequestError,
        UnsatisfiableRequestError,
    )
}


def error_for_kind(kind: str, message: str = "") -> GatewayError:
    cls = ERRORS_BY_KIND.get(kind, GatewayError)
    return cls(message or kind)
