"""Model endpoint configuration snapshot."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class ModelConfig:
    model_id: str
    base_url: str = "https://api.openai.com/v1"
    temperature: float = 0.0
    top_p: float = 1.0
    max_output_tokens: int = 1024
    context_window: int = 128_000
    price_in: float = 0.0  # currency per 1,000,000 input tokens
    price_out: float = 0.0  # currency per 1,000,000 output tokens
    rpm_limit: int = 60
    tpm_limit: int = 100_000
    api_key_env: str = "LLM_API_KEY"
    timeout_s: float = 120.0

    def __post_init__(self):
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        for name in ("max_output_tokens", "context_window", "rpm_limit", "tpm_limit"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.price_in < 0 or self.price_out < 0:
            raise ValueError("prices must be non-negative")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ModelConfig:
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})
