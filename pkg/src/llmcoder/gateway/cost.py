"""Pre-run cost estimation from token footprints and per-million pricing."""

from __future__ import annotations

from dataclasses import dataclass

from ..corpus import Corpus, estimate_tokens
from ..promptbook import DOCUMENT_PLACEHOLDER, Promptbook, render_prompt
from .config import ModelConfig


@dataclass(frozen=True)
class CostEstimate:
    input_tokens: int
    output_tokens_assumed: int  # upper bound: max_output_tokens per document
    cost: float
    prompt_overhead_tokens: int  # per-document prompt tokens excluding the text
    documents: int

    def breakdown(self) -> str:
        return (
            f"documents:            {self.documents}\n"
            f"prompt overhead/doc:  {self.prompt_overhead_tokens} tokens\n"
            f"input tokens:         {self.input_tokens}\n"
            f"output tokens (max):  {self.output_tokens_assumed}\n"
            f"estimated cost:       {self.cost:.6f}"
        )


def estimate_cost(corpus: Corpus, pb: Promptbook, config: ModelConfig) -> CostEstimate:
    """Input = per-document prompt plus document tokens, summed; output is the
    stated upper bound of max_output_tokens per document."""
    rendered = render_prompt(pb)
    skeleton = rendered.system + "\n" + rendered.user_template.replace(DOCUMENT_PLACEHOLDER, "")
    overhead = estimate_tokens(skeleton)
    input_tokens = sum(overhead + doc.token_estimate for doc in corpus)
    output_tokens = config.max_output_tokens * len(corpus)
    cost = input_tokens * config.price_in / 1e6 + output_tokens * config.price_out / 1e6
    return CostEstimate(
        input_tokens=input_tokens,
        output_tokens_assumed=output_tokens,
        cost=cost,
        prompt_overhead_tokens=overhead,
        documents=len(corpus),
    )
