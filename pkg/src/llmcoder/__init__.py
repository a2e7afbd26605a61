"""llmcoder: run researcher-authored promptbooks over text corpora through
LLM APIs, and score the validity, reliability, and robustness of the output."""

__version__ = "0.1.0"

from .corpus import Corpus, Document, estimate_tokens, ingest_dir, ingest_table, sample_split
from .evalmetrics import (
    RatingsMatrix,
    accuracy,
    bootstrap_ci,
    cohens_kappa,
    confusion,
    icc,
    krippendorff_alpha,
    mae,
    precision_recall_f1,
)
from .gateway import FaultScript, Gateway, HttpBackend, MockBackend, ModelConfig, ReplayBackend
from .pipeline import AnnotationTable, RunManifest, pilot_run, run
from .promptbook import (
    Promptbook,
    Variable,
    parse_promptbook,
    render_prompt,
    schema_of,
    serialize_promptbook,
    validate_record,
)
from .robustness import (
    RunSet,
    inter_model_agreement,
    inter_prompt_stability,
    intra_prompt_stability,
)

__all__ = [
    "AnnotationTable",
    "Corpus",
    "Document",
    "FaultScript",
    "Gateway",
    "HttpBackend",
    "MockBackend",
    "ModelConfig",
    "Promptbook",
    "RatingsMatrix",
    "ReplayBackend",
    "RunManifest",
    "RunSet",
    "Variable",
    "__version__",
    "accuracy",
    "bootstrap_ci",
    "cohens_kappa",
    "confusion",
    "estimate_tokens",
    "icc",
    "ingest_dir",
    "ingest_table",
    "inter_model_agreement",
    "inter_prompt_stability",
    "intra_prompt_stability",
    "krippendorff_alpha",
    "mae",
    "parse_promptbook",
    "pilot_run",
    "precision_recall_f1",
    "render_prompt",
    "run",
    "sample_split",
    "schema_of",
    "serialize_promptbook",
    "validate_record",
]
