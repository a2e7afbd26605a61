"""Command-line entry point: lint, estimate, pilot, run, validate, stability,
agreement, report.

Commands compose through files only; a run directory plus its
documentation.json is the complete, self-describing record of what happened.
Option precedence is flags > --config JSON file > built-in defaults, and all
randomness flows from the single --seed flag.

Exit codes: 0 ok, 1 user error, 2 provider/fatal error, 3 partial (some
documents failed).
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from . import __version__
from .corpus import Corpus, CorpusError, ingest_dir, ingest_table
from .gateway import (
    FaultScript,
    Gateway,
    HttpBackend,
    MockBackend,
    ModelConfig,
    ReplayBackend,
    RetryPolicy,
)
from .pipeline import PipelineError, RunAborted, load_run, pilot_run, run
from .promptbook import PromptbookError, lint_promptbook, parse_promptbook
from .reporting import (
    ReportError,
    build_documentation,
    render_documentation,
    render_stability,
    render_validation,
    update_documentation,
    validate_against_gold,
    write_documentation,
)
from .robustness import (
    ProtocolViolation,
    RunArtifact,
    RunSet,
    inter_model_agreement,
    inter_prompt_stability,
    intra_prompt_stability,
    load_runset,
)

EXIT_OK = 0
EXIT_USER = 1
EXIT_PROVIDER = 2
EXIT_PARTIAL = 3

MODEL_KEYS = (
    "model",
    "base_url",
    "temperature",
    "top_p",
    "max_output_tokens",
    "context_window",
    "price_in",
    "price_out",
    "rpm_limit",
    "tpm_limit",
    "api_key_env",
    "timeout_s",
)


def _err(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


class Options:
    """Merged view over CLI flags and the optional --config JSON file."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = {}
        config_path = getattr(args, "config", None)
        if config_path:
            self.config = json.loads(Path(config_path).read_text(encoding="utf-8"))
            if not isinstance(self.config, dict):
                raise ValueError("--config must hold a JSON object")

    def get(self, key: str, default=None):
        flag = getattr(self.args, key, None)
        if flag is not None:
            return flag
        if key in self.config:
            return self.config[key]
        return default

    def model_config(self) -> ModelConfig:
        values = {}
        for key in MODEL_KEYS:
            v = self.get(key)
            if v is not None:
                values["model_id" if key == "model" else key] = v
        if "model_id" not in values:
            raise ValueError("no model configured (use --model or the config file)")
        return ModelConfig(**values)

    def corpus(self) -> Corpus:
        path = self.get("corpus")
        if not path:
            raise ValueError("no corpus given (use --corpus)")
        path = Path(path)
        if path.is_dir():
            return ingest_dir(path)
        return ingest_table(
            path, self.get("id_column", "doc_id"), self.get("text_column", "text")
        )

    def promptbook(self):
        path = self.get("promptbook")
        if not path:
            raise ValueError("no promptbook given (use --promptbook)")
        return parse_promptbook(
            Path(path).read_text(encoding="utf-8"), prefix_policy=self.get("prefix", "error")
        )


def _build_backend(opts: Options):
    backend_kind = opts.get("backend", "live")
    if backend_kind == "live":
        return HttpBackend(), backend_kind
    if backend_kind == "mock":
        script_path = opts.get("fault_script")
        if not script_path:
            raise ValueError("mock backend needs --fault-script")
        return MockBackend(FaultScript.from_file(script_path)), backend_kind
    if backend_kind == "replay":
        log_path = opts.get("replay_log")
        if not log_path:
            raise ValueError("replay backend needs --replay-log")
        return ReplayBackend.from_file(log_path), backend_kind
    raise ValueError(f"unknown backend {backend_kind!r}")


def cmd_lint(args) -> int:
    source = Path(args.promptbook).read_text(encoding="utf-8")
    pb, diags = lint_promptbook(source, prefix_policy=args.prefix)
    for d in diags:
        print(str(d), file=sys.stderr)
    if pb is None:
        return EXIT_USER
    print(f"{args.promptbook}: {len(pb.variables)} variables, hash {pb.content_hash[:12]}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    from .gateway import estimate_cost

    opts = Options(args)
    est = estimate_cost(opts.corpus(), opts.promptbook(), opts.model_config())
    print(est.breakdown())
    return EXIT_OK


def _execute_run(args, pilot: bool) -> int:
    opts = Options(args)
    pb = opts.promptbook()
    corpus = opts.corpus()
    config = opts.model_config()
    backend, backend_kind = _build_backend(opts)
    seed = opts.get("seed", 0)
    gateway = Gateway(
        config,
        backend,
        retry_policy=RetryPolicy(),
        rng=random.Random(seed),
        promptbook_version=pb.version,
    )
    out_dir = Path(opts.get("out") or "run")
    common = dict(
        workers=opts.get("workers", 1),
        seed=seed,
        resume=bool(args.resume),
        repeat_index=opts.get("repeat", 1),
        backend_kind=backend_kind,
    )
    try:
        if pilot:
            result = pilot_run(corpus, pb, gateway, out_dir, n=opts.get("n", 15), **common)
        else:
            result = run(corpus, pb, gateway, out_dir, pilot=False, **common)
    except RunAborted as exc:
        _err(str(exc))
        return EXIT_PROVIDER

    access_dates = None
    source = "live" if backend_kind == "live" else backend_kind
    if backend_kind == "replay" and getattr(backend, "access_dates", None):
        access_dates = backend.access_dates
        source = "replayed"
    doc = build_documentation(
        pb,
        result.manifest,
        reported_versions=sorted(gateway.reported_versions),
        access_dates=access_dates,
        access_date_source=source,
    )
    write_documentation(out_dir, doc)

    counts = result.manifest.counts
    print(
        f"{result.manifest.run_id}: {counts['ok']} ok, {counts['violations']} with violations, "
        f"{counts['failed_parse']} failed_parse, {counts['failed_call']} failed_call -> {out_dir}"
    )
    failures = [
        row for row in result.table.rows.values() if row.status in ("failed_parse", "failed_call")
    ]
    for row in failures:
        print(f"failed: {row.doc_id} ({row.status}: {row.error})", file=sys.stderr)
    total_failed = counts["failed_parse"] + counts["failed_call"]
    return EXIT_PARTIAL if total_failed else EXIT_OK


def cmd_run(args) -> int:
    return _execute_run(args, pilot=False)


def cmd_pilot(args) -> int:
    return _execute_run(args, pilot=True)


def cmd_validate(args) -> int:
    report = validate_against_gold(
        args.run, args.gold, bootstrap=args.bootstrap, seed=args.seed or 0
    )
    out_path = Path(args.run) / "validation_report.json"
    out_path.write_text(
        json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    update_documentation(args.run, validation=report)
    print(render_validation(report))
    print(f"\nwritten: {out_path}")
    return EXIT_OK


def _load_runset_from_args(args, axis: str) -> RunSet:
    if getattr(args, "runset", None):
        return load_runset(args.runset)
    if not args.runs:
        raise ValueError("give run directories (--runs) or a runset manifest (--runset)")
    runs = [RunArtifact.load(d) for d in args.runs]
    baseline = Path(args.baseline).name if getattr(args, "baseline", None) else None
    return RunSet(runs=runs, axis=axis, baseline=baseline)


def cmd_stability(args) -> int:
    axis = args.axis
    rs = _load_runset_from_args(args, axis)
    if rs.axis == "repeat":
        report = intra_prompt_stability(rs)
    elif rs.axis == "prompt_variant":
        report = inter_prompt_stability(rs)
    else:
        raise ValueError(f"stability handles axes repeat/prompt_variant, not {rs.axis!r}")
    report_dict = report.to_dict()
    out_path = Path(args.out)
    out_path.write_text(
        json.dumps(report_dict, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    print(render_stability(report_dict))
    print(f"\nwritten: {out_path}")
    _patch_run_documentation(rs, report_dict)
    return EXIT_OK


def _patch_run_documentation(rs: RunSet, report_dict: dict) -> None:
    for run_artifact in rs.runs:
        if run_artifact.path is not None and (run_artifact.path / "documentation.json").exists():
            update_documentation(run_artifact.path, robustness_checks=report_dict)


def cmd_agreement(args) -> int:
    rs = _load_runset_from_args(args, "model")
    report = inter_model_agreement(rs)
    report_dict = report.to_dict()
    out_path = Path(args.out)
    out_path.write_text(
        json.dumps(report_dict, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    print(render_stability(report_dict))
    print(f"\nwritten: {out_path}")
    _patch_run_documentation(rs, report_dict)
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    missing = [
        name
        for name in ("table.csv", "raw_log.jsonl", "manifest.json", "documentation.json")
        if not (run_dir / name).exists()
    ]
    if missing:
        raise ValueError(f"run directory {run_dir} is missing: {', '.join(missing)}")
    load_run(run_dir)  # validates manifest and table shape
    doc = json.loads((run_dir / "documentation.json").read_text(encoding="utf-8"))
    print(render_documentation(doc))
    return EXIT_OK


def _add_shared_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--promptbook", help="promptbook JSON file")
    p.add_argument("--corpus", help="directory of .txt/.md files, or a CSV file")
    p.add_argument("--id-column", dest="id_column", help="id column for tabular corpora")
    p.add_argument("--text-column", dest="text_column", help="text column for tabular corpora")
    p.add_argument("--config", help="JSON config file mirroring the flags")
    p.add_argument("--model", help="model id")
    p.add_argument("--base-url", dest="base_url", help="chat-completions base URL")
    p.add_argument("--temperature", type=float)
    p.add_argument("--top-p", dest="top_p", type=float)
    p.add_argument("--max-output-tokens", dest="max_output_tokens", type=int)
    p.add_argument("--context-window", dest="context_window", type=int)
    p.add_argument("--price-in", dest="price_in", type=float, help="currency per 1M input tokens")
    p.add_argument("--price-out", dest="price_out", type=float, help="currency per 1M output tokens")
    p.add_argument("--rpm", dest="rpm_limit", type=int, help="requests per minute")
    p.add_argument("--tpm", dest="tpm_limit", type=int, help="tokens per minute")
    p.add_argument("--prefix", choices=("error", "warn"), default=None, help="prefix lint policy")


def _add_execution_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="run output directory")
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", action="store_true", help="skip already processed documents")
    p.add_argument("--repeat", type=int, help="repeat index for stability runs")
    p.add_argument("--backend", choices=("live", "mock", "replay"))
    p.add_argument("--fault-script", dest="fault_script", help="mock backend script JSON")
    p.add_argument("--replay-log", dest="replay_log", help="raw_log.jsonl to replay")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llmcoder",
        description="Run promptbooks over text corpora through LLM APIs and score the results.",
    )
    parser.add_argument("--version", action="version", version=f"llmcoder {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lint", help="parse and lint a promptbook")
    p.add_argument("--promptbook", required=True)
    p.add_argument("--prefix", choices=("error", "warn"), default="error")
    p.set_defaults(func=cmd_lint)

    p = sub.add_parser("estimate", help="estimate token footprint and cost")
    _add_shared_run_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("run", help="process the whole corpus")
    _add_shared_run_flags(p)
    _add_execution_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("pilot", help="process a small random sample")
    _add_shared_run_flags(p)
    _add_execution_flags(p)
    p.add_argument("--n", type=int, help="pilot sample size (default 15)")
    p.set_defaults(func=cmd_pilot)

    p = sub.add_parser("validate", help="score a run against a gold standard")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--gold", required=True, help="gold standard CSV")
    p.add_argument("--bootstrap", type=int, default=1000, help="bootstrap replicates (0 = off)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stability", help="repeat-run or prompt-variant stability")
    p.add_argument("--runs", nargs="*", help="run directories")
    p.add_argument("--runset", help="runset manifest JSON")
    p.add_argument("--axis", choices=("repeat", "prompt_variant"), default="repeat")
    p.add_argument("--baseline", help="baseline run directory (prompt_variant axis)")
    p.add_argument("--out", default="stability_report.json")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("agreement", help="cross-model agreement")
    p.add_argument("--runs", nargs="*", help="run directories (one per model)")
    p.add_argument("--runset", help="runset manifest JSON")
    p.add_argument("--out", default="agreement_report.json")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("report", help="print a run's documentation block")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        ValueError,
        CorpusError,
        PromptbookError,
        PipelineError,
        ProtocolViolation,
        ReportError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        if isinstance(exc, PromptbookError):
            for d in exc.diagnostics:
                print(str(d), file=sys.stderr)
        else:
            _err(str(exc))
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
