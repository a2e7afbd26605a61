"""Documentation blocks and validation reports.

Every run directory gets a documentation.json that restates, on its own, what
was run and how: full prompts, promptbook identity, model and parameters,
access dates, validation and robustness results when available, and the tool
version. Fields with nothing to say hold the string "absent", never silence.
"""

from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from pathlib import Path

from .evalmetrics import (
    MetricError,
    MetricReport,
    RatingsMatrix,
    accuracy,
    bootstrap_ci,
    cohens_kappa,
    confusion,
    krippendorff_alpha,
    mae,
    precision_recall_f1,
)
from .pipeline import RunManifest, load_run, typed_value
from .promptbook import Promptbook, render_prompt

ABSENT = "absent"


class ReportError(ValueError):
    pass


def build_documentation(
    pb: Promptbook,
    manifest: RunManifest,
    reported_versions: list[str] | None = None,
    access_dates: list[str] | None = None,
    access_date_source: str = "live",
    validation=ABSENT,
    robustness_checks=ABSENT,
) -> dict:
    rendered = render_prompt(pb)
    return {
        "prompts": {"system": rendered.system, "user_template": rendered.user_template},
        "promptbook": {
            "id": pb.id,
            "version": pb.version,
            "content_hash": pb.content_hash,
            "variables": [
                {
                    "name": v.name,
                    "task": v.task_kind,
                    "type": v.answer_type,
                    "instruction": v.instruction,
                    "categories": list(v.categories) or ABSENT,
                    "verbatim": v.verbatim,
                    "missing_sentinel": v.missing_sentinel,
                }
                for v in pb.variables
            ],
        },
        "model": {
            "model_id": manifest.model["model_id"],
            "base_url": manifest.model["base_url"],
            "reported_versions": sorted(reported_versions) if reported_versions else ABSENT,
            "access_dates": access_dates
            or [datetime.now(timezone.utc).strftime("%Y-%m-%d")],
            "access_date_source": access_date_source,
        },
        "parameters": {
            "temperature": manifest.model["temperature"],
            "top_p": manifest.model["top_p"],
            "max_output_tokens": manifest.model["max_output_tokens"],
        },
        "run": {
            "run_id": manifest.run_id,
            "backend": manifest.backend_kind,
            "seed": manifest.seed,
            "pilot": manifest.pilot,
            "repeat_index": manifest.repeat_index,
        },
        "sample_sizes": {
            "corpus": manifest.corpus_size,
            "processed": len(manifest.processed_ids),
            "counts": manifest.counts,
        },
        "validation": validation,
        "robustness_checks": robustness_checks,
        "tool_version": manifest.tool_version,
    }


def write_documentation(run_dir: str | Path, doc: dict) -> Path:
    path = Path(run_dir) / "documentation.json"
    path.write_text(
        json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    return path


def update_documentation(run_dir: str | Path, **sections) -> dict:
    """Patch sections (e.g. validation=...) into an existing documentation
    block, keeping everything else."""
    path = Path(run_dir) / "documentation.json"
    doc = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    doc.update(sections)
    write_documentation(run_dir, doc)
    return doc


# ---------------------------------------------------------------------------
# Gold-standard validation
# ---------------------------------------------------------------------------


def load_gold(path: str | Path, variables: list[dict]) -> dict:
    """Gold standard: delimited file, doc_id column plus one column per
    variable (same layout as table.csv). Returns doc_id -> {name: raw cell}."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if "doc_id" not in header:
            raise ReportError(f"gold file {path} lacks a doc_id column")
        for v in variables:
            if v["name"] not in header:
                raise ReportError(f"gold file {path} lacks column '{v['name']}'")
        gold = {}
        for row in reader:
            gold[row["doc_id"]] = row
    if not gold:
        raise ReportError(f"gold file {path} has no rows")
    return gold


def _paired_values(variable: dict, gold: dict, table_rows: dict, doc_ids: list):
    name = variable["name"]
    answer_type = variable["type"]
    sentinel = variable.get("missing_sentinel", "N/A")
    pairs = []
    for doc_id in doc_ids:
        g = typed_value(answer_type, gold[doc_id].get(name, ""), sentinel)
        p = typed_value(answer_type, table_rows[doc_id].get(name, ""), sentinel)
        pairs.append((g, p))
    return pairs


def _with_ci(metric_fn, pairs, bootstrap: int, seed: int):
    if bootstrap <= 0:
        return None
    try:
        return bootstrap_ci(metric_fn, pairs, B=bootstrap, seed=seed)
    except MetricError:
        return None


def validate_against_gold(
    run_dir: str | Path, gold_path: str | Path, bootstrap: int = 1000, seed: int = 0
) -> dict:
    """Score one run's table against an expert-coded gold file.

    Classification variables get accuracy, macro and per-class P/R/F1, kappa,
    and nominal alpha; numeric variables get MAE and interval alpha; free-text
    variables are reduced to exact-match accuracy and flagged as such.
    Accuracy and MAE carry percentile bootstrap intervals over documents.
    """
    manifest, rows = load_run(run_dir)
    table_rows = {r["doc_id"]: r for r in rows}
    gold = load_gold(gold_path, manifest.variables)
    joined = [doc_id for doc_id in table_rows if doc_id in gold]
    if not joined:
        raise ReportError("no overlap between gold doc_ids and the run table")

    report: dict = {
        "run_id": manifest.run_id,
        "gold_file": str(gold_path),
        "n_gold": len(gold),
        "n_joined": len(joined),
        "bootstrap_replicates": bootstrap,
        "seed": seed,
        "variables": {},
    }
    for variable in manifest.variables:
        name = variable["name"]
        answer_type = variable["type"]
        pairs = _paired_values(variable, gold, table_rows, joined)
        metrics: dict = {}

        def acc_fn(sample):
            return accuracy(confusion([g for g, _ in sample], [p for _, p in sample]))

        def mae_fn(sample):
            return mae([g for g, _ in sample], [p for _, p in sample])

        try:
            if answer_type in ("binary", "categorical"):
                cm = confusion([g for g, _ in pairs], [p for _, p in pairs])
                metrics["accuracy"] = MetricReport(
                    "accuracy", accuracy(cm), cm.total, ci=_with_ci(acc_fn, pairs, bootstrap, seed)
                ).to_dict()
                prf = precision_recall_f1(cm, positive=1 if answer_type == "binary" else None)
                prf_flags = ("zero_support",) if prf.zero_support_classes else ()
                metrics["precision"] = MetricReport(
                    "precision", prf.precision, cm.total, flags=prf_flags
                ).to_dict()
                metrics["recall"] = MetricReport("recall", prf.recall, cm.total).to_dict()
                metrics["f1"] = MetricReport("f1", prf.f1, cm.total).to_dict()
                if answer_type == "categorical":
                    macro = precision_recall_f1(cm, average="macro")
                    metrics["precision"] = MetricReport(
                        "precision_macro",
                        macro.precision,
                        cm.total,
                        per_class={
                            str(c): {
                                "precision": s.precision,
                                "recall": s.recall,
                                "f1": s.f1,
                                "support": s.support,
                                "zero_support": s.zero_support,
                            }
                            for c, s in macro.per_class.items()
                        },
                        flags=("zero_support",) if macro.zero_support_classes else (),
                    ).to_dict()
                    metrics["recall"] = MetricReport("recall_macro", macro.recall, cm.total).to_dict()
                    metrics["f1"] = MetricReport("f1_macro", macro.f1, cm.total).to_dict()
                kap = cohens_kappa([g for g, _ in pairs], [p for _, p in pairs])
                metrics["cohens_kappa"] = MetricReport(
                    "cohens_kappa", kap.value, kap.n, flags=("degenerate",) if kap.degenerate else ()
                ).to_dict()
                alpha = krippendorff_alpha(
                    RatingsMatrix.from_rows([list(p) for p in pairs], "nominal")
                )
                metrics["krippendorff_alpha"] = MetricReport(
                    "krippendorff_alpha_nominal", alpha.value, alpha.n_pairable_units
                ).to_dict()
            elif answer_type in ("integer", "decimal"):
                value = mae([g for g, _ in pairs], [p for _, p in pairs])
                n = sum(1 for g, p in pairs if g is not None and p is not None)
                metrics["mae"] = MetricReport(
                    "mae", value, n, ci=_with_ci(mae_fn, pairs, bootstrap, seed)
                ).to_dict()
                alpha = krippendorff_alpha(
                    RatingsMatrix.from_rows([list(p) for p in pairs], "interval")
                )
                metrics["krippendorff_alpha"] = MetricReport(
                    "krippendorff_alpha_interval", alpha.value, alpha.n_pairable_units
                ).to_dict()
            else:  # free text: exact match only, flagged
                cm = confusion([g for g, _ in pairs], [p for _, p in pairs])
                metrics["accuracy"] = MetricReport(
                    "exact_match_accuracy",
                    accuracy(cm),
                    cm.total,
                    flags=("free_text_exact_match",),
                ).to_dict()
        except MetricError as exc:
            metrics["error"] = str(exc)
        report["variables"][name] = metrics
    return report


def render_validation(report: dict) -> str:
    lines = [
        f"validation of run {report['run_id']}",
        f"gold rows: {report['n_gold']}  joined: {report['n_joined']}",
        "",
    ]
    for name, metrics in report["variables"].items():
        lines.append(name)
        if "error" in metrics:
            lines.append(f"  undefined: {metrics['error']}")
            continue
        for key, m in metrics.items():
            ci = m.get("ci")
            ci_text = f"  [{ci['lo']:.4f}, {ci['hi']:.4f}] @{ci['level']:.2f}" if ci else ""
            flag_text = f"  ({', '.join(m['flags'])})" if m.get("flags") else ""
            lines.append(f"  {m['metric']:<28} {m['value']:.4f}  n={m['n']}{ci_text}{flag_text}")
    return "\n".join(lines)


def render_stability(report_dict: dict) -> str:
    lines = [f"axis: {report_dict['axis']}", f"runs: {', '.join(report_dict['runs'])}", ""]
    for name, stat in report_dict["per_variable"].items():
        value = stat["value"]
        value_text = f"{value:.4f}" if value is not None else "undefined"
        lines.append(
            f"  {name:<28} {stat['coefficient']:<26} {value_text}  coverage={stat['coverage']:.2f}"
        )
    overall = report_dict.get("overall") or {}
    if overall.get("pss") is not None:
        lines.append("")
        lines.append(f"overall PSS: {overall['pss']:.4f}")
    return "\n".join(lines)


def render_documentation(doc: dict) -> str:
    model = doc.get("model", {})
    params = doc.get("parameters", {})
    run = doc.get("run", {})
    sizes = doc.get("sample_sizes", {})
    lines = [
        f"run:        {run.get('run_id', ABSENT)} (backend={run.get('backend', ABSENT)}, seed={run.get('seed', ABSENT)})",
        f"promptbook: {doc.get('promptbook', {}).get('id', ABSENT)} v{doc.get('promptbook', {}).get('version', ABSENT)} hash={doc.get('promptbook', {}).get('content_hash', ABSENT)[:12]}",
        f"model:      {model.get('model_id', ABSENT)} @ {model.get('base_url', ABSENT)}",
        f"versions:   {model.get('reported_versions', ABSENT)} accessed {model.get('access_dates', ABSENT)} ({model.get('access_date_source', ABSENT)})",
        f"parameters: temperature={params.get('temperature', ABSENT)} top_p={params.get('top_p', ABSENT)} max_output_tokens={params.get('max_output_tokens', ABSENT)}",
        f"sample:     corpus={sizes.get('corpus', ABSENT)} processed={sizes.get('processed', ABSENT)} counts={sizes.get('counts', ABSENT)}",
        f"validation: {'recorded' if doc.get('validation') not in (ABSENT, None) else ABSENT}",
        f"robustness: {'recorded' if doc.get('robustness_checks') not in (ABSENT, None) else ABSENT}",
        f"tool:       llmcoder {doc.get('tool_version', ABSENT)}",
    ]
    return "\n".join(lines)
