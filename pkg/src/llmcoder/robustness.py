"""Robustness protocols over sets of completed runs: repeat-run stability,
prompt-variant stability (PSS), and cross-model agreement.

All three reduce to the same move: treat runs as raters, assemble a ratings
matrix per variable from the run tables, and delegate the coefficients to
evalmetrics. Failed documents become missing cells, so low yield shows up as
low coverage instead of quietly inflating agreement.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .evalmetrics import MetricError, RatingsMatrix, cohens_kappa, icc, krippendorff_alpha
from .pipeline import RunManifest, load_run, typed_value

NOMINAL_TYPES = ("binary", "categorical", "string")
NUMERIC_TYPES = ("integer", "decimal")


class ProtocolViolation(ValueError):
    pass


def scale_for(answer_type: str) -> str:
    return "interval" if answer_type in NUMERIC_TYPES else "nominal"


@dataclass
class RunArtifact:
    label: str
    manifest: RunManifest
    rows: dict  # doc_id -> {column: raw cell}
    row_order: list
    path: Path | None = None

    @classmethod
    def load(cls, run_dir: str | Path, label: str | None = None) -> RunArtifact:
        run_dir = Path(run_dir)
        manifest, rows = load_run(run_dir)
        by_id = {r["doc_id"]: r for r in rows}
        return cls(
            label=label or run_dir.name,
            manifest=manifest,
            rows=by_id,
            row_order=[r["doc_id"] for r in rows],
            path=run_dir,
        )

    def typed_cell(self, doc_id: str, variable: str, answer_type: str, sentinel: str):
        row = self.rows.get(doc_id)
        if row is None:
            return None
        return typed_value(answer_type, row.get(variable, ""), sentinel)


@dataclass
class RunSet:
    runs: list[RunArtifact]
    axis: str  # "repeat" | "prompt_variant" | "model"
    baseline: str | None = None  # label, prompt_variant axis only

    def __post_init__(self):
        if self.axis not in ("repeat", "prompt_variant", "model"):
            raise ProtocolViolation(f"unknown axis {self.axis!r}")
        if not self.runs:
            raise ProtocolViolation("run set is empty")
        labels = [r.label for r in self.runs]
        if len(set(labels)) != len(labels):
            raise ProtocolViolation(f"duplicate run labels: {labels}")
        digests = {r.manifest.corpus_digest for r in self.runs}
        if len(digests) > 1:
            raise ProtocolViolation("runs cover different corpora (manifest digests differ)")

    def baseline_run(self) -> RunArtifact:
        for r in self.runs:
            if r.label == self.baseline:
                return r
        raise ProtocolViolation(f"baseline run {self.baseline!r} not in run set")

    def variables(self) -> list[dict]:
        return self.runs[0].manifest.variables

    def unit_ids(self) -> list:
        return self.runs[0].row_order


def load_runset(manifest_path: str | Path) -> RunSet:
    """Runset manifest: {"axis": ..., "runs": [dir, ...], "baseline": dir?}."""
    manifest_path = Path(manifest_path)
    spec = json.loads(manifest_path.read_text(encoding="utf-8"))
    base = manifest_path.parent
    runs = []
    for entry in spec["runs"]:
        run_dir = Path(entry)
        if not run_dir.is_absolute():
            run_dir = base / run_dir
        runs.append(RunArtifact.load(run_dir))
    baseline = spec.get("baseline")
    if baseline is not None:
        baseline = Path(baseline).name
    return RunSet(runs=runs, axis=spec["axis"], baseline=baseline)


def assemble_matrix(runs: list[RunArtifact], variable: dict, unit_ids: list) -> RatingsMatrix:
    """Units x runs ratings matrix for one variable; failed or missing cells
    are simply absent."""
    name = variable["name"]
    answer_type = variable["type"]
    sentinel = variable.get("missing_sentinel", "N/A")
    values = {}
    for run_artifact in runs:
        for doc_id in unit_ids:
            v = run_artifact.typed_cell(doc_id, name, answer_type, sentinel)
            if v is not None:
                values[(doc_id, run_artifact.label)] = v
    return RatingsMatrix(
        units=tuple(unit_ids),
        raters=tuple(r.label for r in runs),
        values=values,
        scale=scale_for(answer_type),
    )


@dataclass
class VariableStability:
    variable: str
    answer_type: str
    coefficient: str
    value: float | None
    coverage: float
    summary: dict = field(default_factory=dict)
    flags: tuple = ()

    def to_dict(self) -> dict:
        return {
            "variable": self.variable,
            "type": self.answer_type,
            "coefficient": self.coefficient,
            "value": self.value,
            "coverage": self.coverage,
            "summary": self.summary,
            "flags": list(self.flags),
        }


@dataclass
class StabilityReport:
    axis: str
    runs: list
    per_variable: dict
    overall: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "runs": self.runs,
            "per_variable": {k: v.to_dict() if hasattr(v, "to_dict") else v for k, v in self.per_variable.items()},
            "overall": self.overall,
        }


def _majority_share(matrix: RatingsMatrix) -> float | None:
    shares = []
    for u in matrix.units:
        vals = matrix.unit_values(u)
        if not vals:
            continue
        top = max(vals.count(v) for v in set(vals))
        shares.append(top / len(vals))
    return sum(shares) / len(shares) if shares else None


def _mean_unit_std(matrix: RatingsMatrix) -> float | None:
    stds = []
    for u in matrix.units:
        vals = [float(v) for v in matrix.unit_values(u)]
        if len(vals) >= 2:
            stds.append(statistics.stdev(vals))
    return sum(stds) / len(stds) if stds else None


def _pairable_coverage(matrix: RatingsMatrix) -> float:
    pairable = sum(1 for u in matrix.units if len(matrix.unit_values(u)) >= 2)
    return pairable / len(matrix.units)


def _require_same(values, what: str):
    if len(set(values)) > 1:
        raise ProtocolViolation(f"runs differ in {what}: {sorted(set(map(str, values)))}")


def intra_prompt_stability(rs: RunSet) -> StabilityReport:
    """Repeat-run stability: alpha (plus majority-vote share) for categorical
    variables, ICC(2,1) on complete units (plus per-unit std) for numeric."""
    if rs.axis != "repeat":
        raise ProtocolViolation(f"expected axis 'repeat', got {rs.axis!r}")
    if len(rs.runs) < 2:
        raise ProtocolViolation("need at least 2 repeat runs")
    _require_same([r.manifest.promptbook_hash for r in rs.runs], "promptbook hash")
    _require_same([r.manifest.model["model_id"] for r in rs.runs], "model id")
    for param in ("temperature", "top_p", "max_output_tokens"):
        _require_same([r.manifest.model[param] for r in rs.runs], param)

    unit_ids = rs.unit_ids()
    per_variable: dict = {}
    for variable in rs.variables():
        matrix = assemble_matrix(rs.runs, variable, unit_ids)
        coverage = _pairable_coverage(matrix)
        numeric = variable["type"] in NUMERIC_TYPES
        flags: list[str] = []
        value = None
        if numeric:
            complete_units = [u for u in matrix.units if len(matrix.unit_values(u)) == len(rs.runs)]
            if len(complete_units) >= 2:
                res = icc(matrix.subset_units(complete_units))
                value = res.value
                if res.degenerate:
                    flags.append("degenerate")
            else:
                flags.append("undefined")
            summary = {"mean_unit_std": _mean_unit_std(matrix), "complete_units": len(complete_units)}
            coefficient = "icc_2_1"
        else:
            try:
                res = krippendorff_alpha(matrix)
                value = res.value
                if res.degenerate:
                    flags.append("degenerate")
            except MetricError:
                flags.append("undefined")
            summary = {"mean_majority_share": _majority_share(matrix)}
            coefficient = "krippendorff_alpha_nominal"
        per_variable[variable["name"]] = VariableStability(
            variable=variable["name"],
            answer_type=variable["type"],
            coefficient=coefficient,
            value=value,
            coverage=coverage,
            summary=summary,
            flags=tuple(flags),
        )
    return StabilityReport(
        axis="repeat", runs=[r.label for r in rs.runs], per_variable=per_variable
    )


def inter_prompt_stability(rs: RunSet) -> StabilityReport:
    """Prompt-variant stability: per variable and variant, the baseline-variant
    agreement coefficient; the per-variable PSS is their mean over variants and
    the overall PSS the unweighted mean over variables."""
    if rs.axis != "prompt_variant":
        raise ProtocolViolation(f"expected axis 'prompt_variant', got {rs.axis!r}")
    if rs.baseline is None:
        raise ProtocolViolation("prompt_variant axis requires a baseline run")
    baseline = rs.baseline_run()
    variants = [r for r in rs.runs if r.label != baseline.label]
    if not variants:
        raise ProtocolViolation("need at least one variant run besides the baseline")
    base_names = [v["name"] for v in baseline.manifest.variables]
    for variant in variants:
        names = [v["name"] for v in variant.manifest.variables]
        if names != base_names:
            missing = sorted(set(base_names) - set(names))
            raise ProtocolViolation(
                f"variant '{variant.label}' does not match baseline variables"
                + (f" (missing: {', '.join(missing)})" if missing else "")
            )

    unit_ids = baseline.row_order
    per_variable: dict = {}
    variable_pss: dict = {}
    for variable in baseline.manifest.variables:
        per_variant: dict = {}
        coverages = []
        for variant in variants:
            matrix = assemble_matrix([baseline, variant], variable, unit_ids)
            coverages.append(_pairable_coverage(matrix))
            try:
                res = krippendorff_alpha(matrix)
                per_variant[variant.label] = res.value
            except MetricError:
                per_variant[variant.label] = None
        defined = [v for v in per_variant.values() if v is not None]
        pss = sum(defined) / len(defined) if defined else None
        variable_pss[variable["name"]] = pss
        per_variable[variable["name"]] = VariableStability(
            variable=variable["name"],
            answer_type=variable["type"],
            coefficient="pss_mean_alpha",
            value=pss,
            coverage=sum(coverages) / len(coverages) if coverages else 0.0,
            summary={"per_variant": per_variant},
            flags=() if pss is not None else ("undefined",),
        )
    defined = [v for v in variable_pss.values() if v is not None]
    overall = sum(defined) / len(defined) if defined else None
    return StabilityReport(
        axis="prompt_variant",
        runs=[r.label for r in rs.runs],
        per_variable=per_variable,
        overall={"pss": overall, "baseline": baseline.label},
    )


def inter_model_agreement(rs: RunSet) -> StabilityReport:
    """Cross-model agreement: per variable, the pairwise kappa matrix over
    models (diagonal 1) plus pooled alpha with all models as raters."""
    if rs.axis != "model":
        raise ProtocolViolation(f"expected axis 'model', got {rs.axis!r}")
    if len(rs.runs) < 2:
        raise ProtocolViolation("need at least 2 model runs")
    _require_same([r.manifest.promptbook_hash for r in rs.runs], "promptbook hash")
    model_ids = [r.manifest.model["model_id"] for r in rs.runs]
    if len(set(model_ids)) != len(model_ids):
        raise ProtocolViolation(f"duplicate model ids: {model_ids}")

    unit_ids = rs.unit_ids()
    by_model = {r.manifest.model["model_id"]: r for r in rs.runs}
    per_variable: dict = {}
    for variable in rs.variables():
        name = variable["name"]
        answer_type = variable["type"]
        sentinel = variable.get("missing_sentinel", "N/A")
        pooled = assemble_matrix(rs.runs, variable, unit_ids)
        try:
            pooled_alpha = krippendorff_alpha(pooled).value
        except MetricError:
            pooled_alpha = None
        kappa_matrix: dict = {m: {} for m in by_model}
        for m1 in by_model:
            for m2 in by_model:
                if m1 == m2:
                    kappa_matrix[m1][m2] = 1.0
                    continue
                r1 = [by_model[m1].typed_cell(u, name, answer_type, sentinel) for u in unit_ids]
                r2 = [by_model[m2].typed_cell(u, name, answer_type, sentinel) for u in unit_ids]
                try:
                    kappa_matrix[m1][m2] = cohens_kappa(r1, r2).value
                except MetricError:
                    kappa_matrix[m1][m2] = None
        per_variable[name] = VariableStability(
            variable=name,
            answer_type=answer_type,
            coefficient="pooled_alpha",
            value=pooled_alpha,
            coverage=_pairable_coverage(pooled),
            summary={"kappa_pairwise": kappa_matrix},
            flags=() if pooled_alpha is not None else ("undefined",),
        )
    return StabilityReport(
        axis="model", runs=[r.label for r in rs.runs], per_variable=per_variable
    )
