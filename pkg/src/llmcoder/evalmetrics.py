"""Validity metrics against a gold standard and chance-corrected agreement
coefficients between raters, with bootstrap confidence intervals.

Missing values are represented as None throughout; classification metrics
drop incomplete pairs (and report how many), Krippendorff's alpha handles
missingness natively through its coincidence-matrix formulation, and the
intraclass correlation requires complete data and rejects anything else.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

SCALES = ("nominal", "ordinal", "interval")


class MetricError(ValueError):
    """A metric is undefined on the given data (degenerate or empty input)."""


# ---------------------------------------------------------------------------
# Classification metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix:
    """Cross-tabulation of gold vs predicted labels over one class domain.

    ``counts`` maps (gold_class, pred_class) to a non-negative count; the
    class domain is the union of classes seen on either side. ``dropped``
    counts input pairs discarded because either side was missing.
    """

    classes: tuple
    counts: dict
    dropped: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def count(self, gold, pred) -> int:
        return self.counts.get((gold, pred), 0)

    def gold_total(self, cls) -> int:
        return sum(self.count(cls, p) for p in self.classes)

    def pred_total(self, cls) -> int:
        return sum(self.count(g, cls) for g in self.classes)


def confusion(gold: list, pred: list) -> ConfusionMatrix:
    """Tabulate gold vs predicted labels, dropping pairs with a missing side."""
    if len(gold) != len(pred):
        raise MetricError(f"length mismatch: {len(gold)} gold vs {len(pred)} predictions")
    counts: dict = {}
    dropped = 0
    classes: list = []
    seen = set()
    for g, p in zip(gold, pred):
        if g is None or p is None:
            dropped += 1
            continue
        for c in (g, p):
            if c not in seen:
                seen.add(c)
                classes.append(c)
        counts[(g, p)] = counts.get((g, p), 0) + 1
    if not counts:
        raise MetricError(f"no scorable pairs ({dropped} dropped as missing)")
    return ConfusionMatrix(classes=tuple(classes), counts=counts, dropped=dropped)


def accuracy(cm: ConfusionMatrix) -> float:
    """Proportion of correct predictions: trace over total."""
    total = cm.total
    if total == 0:
        raise MetricError("empty confusion matrix")
    return sum(cm.count(c, c) for c in cm.classes) / total


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int  # gold occurrences
    predicted: int  # predicted occurrences
    zero_denominator: frozenset = frozenset()  # {"precision", "recall"} marks

    @property
    def zero_support(self) -> bool:
        return bool(self.zero_denominator)


@dataclass(frozen=True)
class PRFResult:
    precision: float
    recall: float
    f1: float
    average: str | None  # "macro" | "micro" | "weighted" | None (single class)
    positive: object | None
    per_class: dict
    zero_support_classes: tuple

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.precision, self.recall, self.f1)


def _class_scores(cm: ConfusionMatrix, cls) -> ClassScores:
    tp = cm.count(cls, cls)
    support = cm.gold_total(cls)
    predicted = cm.pred_total(cls)
    marks = set()
    if predicted == 0:
        marks.add("precision")
    if support == 0:
        marks.add("recall")
    precision = tp / predicted if predicted else 0.0
    recall = tp / support if support else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassScores(
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        predicted=predicted,
        zero_denominator=frozenset(marks),
    )


def precision_recall_f1(
    cm: ConfusionMatrix, positive=None, average: str = "macro"
) -> PRFResult:
    """Per-class precision = TP/(TP+FP), recall = TP/(TP+FN), and their
    harmonic mean, aggregated for one positive class or across classes.

    Averaging: "macro" is the unweighted class mean, "micro" pools global
    counts (and therefore equals accuracy for single-label data), "weighted"
    weights by gold support. A class with an empty denominator scores 0 and
    is flagged rather than silently dropped, so macro averages stay honest.
    """
    per_class = {c: _class_scores(cm, c) for c in cm.classes}
    flagged = tuple(c for c, s in per_class.items() if s.zero_support)

    if positive is not None:
        if positive not in per_class:
            per_class[positive] = _class_scores(cm, positive)
            flagged = flagged + (positive,)
        s = per_class[positive]
        return PRFResult(s.precision, s.recall, s.f1, None, positive, per_class, flagged)

    if average == "macro":
        k = len(per_class)
        p = sum(s.precision for s in per_class.values()) / k
        r = sum(s.recall for s in per_class.values()) / k
        f = sum(s.f1 for s in per_class.values()) / k
    elif average == "micro":
        total = cm.total
        tp = sum(cm.count(c, c) for c in cm.classes)
        p = r = f = tp / total
    elif average == "weighted":
        total = cm.total
        p = sum(s.precision * s.support for s in per_class.values()) / total
        r = sum(s.recall * s.support for s in per_class.values()) / total
        f = sum(s.f1 * s.support for s in per_class.values()) / total
    else:
        raise ValueError(f"unknown averaging {average!r}")
    return PRFResult(p, r, f, average, None, per_class, flagged)


def mae(gold: list, pred: list) -> float:
    """Mean absolute difference over pairs where both sides are present."""
    if len(gold) != len(pred):
        raise MetricError(f"length mismatch: {len(gold)} gold vs {len(pred)} predictions")
    pairs = [(g, p) for g, p in zip(gold, pred) if g is not None and p is not None]
    if not pairs:
        raise MetricError("no scorable pairs")
    return sum(abs(g - p) for g, p in pairs) / len(pairs)


# ---------------------------------------------------------------------------
# Chance-corrected agreement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KappaResult:
    value: float
    observed_agreement: float
    expected_agreement: float
    n: int
    degenerate: bool = False


def cohens_kappa(r1: list, r2: list) -> KappaResult:
    """Cohen's kappa between two raters: (p_o - p_e) / (1 - p_e), with p_e
    from the product of the raters' marginal label proportions.

    Pairs with a missing side are dropped. When both marginals concentrate on
    one identical label, p_e = 1 and kappa is undefined; the conventional
    value 1 is returned (flagged degenerate) when observed agreement is also
    perfect, otherwise a MetricError is raised.

    Computed in exact integer arithmetic: kappa = (n*agree - S) / (n^2 - S)
    where S = sum over labels of marginal count products.
    """
    if len(r1) != len(r2):
        raise MetricError(f"length mismatch: {len(r1)} vs {len(r2)}")
    pairs = [(a, b) for a, b in zip(r1, r2) if a is not None and b is not None]
    n = len(pairs)
    if n < 2:
        raise MetricError(f"need at least 2 scorable pairs, got {n}")
    agree = sum(1 for a, b in pairs if a == b)
    labels = {v for pair in pairs for v in pair}
    m1 = {c: sum(1 for a, _ in pairs if a == c) for c in labels}
    m2 = {c: sum(1 for _, b in pairs if b == c) for c in labels}
    s = sum(m1[c] * m2[c] for c in labels)
    p_o = agree / n
    p_e = s / (n * n)
    if n * n - s == 0:
        if agree == n:
            return KappaResult(1.0, p_o, p_e, n, degenerate=True)
        raise MetricError("degenerate marginals: chance agreement is 1 but observed is not")
    value = (n * agree - s) / (n * n - s)
    return KappaResult(value, p_o, p_e, n)


@dataclass(frozen=True)
class RatingsMatrix:
    """Units-by-raters value grid; raters may be humans, models, repeated
    runs, or prompt variants. Missing cells are simply absent from ``values``.
    """

    units: tuple
    raters: tuple
    values: dict  # (unit, rater) -> value
    scale: str  # "nominal" | "ordinal" | "interval"

    def __post_init__(self):
        if self.scale not in SCALES:
            raise ValueError(f"scale must be one of {SCALES}, got {self.scale!r}")
        if not self.units:
            raise ValueError("ratings matrix needs at least one unit")

    @classmethod
    def from_rows(cls, rows: list, scale: str, units=None, raters=None) -> RatingsMatrix:
        """Build from one list of per-rater values per unit; None = missing."""
        if not rows:
            raise ValueError("ratings matrix needs at least one unit")
        width = max(len(r) for r in rows)
        units = tuple(units) if units is not None else tuple(range(len(rows)))
        raters = tuple(raters) if raters is not None else tuple(range(width))
        values = {}
        for u, row in zip(units, rows):
            for r, v in zip(raters, row):
                if v is not None:
                    values[(u, r)] = v
        return cls(units=units, raters=raters, values=values, scale=scale)

    def value(self, unit, rater):
        return self.values.get((unit, rater))

    def unit_values(self, unit) -> list:
        return [
            self.values[(unit, r)] for r in self.raters if (unit, r) in self.values
        ]

    def is_complete(self) -> bool:
        return all((u, r) in self.values for u in self.units for r in self.raters)

    def to_array(self) -> np.ndarray:
        if not self.is_complete():
            raise MetricError("matrix has missing cells")
        return np.array(
            [[self.values[(u, r)] for r in self.raters] for u in self.units], dtype=float
        )

    def subset_units(self, units) -> RatingsMatrix:
        units = tuple(units)
        keep = set(units)
        values = {(u, r): v for (u, r), v in self.values.items() if u in keep}
        return RatingsMatrix(units=units, raters=self.raters, values=values, scale=self.scale)

    def resample_units(self, unit_ids) -> RatingsMatrix:
        """Bootstrap helper: rebuild with the given (possibly repeated) units
        renamed positionally, keeping each unit's rater structure intact."""
        rows = [
            [self.values.get((u, r)) for r in self.raters] for u in unit_ids
        ]
        return RatingsMatrix.from_rows(rows, self.scale, raters=self.raters)


@dataclass(frozen=True)
class AlphaResult:
    value: float
    observed_disagreement: float
    expected_disagreement: float
    n_pairable_values: int
    n_pairable_units: int
    n_units: int
    degenerate: bool = False

    @property
    def coverage(self) -> float:
        return self.n_pairable_units / self.n_units if self.n_units else 0.0


def _delta_matrix(domain: list, marginals: np.ndarray, scale: str) -> np.ndarray:
    k = len(domain)
    if scale == "nominal":
        return 1.0 - np.eye(k)
    if scale == "interval":
        vals = np.array([float(v) for v in domain])
        diff = vals[:, None] - vals[None, :]
        return diff * diff
    # ordinal: squared difference of cumulative marginals between the two
    # ranks, counting each endpoint at half weight
    cum = np.cumsum(marginals)
    delta = np.zeros((k, k))
    for c in range(k):
        for d in range(c + 1, k):
            span = cum[d] - (cum[c - 1] if c else 0.0)
            delta[c, d] = delta[d, c] = (span - (marginals[c] + marginals[d]) / 2.0) ** 2
    return delta


def krippendorff_alpha(m: RatingsMatrix) -> AlphaResult:
    """Krippendorff's alpha = 1 - D_o/D_e via the coincidence matrix.

    Units with fewer than two ratings cannot contribute coincidences and are
    excluded from observed disagreement. The difference function follows the
    matrix scale: nominal counts any mismatch as 1, interval uses squared
    value differences, ordinal uses squared cumulative-frequency rank
    distances. D_e = 0 (every observed value identical) conventionally yields
    alpha = 1 when D_o is also 0.
    """
    per_unit = [m.unit_values(u) for u in m.units]
    included = [vs for vs in per_unit if len(vs) >= 2]
    if not included:
        raise MetricError("no unit has two or more ratings; alpha is undefined")

    if m.scale in ("ordinal", "interval"):
        domain = sorted({v for vs in included for v in vs})
    else:
        domain = []
        seen = set()
        for vs in included:
            for v in vs:
                if v not in seen:
                    seen.add(v)
                    domain.append(v)
    index = {v: i for i, v in enumerate(domain)}
    k = len(domain)

    coincidence = np.zeros((k, k))
    for vs in included:
        w = 1.0 / (len(vs) - 1)
        for i, a in enumerate(vs):
            for j, b in enumerate(vs):
                if i != j:
                    coincidence[index[a], index[b]] += w
    marginals = coincidence.sum(axis=1)
    n = marginals.sum()

    delta = _delta_matrix(domain, marginals, m.scale)
    d_o = float((coincidence * delta).sum()) / n
    d_e = float((np.outer(marginals, marginals) * delta).sum()) / (n * (n - 1))

    n_pairable = sum(len(vs) for vs in included)
    if d_e == 0.0:
        if d_o == 0.0:
            return AlphaResult(1.0, 0.0, 0.0, n_pairable, len(included), len(m.units), degenerate=True)
        raise MetricError("expected disagreement is zero but observed is not")
    return AlphaResult(
        1.0 - d_o / d_e, d_o, d_e, n_pairable, len(included), len(m.units)
    )


@dataclass(frozen=True)
class ICCResult:
    value: float
    ms_rows: float
    ms_cols: float
    ms_error: float
    n_units: int
    n_raters: int
    degenerate: bool = False


def icc(m: RatingsMatrix | np.ndarray | list) -> ICCResult:
    """ICC(2,1): two-way random effects, absolute agreement, single rater.

    (MSR - MSE) / (MSR + (k-1) MSE + (k/n)(MSC - MSE)) where MSR, MSC, and
    MSE are the between-unit, between-rater, and residual mean squares of the
    two-way layout. Requires a complete numeric n x k matrix with n >= 2
    units and k >= 2 raters; a constant matrix (zero total variance) returns
    1.0 with the degeneracy flag set.
    """
    if isinstance(m, RatingsMatrix):
        x = m.to_array()
    else:
        try:
            x = np.asarray(m, dtype=float)
        except (TypeError, ValueError) as exc:
            raise MetricError(f"matrix is not numeric and complete: {exc}") from exc
        if np.isnan(x).any():
            raise MetricError("matrix has missing cells")
    if x.ndim != 2:
        raise MetricError("need a 2-D units x raters matrix")
    n, k = x.shape
    if n < 2 or k < 2:
        raise MetricError(f"need >= 2 units and >= 2 raters, got {n} x {k}")

    grand = x.mean()
    row_means = x.mean(axis=1)
    col_means = x.mean(axis=0)
    sst = float(((x - grand) ** 2).sum())
    if sst == 0.0:
        return ICCResult(1.0, 0.0, 0.0, 0.0, n, k, degenerate=True)
    ssr = k * float(((row_means - grand) ** 2).sum())
    ssc = n * float(((col_means - grand) ** 2).sum())
    sse = max(sst - ssr - ssc, 0.0)
    msr = ssr / (n - 1)
    msc = ssc / (k - 1)
    mse = sse / ((n - 1) * (k - 1))
    denom = msr + (k - 1) * mse + (k / n) * (msc - mse)
    if denom == 0.0:
        return ICCResult(1.0, msr, msc, mse, n, k, degenerate=True)
    return ICCResult((msr - mse) / denom, msr, msc, mse, n, k)


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BootstrapCI:
    lo: float
    hi: float
    level: float
    replicates: int
    failed_replicates: int = 0


def _percentile(sorted_vals: list[float], q: float) -> float:
    # linear-interpolation percentile, pinned here so an independent
    # reimplementation can reproduce the endpoints exactly
    pos = q * (len(sorted_vals) - 1)
    lo = math.floor(pos)
    hi = math.ceil(pos)
    frac = pos - lo
    return sorted_vals[lo] * (1 - frac) + sorted_vals[hi] * frac


def bootstrap_ci(metric, data, B: int = 1000, level: float = 0.95, seed: int = 0) -> BootstrapCI:
    """Percentile bootstrap interval for ``metric`` over resampled units.

    ``data`` is either a plain list of units (e.g. (gold, pred) pairs) with
    ``metric`` mapping a list to a float, or a RatingsMatrix, in which case
    whole unit rows are resampled with their rater structure intact and
    ``metric`` receives a matrix. Replicate r draws n indices as
    int(rng.random() * n) from random.Random(seed), in order, so runs are
    reproducible bit-for-bit. Replicates where the metric is undefined are
    skipped; if more than half fail, the interval itself is refused.
    """
    if B < 100:
        raise MetricError(f"need at least 100 bootstrap replicates, got {B}")
    if not 0 < level < 1:
        raise MetricError(f"level must be in (0, 1), got {level}")
    if isinstance(data, RatingsMatrix):
        matrix = data
        units: list = list(matrix.units)

        def metric_over(sample):
            return metric(matrix.resample_units(sample))

    else:
        units = list(data)
        metric_over = metric
    if not units:
        raise MetricError("nothing to resample")
    rng = random.Random(seed)
    n = len(units)
    stats: list[float] = []
    failed = 0
    for _ in range(B):
        idx = [int(rng.random() * n) for _ in range(n)]
        sample = [units[i] for i in idx]
        try:
            stats.append(float(metric_over(sample)))
        except (MetricError, ZeroDivisionError):
            failed += 1
    if failed > B / 2:
        raise MetricError(
            f"metric undefined on {failed}/{B} replicates ({failed / B:.0%}); interval refused"
        )
    stats.sort()
    tail = (1 - level) / 2
    return BootstrapCI(
        lo=_percentile(stats, tail),
        hi=_percentile(stats, 1 - tail),
        level=level,
        replicates=len(stats),
        failed_replicates=failed,
    )


@dataclass(frozen=True)
class MetricReport:
    """One reported metric: point estimate, optional CI, sample size, and a
    per-class breakdown where the metric has one."""

    metric: str
    value: float
    n: int
    ci: BootstrapCI | None = None
    per_class: dict = field(default_factory=dict)
    flags: tuple = ()

    def to_dict(self) -> dict:
        out: dict = {"metric": self.metric, "value": self.value, "n": self.n}
        if self.ci is not None:
            out["ci"] = {
                "lo": self.ci.lo,
                "hi": self.ci.hi,
                "level": self.ci.level,
                "replicates": self.ci.replicates,
            }
        if self.per_class:
            out["per_class"] = self.per_class
        if self.flags:
            out["flags"] = list(self.flags)
        return out
