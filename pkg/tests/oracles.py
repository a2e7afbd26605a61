"""Independent brute-force oracles for the statistics under test.

Everything here is written from the definitional formulas with plain Python
loops, deliberately sharing no code with the package implementations: alpha
enumerates raw value pairs instead of building a coincidence matrix, the ICC
oracle accumulates definitional sums of squares, and the bootstrap oracle is
a second from-scratch resampler pinned to the same generator contract.
"""

from __future__ import annotations

import math
import random


def nominal_delta(a, b, marginals=None):
    return 0.0 if a == b else 1.0


def interval_delta(a, b, marginals=None):
    return float(a - b) ** 2


def make_ordinal_delta(marginals: dict):
    """Ordinal distance from cumulative frequencies of the ranked values."""
    ranked = sorted(marginals)

    def delta(a, b, _m=None):
        if a == b:
            return 0.0
        lo, hi = (a, b) if a <= b else (b, a)
        span = sum(marginals[g] for g in ranked if lo <= g <= hi)
        return (span - (marginals[lo] + marginals[hi]) / 2.0) ** 2

    return delta


def alpha_bruteforce(rows: list[list], scale: str) -> float:
    """Krippendorff's alpha by direct pair enumeration.

    rows: one list of rater values per unit, None = missing.
    D_o averages within-unit ordered-pair distances (each unit's pair sum
    weighted by 1/(m_u - 1)); D_e averages distances over all ordered pairs
    of pairable values across the whole matrix.
    """
    units = [[v for v in row if v is not None] for row in rows]
    units = [vs for vs in units if len(vs) >= 2]
    if not units:
        raise ValueError("no pairable unit")
    pooled = [v for vs in units for v in vs]
    n = len(pooled)

    if scale == "nominal":
        delta = nominal_delta
    elif scale == "interval":
        delta = interval_delta
    elif scale == "ordinal":
        marginals: dict = {}
        for v in pooled:
            marginals[v] = marginals.get(v, 0) + 1
        delta = make_ordinal_delta(marginals)
    else:
        raise ValueError(scale)

    d_o = 0.0
    for vs in units:
        m_u = len(vs)
        unit_sum = 0.0
        for i in range(m_u):
            for j in range(m_u):
                if i != j:
                    unit_sum += delta(vs[i], vs[j])
        d_o += unit_sum / (m_u - 1)
    d_o /= n

    d_e = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                d_e += delta(pooled[i], pooled[j])
    d_e /= n * (n - 1)

    if d_e == 0.0:
        if d_o == 0.0:
            return 1.0
        raise ValueError("expected disagreement zero, observed nonzero")
    return 1.0 - d_o / d_e


def icc_two_way_oracle(matrix: list[list[float]]) -> float:
    """ICC(2,1) from definitional two-way ANOVA sums of squares."""
    n = len(matrix)
    k = len(matrix[0])
    total = sum(sum(row) for row in matrix)
    grand = total / (n * k)
    row_means = [sum(row) / k for row in matrix]
    col_means = [sum(matrix[i][j] for i in range(n)) / n for j in range(k)]

    ssr = k * sum((rm - grand) ** 2 for rm in row_means)
    ssc = n * sum((cm - grand) ** 2 for cm in col_means)
    sse = 0.0
    for i in range(n):
        for j in range(k):
            sse += (matrix[i][j] - row_means[i] - col_means[j] + grand) ** 2

    msr = ssr / (n - 1)
    msc = ssc / (k - 1)
    mse = sse / ((n - 1) * (k - 1))
    denom = msr + (k - 1) * mse + (k / n) * (msc - mse)
    if denom == 0.0:
        return 1.0
    return (msr - mse) / denom


def kappa_oracle(r1: list, r2: list) -> float:
    """Cohen's kappa straight from the textbook proportions."""
    pairs = [(a, b) for a, b in zip(r1, r2) if a is not None and b is not None]
    n = len(pairs)
    p_o = sum(1 for a, b in pairs if a == b) / n
    labels = {v for pair in pairs for v in pair}
    p_e = sum(
        (sum(1 for a, _ in pairs if a == c) / n) * (sum(1 for _, b in pairs if b == c) / n)
        for c in labels
    )
    return (p_o - p_e) / (1 - p_e)


def bootstrap_percentile_oracle(metric, units, B, level, seed):
    """Second, independent implementation of the seeded percentile bootstrap:
    same generator contract (random.Random(seed), indices = int(random()*n)),
    same linear-interpolation percentile, different code."""
    rng = random.Random(seed)
    n = len(units)
    stats = []
    for _ in range(B):
        resampled = []
        for _ in range(n):
            resampled.append(units[int(rng.random() * n)])
        try:
            stats.append(float(metric(resampled)))
        except (ValueError, ZeroDivisionError):
            continue
    stats = sorted(stats)

    def pct(q):
        pos = q * (len(stats) - 1)
        lower = math.floor(pos)
        upper = math.ceil(pos)
        if lower == upper:
            return stats[lower]
        w = pos - lower
        return stats[lower] + (stats[upper] - stats[lower]) * w

    return pct((1 - level) / 2), pct(1 - (1 - level) / 2)


def sliding_window_violations(grants: list[tuple[float, int]], rpm: int, tpm: int, window: float = 60.0):
    """Scan a grant trace for 60-second windows that exceed either budget.

    grants: (grant_time, tokens) in grant order. For each grant, counts the
    requests and tokens granted in (t - window, t]; returns violating grant
    indices (empty = conformant).
    """
    bad = []
    for i, (t, _) in enumerate(grants):
        count = 0
        tokens = 0
        for s, tok in grants:
            if t - window < s <= t:
                count += 1
                tokens += tok
        if count > rpm or tokens > tpm:
            bad.append(i)
    return bad


def sliding_window_violations_fast(
    grants: list[tuple[float, int]], rpm: int, tpm: int, window: float = 60.0
):
    """Same check as sliding_window_violations for time-ordered traces, in
    O(n log n): request counts and token sums over (t - window, t] change only
    at grant instants, so checking windows ending at each grant is exhaustive.
    """
    import bisect

    times = [t for t, _ in grants]
    assert times == sorted(times), "grant trace must be time-ordered"
    prefix = [0]
    for _, tok in grants:
        prefix.append(prefix[-1] + tok)
    bad = []
    for i, (t, _) in enumerate(grants):
        j = bisect.bisect_right(times, t - window, 0, i + 1)
        count = i - j + 1
        tokens = prefix[i + 1] - prefix[j]
        if count > rpm or tokens > tpm:
            bad.append(i)
    return bad


def stratified_allocation_oracle(total: int, sizes: dict[str, int]) -> dict[str, int]:
    """Largest-remainder apportionment, reimplemented with explicit sorting by
    (remainder desc, name asc)."""
    n = sum(sizes.values())
    exact = {s: total * c / n for s, c in sizes.items()}
    floors = {s: math.floor(exact[s]) for s in sizes}
    leftover = total - sum(floors.values())
    order = sorted(sizes, key=lambda s: (-(exact[s] - floors[s]), s))
    out = dict(floors)
    for s in order[:leftover]:
        out[s] += 1
    return out
