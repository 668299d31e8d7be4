"""Friedman test, Dunn post-hoc comparisons, normalized AUC, summaries.

Tail probabilities are computed here (regularized incomplete gamma for the
chi-square, the complementary error function for the normal) rather than
pulled from a statistics package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

QUARTILE_METHOD = "linear"
TIE_CORRECTION = "1 - sum(t^3 - t) / (n k (k^2 - 1))"


@dataclass(frozen=True)
class DunnPair:
    i: int
    j: int
    z: float
    p_adj: float
    direction: int  # index of the treatment with the higher mean rank, -1 if equal

    def label(self, names: Sequence[str]) -> str:
        return f"{names[self.i]} vs {names[self.j]}"


@dataclass(frozen=True)
class TestReport:
    statistic: float
    df: int
    p: float
    mean_ranks: tuple[float, ...] = ()
    pairs: tuple[DunnPair, ...] = ()
    meta: dict = field(default_factory=dict)


# -- special functions ---------------------------------------------------------

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 100_000


def _gamma_series(a: float, x: float) -> float:
    """Lower regularized P(a, x) by its power series (x < a + 1)."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    """Upper regularized Q(a, x) by Lentz's continued fraction (x >= a + 1)."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def chi2_sf(stat: float, df: int) -> float:
    if stat <= 0:
        return 1.0
    return min(1.0, max(0.0, gamma_q(0.5 * df, 0.5 * stat)))


def normal_two_sided(z: float) -> float:
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


# -- rank tests -------------------------------------------------------------------


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise ValueError("result matrix must be 2-D (blocks x treatments)")
    n, k = a.shape
    if n < 2 or k < 2:
        raise ValueError("need at least 2 blocks and 2 treatments")
    if not np.all(np.isfinite(a)):
        raise ValueError("result matrix has non-finite entries")
    return a


def rank_row(row: Sequence[float]) -> tuple[list[float], list[int]]:
    """Average ranks (1-based) within one block plus the tie-group sizes."""
    order = sorted(range(len(row)), key=lambda i: row[i])
    ranks = [0.0] * len(row)
    ties = []
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and row[order[j + 1]] == row[order[i]]:
            j += 1
        avg = 0.5 * (i + j) + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        ties.append(j - i + 1)
        i = j + 1
    return ranks, ties


def _rank_matrix(a: np.ndarray) -> tuple[np.ndarray, float]:
    ranks = []
    tie_sum = 0.0
    for row in a.tolist():
        r, ties = rank_row(row)
        ranks.append(r)
        tie_sum += sum(t ** 3 - t for t in ties)
    return np.array(ranks), tie_sum


def friedman(m) -> TestReport:
    a = _as_matrix(m)
    n, k = a.shape
    ranks, tie_sum = _rank_matrix(a)
    rank_sums = ranks.sum(axis=0)
    mean_ranks = tuple(float(v) for v in rank_sums / n)
    denom = 1.0 - tie_sum / (n * k * (k * k - 1))
    meta = {"tie_correction": TIE_CORRECTION}
    if denom <= 1e-15:
        return TestReport(0.0, k - 1, 1.0, mean_ranks, meta=meta)
    raw = 12.0 / (n * k * (k + 1)) * float(np.sum(rank_sums ** 2)) - 3.0 * n * (k + 1)
    stat = max(0.0, raw / denom)
    return TestReport(stat, k - 1, chi2_sf(stat, k - 1), mean_ranks, meta=meta)


def dunn(m) -> TestReport:
    """Pairwise z tests on Friedman mean ranks, Bonferroni-adjusted."""
    report = friedman(m)
    a = np.asarray(m, dtype=float)
    n, k = a.shape
    se = math.sqrt(k * (k + 1) / (6.0 * n))
    n_pairs = k * (k - 1) // 2
    pairs = []
    mr = report.mean_ranks
    for i in range(k):
        for j in range(i + 1, k):
            z = (mr[i] - mr[j]) / se
            p_adj = min(1.0, normal_two_sided(z) * n_pairs)
            direction = i if mr[i] > mr[j] else j if mr[j] > mr[i] else -1
            pairs.append(DunnPair(i, j, z, p_adj, direction))
    meta = dict(report.meta, adjustment="bonferroni", comparisons=n_pairs)
    return TestReport(report.statistic, report.df, report.p, mr, tuple(pairs), meta)


# -- summaries ---------------------------------------------------------------------


def auc_normalized(series: Sequence[float], t_max: float, v_max: float,
                   times: Sequence[float] | None = None) -> float:
    """Trapezoidal area under ``series`` over [0, t_max] divided by t_max * v_max.

    Without ``times`` the n samples sit at the midpoints of n equal slices of
    [0, t_max], and the curve is held flat from the first sample back to 0 and
    from the last sample on to t_max. ``v_max = 0`` yields 0.
    """
    if v_max == 0:
        return 0.0
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    v = np.asarray(series, dtype=float)
    if v.size == 0:
        raise ValueError("empty series")
    if times is None:
        width = t_max / v.size
        t = (np.arange(v.size) + 0.5) * width
    else:
        t = np.asarray(times, dtype=float)
        if t.shape != v.shape:
            raise ValueError("times and series differ in length")
    t = np.concatenate(([0.0], t, [t_max]))
    v = np.concatenate(([v[0]], v, [v[-1]]))
    area = float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(t)))
    return area / (t_max * v_max)


def summarize(values: Sequence[float]) -> dict:
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("need at least one value")
    q1, med, q3 = np.percentile(x, [25, 50, 75], method=QUARTILE_METHOD)
    out = {
        "n": int(x.size),
        "mean": float(x.mean()),
        "std": None,
        "sem": None,
        "median": float(med),
        "iqr": float(q3 - q1),
        "quartile_method": QUARTILE_METHOD,
    }
    if x.size >= 2:
        s = float(x.std(ddof=1))
        out["std"] = s
        out["sem"] = s / math.sqrt(x.size)
    return out


def format_p(p: float) -> str:
    return "<1.00E-04" if p < 1e-4 else f"{p:.2E}"
