"""Independent reference implementations used by the statistics tests.

Ranks are counted directly, the Friedman statistic uses the general
sum-of-squares form, and tail probabilities come from scipy.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import stats as sps


def oracle_ranks(row):
    """Average rank by counting: 1 + #smaller + (#equal - 1) / 2."""
    return [1.0 + sum(v < x for v in row) + (sum(v == x for v in row) - 1) / 2.0 for x in row]


def oracle_friedman(m):
    m = np.asarray(m, dtype=float)
    n, k = m.shape
    ranks = np.array([oracle_ranks(list(r)) for r in m])
    # general form: (k-1) * sum_j (R_j - n(k+1)/2)^2 / (sum r_ij^2 - n k (k+1)^2 / 4)
    rj = ranks.sum(axis=0)
    num = (k - 1) * np.sum((rj - n * (k + 1) / 2.0) ** 2)
    den = np.sum(ranks ** 2) - n * k * (k + 1) ** 2 / 4.0
    stat = 0.0 if den == 0 else num / den
    p = 1.0 if den == 0 else float(sps.chi2.sf(stat, k - 1))
    return stat, p, ranks.mean(axis=0)


def oracle_dunn(m):
    m = np.asarray(m, dtype=float)
    n, k = m.shape
    _, _, mr = oracle_friedman(m)
    se = math.sqrt(k * (k + 1) / (6.0 * n))
    out = {}
    for i, j in itertools.combinations(range(k), 2):
        z = (mr[i] - mr[j]) / se
        out[(i, j)] = (z, min(1.0, 2.0 * sps.norm.sf(abs(z)) * k * (k - 1) / 2))
    return out


def random_matrix(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 12))
    k = int(rng.integers(2, 6))
    # small integer range forces plenty of ties
    return rng.integers(0, 6, size=(n, k)).astype(float) + rng.choice([0.0, 0.5], size=(n, k))
