"""Quick built-in checks: backprop gradients, statistics closed forms, geometry cases."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from adsbench.deepq import Mlp, grad_check
from adsbench.geometry import Rect, center_distance, obb_intersects
from adsbench.stats import auc_normalized, dunn, friedman, summarize


def _checks() -> list[tuple[str, Callable[[], bool]]]:
    def gradients() -> bool:
        worst = 0.0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            worst = max(worst, grad_check(Mlp([4, 8, 3], rng), rng))
        return worst < 1e-4

    def friedman_closed_form() -> bool:
        r = friedman(np.tile([3.0, 2.0, 1.0], (20, 1)))
        return r.statistic == 40.0 and r.df == 2 and math.isclose(r.p, math.exp(-20.0), rel_tol=1e-9)

    def friedman_all_ties() -> bool:
        r = friedman(np.ones((5, 3)))
        return r.statistic == 0.0 and r.p == 1.0

    def dunn_identical() -> bool:
        return all(p.p_adj == 1.0 for p in dunn(np.ones((6, 3))).pairs)

    def summary_values() -> bool:
        s = summarize([1, 2, 3, 4])
        return s["mean"] == 2.5 and math.isclose(s["std"], 1.2909944487358056) and summarize([7])["std"] is None

    def auc_values() -> bool:
        return auc_normalized([0.5] * 12, 1.0, 1.0) == 0.5 and auc_normalized([0] * 6 + [1] * 6, 1.0, 1.0) == 0.5

    def sat_edge_contact() -> bool:
        return obb_intersects(Rect(0, 0, 0, 1, 1), Rect(1, 0, 0, 1, 1))

    def sat_disjoint() -> bool:
        return not obb_intersects(Rect(0, 0, 0, 1, 1), Rect(10, 0, 0, 1, 1))

    def corner_contact_confound() -> bool:
        a = Rect(0.0, 0.0, 0.0, 5.0, 2.0)
        b = Rect(3.4, 3.4, math.pi / 2, 5.0, 2.0)
        return obb_intersects(a, b) and center_distance(a, b) > 0

    return [
        ("gradient check, 20 seeds", gradients),
        ("friedman closed form 40.0 / df 2", friedman_closed_form),
        ("friedman all ties", friedman_all_ties),
        ("dunn identical treatments", dunn_identical),
        ("summaries", summary_values),
        ("normalized AUC", auc_values),
        ("SAT edge contact", sat_edge_contact),
        ("SAT disjoint", sat_disjoint),
        ("corner contact with positive centre gap", corner_contact_confound),
    ]


def run_selftest(echo: Callable[[str], None] = print) -> int:
    """Run every check, echo one line each, return the failure count."""
    failures = 0
    for name, check in _checks():
        ok = bool(check())
        failures += not ok
        echo(f"{'PASS' if ok else 'FAIL'}  {name}")
    return failures
