import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from jccsaa.core import JccInstance, Polyhedron, QuadraticObjective, ScenarioRow  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_instance(rng: np.random.Generator, *, max_vars=4, max_rows=3, max_scenarios=12,
                    max_budget=3, quadratic=None, weighted=False) -> JccInstance:
    """Small feasible instance: a box plus a few cuts through a known interior point.

    Every scenario row holds at the anchor point ``x0``, so the SAA problem is
    feasible, while random costs push the optimum to spend the budget.
    """
    n = int(rng.integers(1, max_vars + 1))
    lo = rng.uniform(-1.0, 0.0, n)
    hi = lo + rng.uniform(0.5, 2.0, n)
    x0 = lo + rng.uniform(0.2, 0.8, n) * (hi - lo)
    rows = []
    for _ in range(int(rng.integers(0, 3))):
        a = rng.uniform(-1, 1, n)
        rows.append((a, "<=", float(a @ x0 + rng.uniform(0.1, 1.0))))
    if n > 1 and rng.random() < 0.3:
        a = rng.uniform(-1, 1, n)
        rows.append((a, "=", float(a @ x0)))
    poly = Polyhedron.from_rows(n, rows, lo, hi)
    if quadratic is None:
        quadratic = rng.random() < 0.3
    q = rng.uniform(0.0, 1.0, n) * (rng.random(n) < 0.7) if quadratic else np.zeros(n)
    obj = QuadraticObjective(q, rng.uniform(-2, 2, n), float(rng.uniform(-1, 1)))
    J = int(rng.integers(1, max_rows + 1))
    if weighted:
        S = int(rng.integers(2, min(max_scenarios, 8) + 1))
        probs = rng.uniform(0.5, 1.5, S)
        probs /= probs.sum()
        eps = float(rng.uniform(0.0, 0.45))
    else:
        S = int(rng.integers(1, max_scenarios + 1))
        p = int(rng.integers(0, min(max_budget, S - 1) + 1)) if S > 1 else 0
        # mid-point of the interval that floors to p, kept below 1
        eps = min((p + 0.5) / S, 0.999)
        probs = None
    srows = []
    for _ in range(J):
        a0 = rng.uniform(-1, 1, n) * (rng.random(n) < 0.8)
        ah = rng.uniform(-1, 1, n)
        om = rng.normal(0, 1, S)
        b = (a0 @ x0) + om * (ah @ x0) + np.abs(rng.normal(0, 0.5, S))
        srows.append(ScenarioRow(a0, ah, om, b))
    return JccInstance(poly, obj, tuple(srows), eps, probs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
