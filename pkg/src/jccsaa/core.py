"""Problem data and the Big-M SAA reformulation of a joint chance constraint.

A joint chance-constrained LP is stored as a deterministic polyhedron ``X``,
a separable convex quadratic objective and a list of scenario rows in
rank-one form ``(a0_j + Omega_js * ahat_j) @ x <= b_js``. The MILP replaces
the probability with binary scenario indicators ``y_s``::

    Omega_js * ahat_j @ x - b_js + a0_j @ x <= M_js * y_s
    sum_s y_s <= floor(eps * |S|)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .lp import SENSES, LpProblem

__all__ = [
    "Polyhedron", "QuadraticObjective", "ScenarioRow", "JccInstance",
    "BigMTable", "MilpModel", "violation_budget", "build_saa_milp",
    "count_constraints",
]

PROB_TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """``{x : A x (sense) rhs, var_lower <= x <= var_upper}``."""

    A: np.ndarray
    senses: tuple[str, ...]
    rhs: np.ndarray
    var_lower: np.ndarray
    var_upper: np.ndarray

    def __post_init__(self):
        lower = _frozen(self.var_lower)
        n = lower.shape[0]
        A = _frozen(np.asarray(self.A, dtype=float).reshape(-1, n))
        rhs = _frozen(np.asarray(self.rhs, dtype=float).reshape(-1))
        upper = _frozen(self.var_upper)
        senses = tuple(self.senses)
        if upper.shape != (n,) or A.shape[0] != rhs.shape[0] or len(senses) != rhs.shape[0]:
            raise ValueError("inconsistent polyhedron dimensions")
        if any(s not in SENSES for s in senses):
            raise ValueError(f"row senses must be in {SENSES}")
        if np.any(lower > upper):
            raise ValueError("var_lower must not exceed var_upper")
        for name, val in (("A", A), ("rhs", rhs), ("var_lower", lower),
                          ("var_upper", upper), ("senses", senses)):
            object.__setattr__(self, name, val)

    @classmethod
    def from_rows(cls, num_vars: int, rows: Sequence[tuple[Sequence[float], str, float]] = (),
                  var_lower=None, var_upper=None) -> "Polyhedron":
        A = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), num_vars)
        lower = np.full(num_vars, -np.inf) if var_lower is None else var_lower
        upper = np.full(num_vars, np.inf) if var_upper is None else var_upper
        return cls(A, tuple(r[1] for r in rows), [r[2] for r in rows], lower, upper)

    @classmethod
    def box(cls, lower, upper) -> "Polyhedron":
        lower = np.asarray(lower, dtype=float)
        return cls(np.zeros((0, lower.shape[0])), (), [], lower, upper)

    @property
    def num_vars(self) -> int:
        return self.var_lower.shape[0]

    @property
    def num_rows(self) -> int:
        return self.rhs.shape[0]

    def contains(self, x, tol: float = 1e-7) -> bool:
        x = np.asarray(x, dtype=float)
        return self.as_lp(np.zeros(self.num_vars)).residuals(x) <= tol

    def as_lp(self, direction, maximize: bool = False) -> LpProblem:
        return LpProblem(np.asarray(direction, dtype=float), self.A, self.senses,
                         self.rhs, self.var_lower, self.var_upper, maximize=maximize)


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """``sum_i diag_q[i] x_i^2 + linear_c @ x + constant`` with ``diag_q >= 0``."""

    diag_q: np.ndarray
    linear_c: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        q, c = _frozen(self.diag_q), _frozen(self.linear_c)
        if q.shape != c.shape or q.ndim != 1:
            raise ValueError("diag_q and linear_c must be vectors of equal length")
        if np.any(q < 0):
            raise ValueError("diag_q must be nonnegative (convex objective)")
        object.__setattr__(self, "diag_q", q)
        object.__setattr__(self, "linear_c", c)
        object.__setattr__(self, "constant", float(self.constant))

    @classmethod
    def linear(cls, c, constant: float = 0.0) -> "QuadraticObjective":
        c = np.asarray(c, dtype=float)
        return cls(np.zeros_like(c), c, constant)

    @property
    def num_vars(self) -> int:
        return self.diag_q.shape[0]

    @property
    def is_linear(self) -> bool:
        return not np.any(self.diag_q > 0)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.diag_q @ (x * x) + self.linear_c @ x + self.constant)


@dataclass(frozen=True, eq=False)
class ScenarioRow:
    """Row ``(a0 + omega[s] * a_hat) @ x <= b[s]`` for every scenario ``s``."""

    a0: np.ndarray
    a_hat: np.ndarray
    omega: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a0, ah = _frozen(self.a0), _frozen(self.a_hat)
        om, b = _frozen(self.omega), _frozen(self.b)
        if a0.shape != ah.shape or om.shape != b.shape or a0.ndim != 1 or om.ndim != 1:
            raise ValueError("a0/a_hat and omega/b must be equal-length vectors")
        for name, val in (("a0", a0), ("a_hat", ah), ("omega", om), ("b", b)):
            object.__setattr__(self, name, val)

    @property
    def num_scenarios(self) -> int:
        return self.omega.shape[0]


@dataclass(frozen=True, eq=False)
class JccInstance:
    polyhedron: Polyhedron
    objective: QuadraticObjective
    rows: tuple[ScenarioRow, ...]
    epsilon: float
    scenario_probs: np.ndarray | None = None
    labels: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        rows = tuple(self.rows)
        object.__setattr__(self, "rows", rows)
        n = self.polyhedron.num_vars
        if self.objective.num_vars != n:
            raise ValueError("objective length must equal num_vars")
        if not rows:
            raise ValueError("at least one scenario row is required")
        S = rows[0].num_scenarios
        if S < 1:
            raise ValueError("at least one scenario is required")
        for r in rows:
            if r.a0.shape[0] != n:
                raise ValueError("scenario row vectors must have length num_vars")
            if r.num_scenarios != S:
                raise ValueError("all rows must share the same number of scenarios")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.scenario_probs is not None:
            probs = _frozen(self.scenario_probs)
            if probs.shape != (S,) or np.any(probs <= 0) or abs(probs.sum() - 1.0) > PROB_TOL:
                raise ValueError("scenario_probs must be positive and sum to 1")
            object.__setattr__(self, "scenario_probs", probs)
        if self.labels is not None and len(self.labels) != len(rows):
            raise ValueError("one label per row")

    @property
    def num_vars(self) -> int:
        return self.polyhedron.num_vars

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    @property
    def num_scenarios(self) -> int:
        return self.rows[0].num_scenarios

    @property
    def uniform(self) -> bool:
        return self.scenario_probs is None

    @property
    def budget(self) -> int:
        """Violation budget ``p`` (uniform probabilities only)."""
        if not self.uniform:
            raise ValueError("budget p is undefined under non-uniform scenario probabilities")
        return violation_budget(self.epsilon, self.num_scenarios)

    @property
    def knapsack(self) -> tuple[np.ndarray, float]:
        """Weights and right-hand side of the violation knapsack row."""
        if self.uniform:
            return np.ones(self.num_scenarios), float(self.budget)
        return np.asarray(self.scenario_probs), float(self.epsilon)

    @cached_property
    def A0(self) -> np.ndarray:
        return _frozen(np.vstack([r.a0 for r in self.rows]))

    @cached_property
    def AH(self) -> np.ndarray:
        return _frozen(np.vstack([r.a_hat for r in self.rows]))

    @cached_property
    def OMEGA(self) -> np.ndarray:
        return _frozen(np.vstack([r.omega for r in self.rows]))

    @cached_property
    def B(self) -> np.ndarray:
        return _frozen(np.vstack([r.b for r in self.rows]))

    def row_values(self, x) -> np.ndarray:
        """``|J| x |S|`` matrix of ``a_js @ x - b_js``; positive entries are violations."""
        x = np.asarray(x, dtype=float)
        return self.OMEGA * (self.AH @ x)[:, None] - self.B + (self.A0 @ x)[:, None]

    def scenario_coefficients(self, j: int, s: int) -> tuple[np.ndarray, float]:
        r = self.rows[j]
        return r.a0 + r.omega[s] * r.a_hat, float(r.b[s])


def violation_budget(epsilon: float, num_scenarios: int) -> int:
    """``floor(epsilon * num_scenarios)``, the number of scenarios allowed to fail."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must lie in [0, 1)")
    if num_scenarios < 1:
        raise ValueError("num_scenarios must be positive")
    # 0.29 * 100 evaluates to 28.999999999999996; snap such products up
    prod = epsilon * num_scenarios
    p = math.floor(prod)
    if math.isclose(prod, p + 1, rel_tol=1e-12, abs_tol=0.0):
        p += 1
    return int(p)


@dataclass(frozen=True, eq=False)
class BigMTable:
    """Big-M constants ``M_js`` (``inf`` allowed) and the screening mask ``M_js <= 0``."""

    values: np.ndarray
    screened: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        screened = _frozen(self.screened, dtype=bool)
        if values.ndim != 2 or screened.shape != values.shape:
            raise ValueError("values and screened must be matching |J| x |S| matrices")
        if np.any(np.isnan(values)) or np.any(values == -np.inf):
            raise ValueError("Big-M values must be finite or +inf")
        if not np.array_equal(screened, values <= 0):
            raise ValueError("screened must be exactly the entries with M <= 0")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "screened", screened)

    @classmethod
    def from_values(cls, values) -> "BigMTable":
        values = np.asarray(values, dtype=float)
        return cls(values, values <= 0)

    @classmethod
    def constant(cls, num_rows: int, num_scenarios: int, value: float) -> "BigMTable":
        return cls.from_values(np.full((num_rows, num_scenarios), float(value)))

    @classmethod
    def unbounded(cls, num_rows: int, num_scenarios: int) -> "BigMTable":
        return cls.from_values(np.full((num_rows, num_scenarios), np.inf))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def num_screened(self) -> int:
        return int(self.screened.sum())


@dataclass(frozen=True, eq=False)
class MilpModel:
    """The Big-M SAA MILP.

    Variables are ordered ``[x (num_vars) | y (num_scenarios)]``. Rows are
    the polyhedron rows, one Big-M row per ``True`` entry of ``active``,
    optional cut rows ``cut_A @ x <= cut_rhs`` and the knapsack row
    ``knapsack_weights @ y <= knapsack_rhs``. The quadratic objective is kept
    as is; solvers linearise it on demand.
    """

    instance: JccInstance
    bigm: np.ndarray
    active: np.ndarray
    cut_A: np.ndarray
    cut_rhs: np.ndarray
    knapsack_weights: np.ndarray
    knapsack_rhs: float

    @property
    def objective(self) -> QuadraticObjective:
        return self.instance.objective

    @property
    def polyhedron(self) -> Polyhedron:
        return self.instance.polyhedron

    @property
    def num_vars(self) -> int:
        return self.instance.num_vars

    @property
    def num_scenarios(self) -> int:
        return self.instance.num_scenarios

    @property
    def num_columns(self) -> int:
        return self.num_vars + self.num_scenarios

    @property
    def num_bigm_rows(self) -> int:
        return int(self.active.sum())

    @property
    def num_cuts(self) -> int:
        return self.cut_rhs.shape[0]

    @property
    def budget(self) -> int:
        return self.instance.budget

    def with_cuts(self, cut_A, cut_rhs) -> "MilpModel":
        return MilpModel(self.instance, self.bigm, self.active,
                         _frozen(np.asarray(cut_A, dtype=float).reshape(-1, self.num_vars)),
                         _frozen(cut_rhs), self.knapsack_weights, self.knapsack_rhs)

    def bigm_rows(self):
        """Dense x-coefficients, y-column, M and rhs of every active Big-M row."""
        inst = self.instance
        jj, ss = np.nonzero(self.active)
        coef = inst.A0[jj] + inst.OMEGA[jj, ss][:, None] * inst.AH[jj]
        return coef, ss, self.bigm[jj, ss], inst.B[jj, ss], jj

    def is_feasible(self, x, y, tol: float = 1e-7) -> bool:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if not self.polyhedron.contains(x, tol):
            return False
        vals = self.instance.row_values(x)
        lhs = vals - self.bigm * y[None, :]
        if np.any(lhs[self.active] > tol):
            return False
        if self.num_cuts and np.any(self.cut_A @ x - self.cut_rhs > tol):
            return False
        return bool(self.knapsack_weights @ y <= self.knapsack_rhs + tol)


def build_saa_milp(instance: JccInstance, bigm: BigMTable, *, fallback: float | None = None,
                   screen: bool = True, cuts=None) -> MilpModel:
    """Assemble the Big-M MILP from ``instance`` and a table of constants.

    ``screen=True`` omits every pair with ``M_js <= 0``. Infinite constants on
    emitted rows are replaced by ``fallback`` when given, otherwise rejected.
    ``cuts`` is an optional ``(A, rhs)`` pair or anything with ``matrix()``.
    """
    J, S = instance.num_rows, instance.num_scenarios
    if bigm.shape != (J, S):
        raise ValueError(f"Big-M table shape {bigm.shape} does not match instance {(J, S)}")
    active = ~bigm.screened if screen else np.ones((J, S), dtype=bool)
    values = np.array(bigm.values, dtype=float)
    missing = active & ~np.isfinite(values)
    if missing.any():
        if fallback is None:
            raise ValueError(f"{int(missing.sum())} emitted rows have an infinite Big-M "
                             "and no fallback constant is configured")
        values[missing] = float(fallback)
    values[~active] = 0.0
    if cuts is None:
        cut_A, cut_rhs = np.zeros((0, instance.num_vars)), np.zeros(0)
    elif hasattr(cuts, "matrix"):
        cut_A, cut_rhs = cuts.matrix()
    else:
        cut_A, cut_rhs = cuts
    weights, rhs = instance.knapsack
    return MilpModel(instance, _frozen(values), _frozen(active, dtype=bool),
                     _frozen(np.asarray(cut_A, dtype=float).reshape(-1, instance.num_vars)),
                     _frozen(cut_rhs), _frozen(weights), rhs)


def count_constraints(model: MilpModel) -> int:
    """Rows of the MILP: deterministic + Big-M + cuts + the knapsack row.

    Epigraph rows created when the quadratic objective is linearised are
    solver internals and are not counted.
    """
    return model.polyhedron.num_rows + model.num_bigm_rows + model.num_cuts + 1
