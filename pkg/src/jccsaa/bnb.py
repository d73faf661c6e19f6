"""Branch-and-bound for the Big-M SAA MILP.

The convex quadratic objective is replaced by an epigraph of tangent lines
so every node relaxation is an LP. Nodes are explored best-bound first and
branch on the most fractional scenario indicator; the knapsack row prunes
any node that fixes more than ``p`` indicators to one.
"""
from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .core import MilpModel, Polyhedron, QuadraticObjective
from .lp import LpOptions, LpProblem, LpStatus, linear_extreme, solve_lp

__all__ = [
    "PwlObjective", "pwl_objective", "variable_box", "MipStatus", "MipResult",
    "MilpRelaxation", "solve_milp", "lr_gap", "LrGap", "DEFAULT_SEGMENTS",
]

DEFAULT_SEGMENTS = 16
INT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PwlObjective:
    """Linear objective plus one epigraph variable per quadratic coordinate.

    ``tau_k >= slopes[k][i] * x[var[k]] + intercepts[k][i]`` for every
    tangent ``i``; the objective is ``sum(tau) + linear_c @ x + constant``.
    """

    var: np.ndarray
    slopes: tuple[np.ndarray, ...]
    intercepts: tuple[np.ndarray, ...]
    linear_c: np.ndarray
    constant: float

    @property
    def num_epigraph(self) -> int:
        return self.var.shape[0]

    @property
    def num_rows(self) -> int:
        return sum(s.shape[0] for s in self.slopes)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        total = float(self.linear_c @ x) + self.constant
        for v, m, c in zip(self.var, self.slopes, self.intercepts):
            total += float(np.max(m * x[v] + c))
        return total

    def epigraph_rows(self, num_cols: int, tau_offset: int):
        """Sparse rows ``slope * x_v - tau_k <= -intercept``."""
        rows, cols, vals, rhs = [], [], [], []
        r = 0
        for k, (v, m, c) in enumerate(zip(self.var, self.slopes, self.intercepts)):
            for mi, ci in zip(m, c):
                rows += [r, r]
                cols += [int(v), tau_offset + k]
                vals += [float(mi), -1.0]
                rhs.append(-float(ci))
                r += 1
        A = sp.csr_matrix((vals, (rows, cols)), shape=(r, num_cols))
        return A, np.array(rhs)


def pwl_objective(objective: QuadraticObjective, segments: int, box) -> PwlObjective:
    """Tangent-line under-estimator of ``objective`` on a per-variable box.

    Each interval ``[lo, hi]`` is cut into ``segments`` equal pieces and the
    parabola is touched at every piece endpoint and midpoint, so adjacent
    tangent points are ``w / (2 segments)`` apart and the gap to
    ``q x^2`` never exceeds ``q w^2 / (16 segments^2)``.
    """
    if segments < 1:
        raise ValueError("segments must be >= 1")
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    q = objective.diag_q
    var = np.flatnonzero(q > 0)
    slopes, intercepts = [], []
    for i in var:
        if not (np.isfinite(lo[i]) and np.isfinite(hi[i])):
            raise ValueError(f"variable {i} has a quadratic cost but an unbounded box")
        pts = np.linspace(lo[i], hi[i], 2 * segments + 1) if hi[i] > lo[i] else np.array([lo[i]])
        # tangent of q x^2 at t: 2 q t x - q t^2
        slopes.append(2.0 * q[i] * pts)
        intercepts.append(-q[i] * pts * pts)
    return PwlObjective(var, tuple(slopes), tuple(intercepts),
                        np.array(objective.linear_c), objective.constant)


def pwl_error_bound(objective: QuadraticObjective, segments: int, box) -> float:
    """Documented worst-case gap ``sum_i q_i w_i^2 / (8 segments^2)``."""
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    q = objective.diag_q
    mask = q > 0
    width = (hi - lo)[mask]
    return float(np.sum(q[mask] * width ** 2) / (8.0 * segments ** 2))


def variable_box(polyhedron: Polyhedron, indices=None, options: LpOptions | None = None):
    """Per-variable ``[lower, upper]`` over the polyhedron, using LPs where bounds are infinite."""
    n = polyhedron.num_vars
    lo = np.array(polyhedron.var_lower, dtype=float)
    hi = np.array(polyhedron.var_upper, dtype=float)
    for i in range(n) if indices is None else indices:
        e = np.zeros(n)
        e[i] = 1.0
        if not np.isfinite(lo[i]):
            lo[i] = linear_extreme(polyhedron, e, "min", options)
        if not np.isfinite(hi[i]):
            hi[i] = linear_extreme(polyhedron, e, "max", options)
    return lo, hi


class MipStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    TIME_LIMIT = "time_limit"


@dataclass
class MipResult:
    status: MipStatus
    x: np.ndarray | None
    y: np.ndarray | None
    objective: float
    lower_bound: float
    mip_gap: float
    nodes: int
    wall_time: float
    root_bound: float = np.nan
    true_objective: float = np.nan
    extra: dict = field(default_factory=dict)

    @property
    def mip_gap_percent(self) -> float:
        return 100.0 * self.mip_gap


def _gap(ub: float, lb: float) -> float:
    if not np.isfinite(ub):
        return np.inf
    return max(ub - lb, 0.0) / max(abs(ub), 1e-12)


class MilpRelaxation:
    """The LP relaxation of a :class:`MilpModel`, assembled once.

    Columns are ``[x | y | tau]``. Nodes differ only in the bounds on ``y``.
    """

    def __init__(self, model: MilpModel, segments: int = DEFAULT_SEGMENTS,
                 pwl: PwlObjective | None = None, options: LpOptions | None = None):
        self.model = model
        self.options = options
        n, S = model.num_vars, model.num_scenarios
        obj = model.objective
        if pwl is None and not obj.is_linear:
            box = variable_box(model.polyhedron, np.flatnonzero(obj.diag_q > 0), options)
            pwl = pwl_objective(obj, segments, box)
        self.pwl = pwl
        nt = pwl.num_epigraph if pwl is not None else 0
        ncol = n + S + nt
        self.n, self.S, self.nt = n, S, nt
        blocks, rhs, senses = [], [], []
        poly = model.polyhedron
        if poly.num_rows:
            blocks.append(sp.hstack([sp.csr_matrix(poly.A), sp.csr_matrix((poly.num_rows, S + nt))]))
            rhs.append(poly.rhs)
            senses += list(poly.senses)
        if model.num_bigm_rows:
            coef, ss, M, b, _ = model.bigm_rows()
            k = coef.shape[0]
            ycol = sp.csr_matrix((-M, (np.arange(k), ss)), shape=(k, S))
            blocks.append(sp.hstack([sp.csr_matrix(coef), ycol, sp.csr_matrix((k, nt))]))
            rhs.append(b)
            senses += ["<="] * k
        if model.num_cuts:
            k = model.num_cuts
            blocks.append(sp.hstack([sp.csr_matrix(model.cut_A), sp.csr_matrix((k, S + nt))]))
            rhs.append(model.cut_rhs)
            senses += ["<="] * k
        knap = np.concatenate([np.zeros(n), model.knapsack_weights, np.zeros(nt)])
        blocks.append(sp.csr_matrix(knap[None, :]))
        rhs.append([model.knapsack_rhs])
        senses.append("<=")
        if pwl is not None:
            A_e, r_e = pwl.epigraph_rows(ncol, n + S)
            blocks.append(A_e)
            rhs.append(r_e)
            senses += ["<="] * A_e.shape[0]
        A = sp.vstack(blocks).tocsr()
        c = np.concatenate([obj.linear_c, np.zeros(S), np.ones(nt)])
        self.constant = obj.constant
        lower = np.concatenate([poly.var_lower, np.zeros(S), np.full(nt, -np.inf)])
        upper = np.concatenate([poly.var_upper, np.ones(S), np.full(nt, np.inf)])
        self.lp = LpProblem(c, A, tuple(senses), np.concatenate([np.atleast_1d(r) for r in rhs]),
                            lower, upper)

    def solve(self, y_lower=None, y_upper=None):
        """Solve with optional y bounds; returns ``(value, x, y)`` or ``None`` if infeasible."""
        lo, hi = self.lp.lower, self.lp.upper
        if y_lower is not None or y_upper is not None:
            lo, hi = lo.copy(), hi.copy()
            sl = slice(self.n, self.n + self.S)
            if y_lower is not None:
                lo[sl] = y_lower
            if y_upper is not None:
                hi[sl] = y_upper
        res = solve_lp(self.lp, self.options, lower=lo, upper=hi)
        if res.status is LpStatus.INFEASIBLE:
            return None
        if res.status is LpStatus.UNBOUNDED:
            raise ValueError("MILP relaxation is unbounded; the polyhedron must be compact")
        z = res.x
        return res.objective + self.constant, z[:self.n], z[self.n:self.n + self.S]

    def value_of(self, x) -> float:
        if self.pwl is not None:
            return self.pwl.value(x)
        return self.model.objective.value(x)


@dataclass(order=True)
class _Node:
    bound: float
    order: int
    fix0: frozenset = field(compare=False)
    fix1: frozenset = field(compare=False)
    depth: int = field(compare=False, default=0)
    y: np.ndarray | None = field(compare=False, default=None)
    x: np.ndarray | None = field(compare=False, default=None)


def solve_milp(model: MilpModel, gap_tol: float = 1e-9, time_limit: float | None = None, *,
               segments: int = DEFAULT_SEGMENTS, options: LpOptions | None = None,
               relaxation: MilpRelaxation | None = None,
               on_child: Callable[[float, float], None] | None = None) -> MipResult:
    """Best-bound branch-and-bound over the scenario indicators.

    ``gap_tol`` is the relative gap ``(UB - LB) / max(|UB|, 1e-12)`` at which
    the search stops; ``time_limit`` is in seconds. ``on_child`` receives
    ``(parent_bound, child_bound)`` for every child relaxation solved.
    """
    t0 = time.perf_counter()
    rel = relaxation or MilpRelaxation(model, segments, options=options)
    S = model.num_scenarios
    weights, cap = model.knapsack_weights, model.knapsack_rhs
    counter = itertools.count()

    def deadline_hit() -> bool:
        return time_limit is not None and time.perf_counter() - t0 > time_limit

    def bounds_for(fix0, fix1):
        lo, hi = np.zeros(S), np.ones(S)
        if fix0:
            hi[list(fix0)] = 0.0
        if fix1:
            idx = list(fix1)
            lo[idx] = 1.0
        return lo, hi

    def evaluate(fix0, fix1, depth):
        if fix1 and weights[list(fix1)].sum() > cap + 1e-12:
            return None
        # once the budget is exhausted every free indicator must be zero
        free = [s for s in range(S) if s not in fix0 and s not in fix1]
        slack = cap - (weights[list(fix1)].sum() if fix1 else 0.0)
        implied = [s for s in free if weights[s] > slack + 1e-12]
        if implied:
            fix0 = fix0 | frozenset(implied)
        sol = rel.solve(*bounds_for(fix0, fix1))
        if sol is None:
            return None
        val, x, y = sol
        return _Node(val, next(counter), fix0, fix1, depth, y, x)

    root = evaluate(frozenset(), frozenset(), 0)
    nodes = 1
    if root is None:
        return MipResult(MipStatus.INFEASIBLE, None, None, np.inf, np.inf, np.inf, nodes,
                         time.perf_counter() - t0)
    root_bound = root.bound
    heap = [root]
    best_val, best_x, best_y = np.inf, None, None

    def prune_level() -> float:
        return best_val - max(1e-9, gap_tol * abs(best_val)) if np.isfinite(best_val) else np.inf

    timed_out = False
    while heap:
        if deadline_hit():
            timed_out = True
            break
        node = heapq.heappop(heap)
        if node.bound >= prune_level():
            continue
        fixed = node.fix0 | node.fix1
        free = np.array([s for s in range(S) if s not in fixed], dtype=int)
        yf = node.y[free] if free.size else np.zeros(0)
        frac = free[(yf > INT_TOL) & (yf < 1 - INT_TOL)]
        branch_on = None
        if frac.size:
            dist = np.abs(node.y[frac] - 0.5)
            branch_on = int(frac[np.argmin(dist)])  # argmin keeps the lowest index on ties
        else:
            y_int = np.round(node.y)
            leaf = rel.solve(y_int, y_int)
            nodes += 1
            if leaf is not None:
                val, x, y = leaf
                if val < best_val:
                    best_val, best_x, best_y = val, x, y_int
                if val <= node.bound + max(1e-9, gap_tol * abs(val)):
                    continue
            positive = free[yf > 0]
            if positive.size == 0:
                continue
            branch_on = int(positive[np.argmax(node.y[positive])])
        children = []
        up = node.fix1 | {branch_on}
        if weights[list(up)].sum() <= cap + 1e-12:
            children.append((node.fix0, up))
        children.append((node.fix0 | {branch_on}, node.fix1))
        for fix0, fix1 in children:
            child = evaluate(fix0, fix1, node.depth + 1)
            nodes += 1
            if child is None:
                continue
            if on_child is not None:
                on_child(node.bound, child.bound)
            child.bound = max(child.bound, node.bound)
            if child.bound < prune_level():
                heapq.heappush(heap, child)

    lower = min([best_val] + [n.bound for n in heap]) if heap else best_val
    if not np.isfinite(best_val) and not timed_out:
        return MipResult(MipStatus.INFEASIBLE, None, None, np.inf, np.inf, np.inf, nodes,
                         time.perf_counter() - t0, root_bound)
    gap = _gap(best_val, lower)
    status = MipStatus.TIME_LIMIT if timed_out and gap > gap_tol else MipStatus.OPTIMAL
    true_obj = model.objective.value(best_x) if best_x is not None else np.nan
    return MipResult(status, best_x, best_y, best_val, min(lower, best_val), gap, nodes,
                     time.perf_counter() - t0, root_bound, true_obj)


@dataclass(frozen=True)
class LrGap:
    """Linear-relaxation gap; ``absolute`` marks the degenerate zero-optimum case."""

    value: float
    relaxation: float
    optimum: float
    absolute: bool = False

    def __float__(self) -> float:
        return self.value


def gap_from_values(optimum: float, relaxation: float) -> LrGap:
    num = optimum - relaxation
    if abs(optimum) < 1e-12:
        if abs(num) < 1e-12:
            return LrGap(0.0, relaxation, optimum)
        return LrGap(num, relaxation, optimum, absolute=True)
    return LrGap(100.0 * num / abs(optimum), relaxation, optimum)


def lr_gap(model: MilpModel, optimum: float, *, segments: int = DEFAULT_SEGMENTS,
           options: LpOptions | None = None, relaxation: MilpRelaxation | None = None) -> LrGap:
    """Percentage gap between ``optimum`` and the model's LP relaxation value."""
    rel = relaxation or MilpRelaxation(model, segments, options=options)
    sol = rel.solve()
    if sol is None:
        raise ValueError("LP relaxation is infeasible")
    return gap_from_values(optimum, sol[0])
