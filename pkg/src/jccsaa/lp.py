"""Linear programming engine.

Two interchangeable back ends sit behind :func:`solve_lp`:

* ``"simplex"``: a dense bounded-variable revised simplex written here
  (two phases, Dantzig pricing, Bland's rule once too many degenerate
  pivots have been seen in a row).
* ``"highs"``: the HiGHS dual simplex shipped with SciPy. The strengthening
  loop and branch-and-bound solve thousands of LPs, so this is the default.

Both return the same :class:`LpResult` and are cross-checked against each
other and against vertex enumeration in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

__all__ = [
    "LpStatus", "LpProblem", "LpResult", "LpOptions", "SimplexError",
    "InfeasibleError", "UnboundedError", "solve_lp", "linear_extreme",
]

SENSES = ("<=", "=", ">=")


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class SimplexError(RuntimeError):
    """The solver could not certify any status (cycling guard, numerics)."""


class InfeasibleError(ValueError):
    pass


class UnboundedError(ValueError):
    pass


@dataclass(frozen=True)
class LpOptions:
    method: str = "highs"
    feas_tol: float = 1e-7
    opt_tol: float = 1e-9
    max_iter: int | None = None
    degenerate_limit: int = 50


DEFAULT_OPTIONS = LpOptions()


@dataclass(frozen=True, eq=False)
class LpProblem:
    """``min/max c @ x`` subject to ``A @ x (sense) rhs`` and ``lower <= x <= upper``.

    ``A`` may be a dense array or any SciPy sparse matrix.
    """

    c: np.ndarray
    A: np.ndarray | sp.spmatrix
    senses: tuple[str, ...]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    maximize: bool = False

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        n = c.shape[0]
        A = self.A if sp.issparse(self.A) else np.asarray(self.A, dtype=float).reshape(-1, n)
        rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        senses = tuple(self.senses)
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if A.shape != (rhs.shape[0], n) or len(senses) != rhs.shape[0]:
            raise ValueError("inconsistent LP dimensions")
        if any(s not in SENSES for s in senses):
            raise ValueError(f"row senses must be in {SENSES}")
        if not np.all(np.isfinite(c)):
            raise ValueError("objective coefficients must be finite")
        if np.any(lower > upper):
            raise ValueError("variable lower bound exceeds upper bound")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "senses", senses)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]

    @property
    def num_rows(self) -> int:
        return self.rhs.shape[0]

    @cached_property
    def _split(self):
        sense = np.array(self.senses, dtype=object)
        le, ge, eq = sense == "<=", sense == ">=", sense == "="
        A = sp.csr_matrix(self.A)
        ub_rows = np.flatnonzero(le | ge)
        sign = np.where(ge[ub_rows], -1.0, 1.0)
        A_ub = sp.diags(sign) @ A[ub_rows] if ub_rows.size else None
        b_ub = sign * self.rhs[ub_rows] if ub_rows.size else None
        eq_rows = np.flatnonzero(eq)
        A_eq = A[eq_rows] if eq_rows.size else None
        b_eq = self.rhs[eq_rows] if eq_rows.size else None
        return A_ub, b_ub, A_eq, b_eq

    def residuals(self, x: np.ndarray) -> float:
        """Largest bound or row violation at ``x``."""
        Ax = self.A @ x
        viol = 0.0
        for sense, want in (("<=", lambda r: r), (">=", lambda r: -r)):
            mask = np.array([s == sense for s in self.senses], dtype=bool)
            if mask.any():
                viol = max(viol, float(np.max(want(Ax[mask] - self.rhs[mask]), initial=0.0)))
        mask = np.array([s == "=" for s in self.senses], dtype=bool)
        if mask.any():
            viol = max(viol, float(np.max(np.abs(Ax[mask] - self.rhs[mask]))))
        viol = max(viol, float(np.max(self.lower - x, initial=0.0)),
                   float(np.max(x - self.upper, initial=0.0)))
        return viol


@dataclass(frozen=True)
class LpResult:
    status: LpStatus
    x: np.ndarray | None
    objective: float
    iterations: int = 0
    method: str = field(default="highs", compare=False)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def solve_lp(problem: LpProblem, options: LpOptions | None = None, *,
             objective: np.ndarray | None = None,
             lower: np.ndarray | None = None,
             upper: np.ndarray | None = None) -> LpResult:
    """Solve ``problem``; ``objective``/``lower``/``upper`` override its data.

    The overrides let callers re-solve one constraint matrix under many
    objectives or variable bounds without rebuilding the row split.
    """
    opts = options or DEFAULT_OPTIONS
    c = problem.c if objective is None else np.asarray(objective, dtype=float)
    lo = problem.lower if lower is None else np.asarray(lower, dtype=float)
    hi = problem.upper if upper is None else np.asarray(upper, dtype=float)
    sign = -1.0 if problem.maximize else 1.0
    if opts.method == "highs":
        res = _solve_highs(problem, sign * c, lo, hi, opts)
    elif opts.method == "simplex":
        A = problem.A.toarray() if sp.issparse(problem.A) else problem.A
        res = RevisedSimplex(sign * c, A, problem.senses, problem.rhs, lo, hi, opts).solve()
    else:
        raise ValueError(f"unknown LP method {opts.method!r}")
    if res.status is LpStatus.OPTIMAL:
        return LpResult(res.status, res.x, sign * res.objective, res.iterations, opts.method)
    return res


def _solve_highs(problem: LpProblem, c, lo, hi, opts: LpOptions) -> LpResult:
    A_ub, b_ub, A_eq, b_eq = problem._split
    bounds = np.column_stack([np.where(np.isfinite(lo), lo, -np.inf),
                              np.where(np.isfinite(hi), hi, np.inf)])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs",
                  options={"primal_feasibility_tolerance": opts.feas_tol,
                           "dual_feasibility_tolerance": opts.opt_tol})
    nit = int(getattr(res, "nit", 0) or 0)
    if res.status == 0:
        return LpResult(LpStatus.OPTIMAL, np.asarray(res.x), float(res.fun), nit, "highs")
    if res.status == 2:
        return LpResult(LpStatus.INFEASIBLE, None, np.nan, nit, "highs")
    if res.status == 3:
        return LpResult(LpStatus.UNBOUNDED, None, np.nan, nit, "highs")
    raise SimplexError(f"HiGHS failed: {res.message}")


# --- revised simplex -----------------------------------------------------

_AT_LOWER, _AT_UPPER, _FREE, _BASIC = 0, 1, 2, 3


class RevisedSimplex:
    """Dense bounded-variable revised simplex for ``min c @ x``.

    Every row gets a slack so that the constraint block reads
    ``[A I] (x, s) = rhs``; slack bounds encode the row sense. Rows whose
    slack cannot absorb the initial residual receive an artificial column
    which phase one drives to zero; afterwards artificials are pinned to
    ``[0, 0]`` rather than pivoted out.
    """

    def __init__(self, c, A, senses, rhs, lower, upper, opts: LpOptions):
        self.opts = opts
        m, n = A.shape
        self.m, self.n = m, n
        slack_lo = np.array([0.0 if s == "<=" else (-np.inf if s == ">=" else 0.0) for s in senses])
        slack_hi = np.array([np.inf if s == "<=" else 0.0 for s in senses])
        self.A = np.hstack([A, np.eye(m)])
        self.lo = np.concatenate([lower, slack_lo])
        self.hi = np.concatenate([upper, slack_hi])
        self.c = np.concatenate([c, np.zeros(m)])
        self.b = np.asarray(rhs, dtype=float)
        self.iterations = 0

    def _nonbasic_start(self, lo, hi):
        x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        state = np.where(np.isfinite(lo), _AT_LOWER, np.where(np.isfinite(hi), _AT_UPPER, _FREE))
        return x, state

    def solve(self) -> LpResult:
        m, n = self.m, self.n
        x, state = self._nonbasic_start(self.lo, self.hi)
        x[n:] = 0.0
        state[n:] = np.where(np.isfinite(self.lo[n:]), _AT_LOWER, _AT_UPPER)
        state[n:][self.lo[n:] == 0.0] = _AT_LOWER
        resid = self.b - self.A[:, :n] @ x[:n]
        basis = np.empty(m, dtype=int)
        art_cols, art_sign = [], []
        for i in range(m):
            if self.lo[n + i] - self.opts.feas_tol <= resid[i] <= self.hi[n + i] + self.opts.feas_tol:
                basis[i] = n + i
                x[n + i] = resid[i]
                state[n + i] = _BASIC
            else:
                art_cols.append(i)
                art_sign.append(1.0 if resid[i] >= 0 else -1.0)
        k = len(art_cols)
        if k:
            art = np.zeros((m, k))
            art[art_cols, np.arange(k)] = art_sign
            self.A = np.hstack([self.A, art])
            self.lo = np.concatenate([self.lo, np.zeros(k)])
            self.hi = np.concatenate([self.hi, np.full(k, np.inf)])
            self.c = np.concatenate([self.c, np.zeros(k)])
            x = np.concatenate([x, np.abs(resid[art_cols])])
            state = np.concatenate([state, np.full(k, _BASIC)])
            basis[art_cols] = n + m + np.arange(k)
            phase1 = np.zeros(self.A.shape[1])
            phase1[n + m:] = 1.0
            status, x, state, basis = self._iterate(phase1, x, state, basis)
            if status is not LpStatus.OPTIMAL:
                raise SimplexError("phase one did not terminate at an optimum")
            scale = max(1.0, float(np.max(np.abs(self.b), initial=0.0)))
            if x[n + m:].sum() > self.opts.feas_tol * scale:
                return LpResult(LpStatus.INFEASIBLE, None, np.nan, self.iterations, "simplex")
            self.hi[n + m:] = 0.0
            x[n + m:] = 0.0
            nb_art = (state[n + m:] != _BASIC)
            state[n + m:][nb_art] = _AT_LOWER
        status, x, state, basis = self._iterate(self.c, x, state, basis)
        if status is LpStatus.UNBOUNDED:
            return LpResult(status, None, np.nan, self.iterations, "simplex")
        xs = x[:n].copy()
        return LpResult(LpStatus.OPTIMAL, xs, float(self.c[:n] @ xs), self.iterations, "simplex")

    def _iterate(self, cost, x, state, basis):
        m = self.m
        A, lo, hi = self.A, self.lo, self.hi
        ncol = A.shape[1]
        max_iter = self.opts.max_iter or 50 * (m + ncol) + 100
        feas, opt = self.opts.feas_tol, self.opts.opt_tol
        Binv = np.linalg.inv(A[:, basis])
        degenerate_run = 0
        since_refactor = 0
        while True:
            if self.iterations >= max_iter:
                raise SimplexError(f"iteration limit {max_iter} reached (possible cycling)")
            if since_refactor >= 50:
                Binv = np.linalg.inv(A[:, basis])
                since_refactor = 0
            nonbasic = state != _BASIC
            x_nb = np.where(nonbasic, x, 0.0)
            x[basis] = Binv @ (self.b - A @ x_nb)
            duals = cost[basis] @ Binv
            d = cost - duals @ A
            d[~nonbasic] = 0.0
            fixed = hi - lo <= 0.0
            eligible = nonbasic & ~fixed & (
                ((state == _AT_LOWER) & (d < -opt))
                | ((state == _AT_UPPER) & (d > opt))
                | ((state == _FREE) & (np.abs(d) > opt)))
            cand = np.flatnonzero(eligible)
            if cand.size == 0:
                return LpStatus.OPTIMAL, x, state, basis
            bland = degenerate_run >= self.opts.degenerate_limit
            j = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if d[j] < 0 else -1.0
            w = Binv @ A[:, j]
            # basic values move as x_B - direction * t * w
            step = hi[j] - lo[j]
            leave = -1
            piv = 1e-9
            xb = x[basis]
            for i in np.flatnonzero(np.abs(w) > piv):
                rate = direction * w[i]
                bi = basis[i]
                if rate > 0:
                    if not np.isfinite(lo[bi]):
                        continue
                    t = max(xb[i] - lo[bi], 0.0) / rate
                else:
                    if not np.isfinite(hi[bi]):
                        continue
                    t = max(hi[bi] - xb[i], 0.0) / -rate
                if t < step - 1e-12 or (leave >= 0 and abs(t - step) <= 1e-12 and (
                        basis[i] < basis[leave] if bland else abs(w[i]) > abs(w[leave]))):
                    step, leave = t, i
            self.iterations += 1
            since_refactor += 1
            if not np.isfinite(step):
                return LpStatus.UNBOUNDED, x, state, basis
            degenerate_run = degenerate_run + 1 if step <= feas * 1e-3 else 0
            x[j] = x[j] + direction * step
            if leave < 0:
                state[j] = _AT_UPPER if direction > 0 else _AT_LOWER
                continue
            bi = basis[leave]
            rate = direction * w[leave]
            if rate > 0:
                x[bi], state[bi] = lo[bi], _AT_LOWER
            else:
                x[bi], state[bi] = hi[bi], _AT_UPPER
            basis[leave] = j
            state[j] = _BASIC
            piv_row = Binv[leave] / w[leave]
            Binv -= np.outer(w, piv_row)
            Binv[leave] = piv_row


def linear_extreme(polyhedron, direction, sense: str = "max",
                   options: LpOptions | None = None) -> float:
    """Optimal value of ``direction @ x`` over a polyhedron.

    Raises :class:`UnboundedError` or :class:`InfeasibleError`; the cut and
    tightening machinery assumes a nonempty compact feasible set.
    """
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    problem = polyhedron.as_lp(direction, maximize=(sense == "max"))
    res = solve_lp(problem, options)
    if res.status is LpStatus.UNBOUNDED:
        raise UnboundedError(f"direction is unbounded ({sense}) over the polyhedron")
    if res.status is LpStatus.INFEASIBLE:
        raise InfeasibleError("polyhedron is empty")
    return res.objective
