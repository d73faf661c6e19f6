"""Iterative Big-M tightening, screening and the variant pipelines.

One tightening pass bounds every unfrozen entry by

    M_js <- max { a_js @ x - b_js : x in X, (x, y) in R }

where ``R`` is the LP relaxation of the current Big-M model. Entries whose
bound reaches zero or below are frozen and become screening candidates.

Every entry of one pass shares the same relaxation, and for a fixed row the
objective is ``(a0_j + w * ahat_j) @ x``, a convex piecewise-linear function
of the scalar ``w``. The default ``"parametric"`` evaluation recovers that
function from a handful of LPs (bisection on supporting lines) and reads off
all scenarios of the row, instead of solving one LP per scenario. The
``"direct"`` mode solves every LP and is kept for cross-checking.

A bound ``M_js <= 0`` is a valid Big-M but not, on its own, a licence to
delete the row: the relaxation that produced it contains row ``(j, s)``
itself and every other row that is being deleted alongside it. With
``p = 0``, for instance, every row bounds itself by zero. Screening is
therefore confirmed by one extra pass: each candidate is maximised over the
relaxation with *all* candidates removed, and rows that can still turn
positive are put back with that maximum as their constant. Putting rows
back only shrinks the relaxation, so a single pass suffices.
"""
from __future__ import annotations

import re
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bnb import DEFAULT_SEGMENTS, MilpRelaxation, MipResult, solve_milp
from .core import BigMTable, JccInstance, MilpModel, build_saa_milp, count_constraints
from .cuts import CutSet, generate_cut_set
from .lp import InfeasibleError, LpOptions, LpProblem, LpStatus, UnboundedError, solve_lp

__all__ = [
    "TightenResult", "tighten", "accelerate_screen", "relaxation_problem",
    "SolverConfig", "Variant", "parse_variant", "PipelineRun", "run_pipeline", "VARIANTS",
]

PARAM_TOL = 1e-9
VARIANTS = ("BN", "T", "TS", "BN+V", "TS+V")
DEFAULT_KAPPA = {"T": 3, "TS": 3, "TS+V": 1}


def accelerate_screen(table: BigMTable) -> np.ndarray:
    """Mask of Big-M rows kept in the next relaxation: finite and ``M > 0``."""
    return np.isfinite(table.values) & (table.values > 0)


def relaxation_problem(instance: JccInstance, table: BigMTable, *, accelerate: bool = True,
                       cuts: tuple[np.ndarray, np.ndarray] | None = None) -> LpProblem:
    """Feasible set of the tightening LPs over columns ``[x | y]``.

    Rows with ``M = inf`` are left out. With ``accelerate`` the frozen rows
    (``M <= 0``) are left out as well.
    """
    n, S = instance.num_vars, instance.num_scenarios
    keep = accelerate_screen(table) if accelerate else np.isfinite(table.values)
    poly = instance.polyhedron
    blocks = [sp.hstack([sp.csr_matrix(poly.A), sp.csr_matrix((poly.num_rows, S))])]
    rhs, senses = [poly.rhs], list(poly.senses)
    jj, ss = np.nonzero(keep)
    if jj.size:
        coef = instance.A0[jj] + instance.OMEGA[jj, ss][:, None] * instance.AH[jj]
        ycol = sp.csr_matrix((-table.values[jj, ss], (np.arange(jj.size), ss)), shape=(jj.size, S))
        blocks.append(sp.hstack([sp.csr_matrix(coef), ycol]))
        rhs.append(instance.B[jj, ss])
        senses += ["<="] * jj.size
    if cuts is not None and cuts[1].size:
        k = cuts[1].shape[0]
        blocks.append(sp.hstack([sp.csr_matrix(cuts[0]), sp.csr_matrix((k, S))]))
        rhs.append(cuts[1])
        senses += ["<="] * k
    weights, cap = instance.knapsack
    blocks.append(sp.csr_matrix(np.concatenate([np.zeros(n), weights])[None, :]))
    rhs.append([cap])
    senses.append("<=")
    lower = np.concatenate([poly.var_lower, np.zeros(S)])
    upper = np.concatenate([poly.var_upper, np.ones(S)])
    return LpProblem(np.zeros(n + S), sp.vstack(blocks).tocsr(), tuple(senses),
                     np.concatenate([np.atleast_1d(r) for r in rhs]), lower, upper, maximize=True)


def _maximise(problem: LpProblem, direction: np.ndarray, options):
    S = problem.num_vars - direction.shape[0]
    res = solve_lp(problem, options, objective=np.concatenate([direction, np.zeros(S)]))
    if res.status is LpStatus.INFEASIBLE:
        raise InfeasibleError("tightening relaxation is infeasible: the chance-constrained "
                              "instance has no feasible point")
    if res.status is LpStatus.UNBOUNDED:
        raise UnboundedError("tightening LP is unbounded: X must be compact")
    return res.objective, res.x[:direction.shape[0]]


def _row_support(problem, a0, ah, omegas, options):
    """Values of ``max (a0 + w ahat) @ x`` over the relaxation at every ``w`` in ``omegas``.

    The function is convex in ``w``; between two evaluated points it is
    bracketed below by the two supporting lines and above by the chord. The
    interval is split at the scenario value nearest the lines' crossing until
    the bracket closes, and chords (upper bounds, hence valid) are returned.
    """
    w = np.unique(omegas)
    vals = np.full(w.shape, np.nan)
    slopes = np.full(w.shape, np.nan)
    count = 0

    def evaluate(i):
        nonlocal count
        v, x = _maximise(problem, a0 + w[i] * ah, options)
        vals[i], slopes[i] = v, float(ah @ x)
        count += 1

    evaluate(0)
    if w.size > 1:
        evaluate(w.size - 1)
    stack = [(0, w.size - 1)] if w.size > 2 else []
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        # lines through the endpoint values with the slopes of their optimisers
        s_lo, s_hi = slopes[lo], slopes[hi]
        chord = (vals[hi] - vals[lo]) / (w[hi] - w[lo])
        if s_hi - s_lo > 1e-15 * max(1.0, abs(s_lo), abs(s_hi)):
            cross = (vals[hi] - vals[lo] + s_lo * w[lo] - s_hi * w[hi]) / (s_lo - s_hi)
            cross = min(max(cross, w[lo]), w[hi])
        else:
            cross = 0.5 * (w[lo] + w[hi])
        lines = max(vals[lo] + s_lo * (cross - w[lo]), vals[hi] + s_hi * (cross - w[hi]))
        upper = vals[lo] + chord * (cross - w[lo])
        if upper - lines <= PARAM_TOL * max(1.0, abs(upper)):
            continue
        mid = int(np.clip(np.searchsorted(w, cross), lo + 1, hi - 1))
        if abs(w[mid - 1] - cross) < abs(w[mid] - cross) and mid - 1 > lo:
            mid -= 1
        evaluate(mid)
        stack += [(lo, mid), (mid, hi)]
    known = ~np.isnan(vals)
    full = np.interp(w, w[known], vals[known])
    return full[np.searchsorted(w, omegas)], count


@dataclass
class TightenResult:
    """``table`` is safe to screen; ``raw`` is the last iterate of the loop itself."""

    table: BigMTable
    history: list
    lp_solves: int
    wall_time: float
    with_cuts: bool = False
    accelerate: bool = True
    reinstated: int = 0

    @property
    def raw(self) -> BigMTable:
        return self.history[-1]

    @property
    def iterations(self) -> int:
        return len(self.history) - 1


def tighten(instance: JccInstance, iterations: int, with_cuts: bool = False, *,
            accelerate: bool = True, cuts: CutSet | None = None, method: str = "parametric",
            options: LpOptions | None = None, initial: BigMTable | None = None,
            verify_screening: bool = True) -> TightenResult:
    """Run ``iterations`` Jacobi passes of Big-M tightening.

    ``history[k]`` is the table after ``k`` passes (``history[0]`` is the
    starting table, all ``+inf`` by default). Updates are clipped by the
    previous value so tables never increase, whatever the LP round-off.
    With ``verify_screening`` the returned ``table`` has passed the deletion
    check described in the module docstring; otherwise it is the raw iterate.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if method not in ("parametric", "direct"):
        raise ValueError("method must be 'parametric' or 'direct'")
    t0 = time.perf_counter()
    J, S = instance.num_rows, instance.num_scenarios
    table = initial or BigMTable.unbounded(J, S)
    cut_pair = None
    if with_cuts:
        cuts = cuts or generate_cut_set(instance, options=options)
        cut_pair = cuts.matrix()
    history = [table]
    solves = 0

    def bound_rows(problem, mask):
        """Maximum of every masked row value over ``problem``'s feasible set."""
        nonlocal solves
        out = np.full((J, S), np.nan)
        for j in range(J):
            ss = np.flatnonzero(mask[j])
            if ss.size == 0:
                continue
            row = instance.rows[j]
            if method == "parametric":
                sup, n_lp = _row_support(problem, row.a0, row.a_hat, row.omega[ss], options)
                solves += n_lp
            else:
                sup = np.array([_maximise(problem, row.a0 + row.omega[s] * row.a_hat, options)[0]
                                for s in ss])
                solves += ss.size
            out[j, ss] = sup - row.b[ss]
        return out

    for _ in range(iterations):
        current = table.values
        todo = current > 0
        if todo.any():
            problem = relaxation_problem(instance, table, accelerate=accelerate, cuts=cut_pair)
            new = current.copy()
            new[todo] = np.minimum(current[todo], bound_rows(problem, todo)[todo])
            table = BigMTable.from_values(new)
        history.append(table)
    reinstated = 0
    cand = table.screened
    if verify_screening and cand.any():
        problem = relaxation_problem(instance, table, accelerate=True, cuts=cut_pair)
        check = bound_rows(problem, cand)
        back = cand & (check > 0)
        if back.any():
            values = table.values.copy()
            values[back] = check[back]
            table = BigMTable.from_values(values)
            reinstated = int(back.sum())
    return TightenResult(table, history, solves, time.perf_counter() - t0, with_cuts, accelerate,
                         reinstated)


@dataclass(frozen=True)
class Variant:
    name: str
    kappa: int | None = None

    @property
    def tightened(self) -> bool:
        return self.name in ("T", "TS", "TS+V")

    @property
    def screen(self) -> bool:
        return self.name in ("TS", "TS+V")

    @property
    def cuts(self) -> bool:
        return self.name.endswith("+V")

    @property
    def label(self) -> str:
        return f"{self.name}({self.kappa})" if self.tightened else self.name


def parse_variant(text: str, kappa: int | None = None) -> Variant:
    """Parse ``"BN"``, ``"TS"``, ``"TS(2)"``, ``"TS+V(1)"`` and so on."""
    m = re.fullmatch(r"\s*(BN\+V|TS\+V|BN|TS|T)\s*(?:\(\s*(\d+)\s*\))?\s*", text.upper())
    if not m:
        raise ValueError(f"unknown variant {text!r}; expected one of {VARIANTS}")
    name = m.group(1)
    k = int(m.group(2)) if m.group(2) else kappa
    if name in DEFAULT_KAPPA:
        k = DEFAULT_KAPPA[name] if k is None else k
        if k < 1:
            raise ValueError("kappa must be >= 1")
    else:
        k = None
    return Variant(name, k)


@dataclass(frozen=True)
class SolverConfig:
    fallback_m: float = 1e4
    gap_tol: float = 1e-9
    time_limit: float | None = None
    segments: int = DEFAULT_SEGMENTS
    accelerate: bool = True
    tighten_method: str = "parametric"
    lp: LpOptions = field(default_factory=LpOptions)


@dataclass
class PipelineRun:
    variant: Variant
    model: MilpModel
    result: MipResult
    num_constraints: int
    relaxation_value: float
    tighten_time: float
    solve_time: float
    table: BigMTable
    cuts: CutSet | None = None
    tighten: TightenResult | None = None

    @property
    def total_time(self) -> float:
        return self.tighten_time + self.solve_time

    @property
    def objective(self) -> float:
        return self.result.objective


def run_pipeline(instance: JccInstance, variant: Variant | str, config: SolverConfig | None = None, *,
                 tightened: TightenResult | None = None, cuts: CutSet | None = None) -> PipelineRun:
    """Build, optionally tighten and cut, then solve one variant.

    ``tightened`` and ``cuts`` let callers share work between variants (T and
    TS use the same table); the shared time is still charged to each run.
    """
    cfg = config or SolverConfig()
    v = parse_variant(variant) if isinstance(variant, str) else variant
    t0 = time.perf_counter()
    cut_time = 0.0
    if v.cuts and cuts is None:
        cuts = generate_cut_set(instance, options=cfg.lp)
        cut_time = time.perf_counter() - t0
    if v.tightened:
        if tightened is None or tightened.with_cuts != v.cuts or tightened.iterations != v.kappa:
            tightened = tighten(instance, v.kappa, v.cuts, accelerate=cfg.accelerate,
                                cuts=cuts if v.cuts else None, method=cfg.tighten_method,
                                options=cfg.lp)
        # T keeps every row, so the raw iterate is usable as is
        table = tightened.table if v.screen else tightened.raw
        prep = tightened.wall_time + cut_time
    else:
        table = BigMTable.constant(instance.num_rows, instance.num_scenarios, cfg.fallback_m)
        prep = cut_time
    model = build_saa_milp(instance, table, fallback=cfg.fallback_m, screen=v.screen,
                           cuts=cuts if v.cuts else None)
    t1 = time.perf_counter()
    rel = MilpRelaxation(model, cfg.segments, options=cfg.lp)
    result = solve_milp(model, cfg.gap_tol, cfg.time_limit, relaxation=rel, options=cfg.lp)
    root = result.root_bound
    return PipelineRun(v, model, result, count_constraints(model), root, prep,
                       time.perf_counter() - t1, table, cuts if v.cuts else None,
                       tightened if v.tightened else None)
