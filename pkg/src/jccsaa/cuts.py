"""Valid inequalities from the lower hull of a row's (p+1)-upper envelope.

For row ``j`` write ``z = ahat_j @ x``. A point violates the row in at most
``p`` scenarios exactly when ``a0_j @ x + E(z) <= 0``, where ``E`` is the
(p+1)-upper envelope of the lines ``t = Omega_js z - b_js``. Replacing ``E``
by its lower convex hull gives one linear cut per hull segment::

    (m * ahat_j + a0_j) @ x <= m * z_r - t_r
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import JccInstance
from .envelope import (EnvelopeChain, LineSet, k_upper_envelope, lower_hull_indices,
                       weighted_k_envelope)
from .lp import LpOptions, LpStatus, linear_extreme, solve_lp

__all__ = [
    "ZInterval", "RowCuts", "CutSet", "z_bounds", "generate_cuts", "generate_cut_set",
    "row_envelope", "sample_polyhedron", "EquivalenceReport", "verify_row_equivalence",
]

DEGENERATE_TOL = 1e-12
DEDUPE_TOL = 1e-10


@dataclass(frozen=True)
class ZInterval:
    lower: float
    upper: float

    @property
    def degenerate(self) -> bool:
        return self.upper - self.lower <= DEGENERATE_TOL * max(1.0, abs(self.lower), abs(self.upper))


def z_bounds(instance: JccInstance, row_index: int, options: LpOptions | None = None) -> ZInterval:
    """Range of ``ahat_j @ x`` over the deterministic polyhedron."""
    ah = instance.rows[row_index].a_hat
    if not np.any(ah):
        return ZInterval(0.0, 0.0)
    poly = instance.polyhedron
    return ZInterval(linear_extreme(poly, ah, "min", options), linear_extreme(poly, ah, "max", options))


def _level(values: np.ndarray, instance: JccInstance) -> float:
    """The value the envelope takes for a fixed vector of scenario line values."""
    if instance.uniform:
        return float(np.sort(values)[::-1][instance.budget])
    w = instance.scenario_probs
    above = np.array([w[values > v].sum() for v in values])
    return float(values[above <= instance.epsilon + 1e-12].min())


def row_envelope(instance: JccInstance, row_index: int, interval: ZInterval) -> EnvelopeChain:
    row = instance.rows[row_index]
    lines = LineSet.from_scenarios(row.omega, row.b, (interval.lower, interval.upper),
                                   instance.scenario_probs)
    if instance.uniform:
        return k_upper_envelope(lines, instance.budget + 1)
    return weighted_k_envelope(lines, instance.epsilon)


@dataclass(frozen=True, eq=False)
class RowCuts:
    """Cuts of one row; ``slopes[i]`` and ``anchors[i] = (z, t)`` define cut ``i``.

    ``always_within_budget`` is an informational fact: the row can never be
    violated in more than ``p`` scenarios anywhere on the polyhedron.
    """

    row: int
    interval: ZInterval
    slopes: np.ndarray
    anchors: np.ndarray
    A: np.ndarray
    rhs: np.ndarray
    envelope: EnvelopeChain | None = None
    hull: np.ndarray | None = None
    always_within_budget: bool = False

    def __len__(self) -> int:
        return self.rhs.shape[0]

    def hull_value(self, z) -> np.ndarray:
        """Pointwise maximum of the cuts' z-parts, i.e. the hull over ``z``."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if self.slopes.size == 0:
            return np.full(z.shape, -np.inf)
        return np.max(self.slopes[None, :] * (z[:, None] - self.anchors[None, :, 0])
                      + self.anchors[None, :, 1], axis=1)


def generate_cuts(instance: JccInstance, row_index: int, *, interval: ZInterval | None = None,
                  options: LpOptions | None = None) -> RowCuts:
    row = instance.rows[row_index]
    iv = interval or z_bounds(instance, row_index, options)
    a0, ah = row.a0, row.a_hat
    if iv.degenerate:
        z0 = 0.5 * (iv.lower + iv.upper)
        U = _level(row.omega * z0 - row.b, instance)
        never = U + linear_extreme(instance.polyhedron, a0, "max", options) <= 0 if np.any(a0) else U <= 0
        if not np.any(a0) and U <= 0:
            empty = np.zeros((0, instance.num_vars))
            return RowCuts(row_index, iv, np.zeros(0), np.zeros((0, 2)), empty, np.zeros(0),
                           always_within_budget=True)
        return RowCuts(row_index, iv, np.zeros(1), np.array([[z0, U]]), a0[None, :].copy(),
                       np.array([-U]), always_within_budget=bool(never))
    chain = row_envelope(instance, row_index, iv)
    hull = chain.vertices[lower_hull_indices(chain.vertices)]
    dz = np.diff(hull[:, 0])
    slopes = np.diff(hull[:, 1]) / dz
    anchors = hull[:-1].copy()
    A = slopes[:, None] * ah[None, :] + a0[None, :]
    rhs = slopes * anchors[:, 0] - anchors[:, 1]
    a0_max = linear_extreme(instance.polyhedron, a0, "max", options) if np.any(a0) else 0.0
    never = float(chain.t.max()) + a0_max <= 0
    return RowCuts(row_index, iv, slopes, anchors, A, rhs, chain, hull, bool(never))


@dataclass(frozen=True, eq=False)
class CutSet:
    rows: tuple[RowCuts, ...]
    num_vars: int
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return self.matrix()[1].shape[0]

    @property
    def raw_count(self) -> int:
        return sum(len(r) for r in self.rows)

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked ``A @ x <= rhs`` with near-duplicate cuts merged (tightest kept)."""
        if "m" in self._cache:
            return self._cache["m"]
        if not self.rows or self.raw_count == 0:
            out = (np.zeros((0, self.num_vars)), np.zeros(0))
            self._cache["m"] = out
            return out
        A = np.vstack([r.A for r in self.rows])
        rhs = np.concatenate([r.rhs for r in self.rows])
        norms = np.linalg.norm(A, axis=1)
        keep_A, keep_r, keep_dir = [], [], []
        for a, b, nrm in zip(A, rhs, norms):
            if nrm < 1e-14:
                # constant cut 0 <= b: only an infeasibility certificate matters
                if b < 0:
                    keep_A.append(a), keep_r.append(b), keep_dir.append(np.zeros_like(a))
                continue
            d, bn = a / nrm, b / nrm
            if keep_dir:
                diff = np.max(np.abs(np.asarray(keep_dir) - d), axis=1)
                hit = np.flatnonzero(diff <= DEDUPE_TOL)
                if hit.size:
                    i = int(hit[0])
                    if bn < keep_r[i] / max(np.linalg.norm(keep_A[i]), 1e-300):
                        keep_A[i], keep_r[i] = a, b
                    continue
            keep_A.append(a), keep_r.append(b), keep_dir.append(d)
        out = (np.array(keep_A).reshape(-1, self.num_vars), np.array(keep_r))
        self._cache["m"] = out
        return out


def generate_cut_set(instance: JccInstance, rows=None, options: LpOptions | None = None) -> CutSet:
    idx = range(instance.num_rows) if rows is None else rows
    return CutSet(tuple(generate_cuts(instance, j, options=options) for j in idx), instance.num_vars)


def sample_polyhedron(polyhedron, num: int, rng: np.random.Generator, *,
                      num_vertices: int = 24, options: LpOptions | None = None) -> np.ndarray:
    """Random points of a compact polyhedron.

    Vertices are collected by optimising random directions; points are
    Dirichlet mixtures of those vertices, so they cover the interior and,
    through sparse weights, the faces.
    """
    n = polyhedron.num_vars
    verts = []
    for _ in range(num_vertices):
        res = solve_lp(polyhedron.as_lp(rng.standard_normal(n)), options)
        if res.status is LpStatus.OPTIMAL:
            verts.append(res.x)
    if not verts:
        raise ValueError("could not find any point of the polyhedron")
    V = np.unique(np.round(np.array(verts), 12), axis=0)
    alpha = rng.choice([0.2, 1.0], size=num)[:, None] * np.ones((num, V.shape[0]))
    W = rng.gamma(alpha)
    W /= W.sum(axis=1, keepdims=True)
    return np.vstack([V, W @ V])[:num] if num > V.shape[0] else W @ V


@dataclass
class EquivalenceReport:
    row: int
    samples: int
    within_budget: int
    counterexamples: list = field(default_factory=list)
    near_boundary: int = 0

    @property
    def ok(self) -> bool:
        return not self.counterexamples


def verify_row_equivalence(instance: JccInstance, row_index: int, samples: int = 10_000, *,
                           seed: int = 0, margin: float = 1e-9,
                           options: LpOptions | None = None) -> EquivalenceReport:
    """Compare the envelope inequality with a direct violation count at random points.

    A counterexample is a point where ``a0 @ x + E(ahat @ x) <= 0`` disagrees
    with "violated in at most p scenarios". Points whose envelope value lies
    within ``margin`` of zero are counted as ``near_boundary`` instead, since
    a floating-point sign there carries no information.
    """
    rng = np.random.default_rng(seed)
    row = instance.rows[row_index]
    iv = z_bounds(instance, row_index, options)
    pts = sample_polyhedron(instance.polyhedron, samples, rng, options=options)
    z = np.clip(pts @ row.a_hat, iv.lower, iv.upper)
    if iv.degenerate:
        env = np.array([_level(row.omega * zi - row.b, instance) for zi in z])
    else:
        env = row_envelope(instance, row_index, iv).evaluate(z)
    lhs = pts @ row.a0 + env
    vals = (pts @ row.a0)[:, None] + np.outer(pts @ row.a_hat, row.omega) - row.b[None, :]
    if instance.uniform:
        within = (vals > 0).sum(axis=1) <= instance.budget
    else:
        within = (vals > 0).astype(float) @ instance.scenario_probs <= instance.epsilon + 1e-12
    report = EquivalenceReport(row_index, pts.shape[0], int(within.sum()))
    near = np.abs(lhs) <= margin
    report.near_boundary = int(near.sum())
    bad = np.flatnonzero(((lhs <= 0) != within) & ~near)
    report.counterexamples = [pts[i].tolist() for i in bad]
    return report
