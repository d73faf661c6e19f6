"""k-upper envelopes of bounded line sets and lower hulls of vertex chains.

A line here is ``t = slope * z + intercept`` restricted to ``[z_d, z_u]``.
The k-upper envelope is the pointwise k-th largest line value; the weighted
variant replaces the rank count by the probability mass strictly above.

The sweep walks the k-th level directly: start on the level line at ``z_d``,
walk right to its nearest crossing with another line, re-select the level
line just right of that crossing and repeat until ``z_u``. Each advance is
a plain O(n) scan over the lines.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LineSet", "EnvelopeChain", "k_upper_envelope", "weighted_k_envelope",
    "lower_hull", "lower_hull_indices", "envelope_oracle", "weighted_envelope_oracle",
]

Z_EPS = 1e-12
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LineSet:
    slopes: np.ndarray
    intercepts: np.ndarray
    domain: tuple[float, float]
    weights: np.ndarray | None = None

    def __post_init__(self):
        slopes = np.array(self.slopes, dtype=float).reshape(-1)
        intercepts = np.array(self.intercepts, dtype=float).reshape(-1)
        if slopes.shape != intercepts.shape or slopes.size < 1:
            raise ValueError("slopes and intercepts must be equal-length and nonempty")
        z_d, z_u = (float(v) for v in self.domain)
        if not (np.isfinite(z_d) and np.isfinite(z_u) and z_d < z_u):
            raise ValueError("domain must be a finite interval with z_d < z_u")
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "intercepts", intercepts)
        object.__setattr__(self, "domain", (z_d, z_u))
        if self.weights is not None:
            w = np.array(self.weights, dtype=float).reshape(-1)
            if w.shape != slopes.shape or np.any(w <= 0):
                raise ValueError("weights must be positive, one per line")
            object.__setattr__(self, "weights", w)

    @classmethod
    def from_scenarios(cls, omega, b, domain, weights=None) -> "LineSet":
        """Lines ``t = omega_s z - b_s`` of one chance-constraint row."""
        return cls(omega, -np.asarray(b, dtype=float), domain, weights)

    def __len__(self) -> int:
        return self.slopes.shape[0]

    def values(self, z) -> np.ndarray:
        """Line values; shape ``(n,)`` for scalar ``z`` or ``(len(z), n)``."""
        z = np.asarray(z, dtype=float)
        return np.multiply.outer(z, self.slopes) + self.intercepts


@dataclass(frozen=True, eq=False)
class EnvelopeChain:
    """Polygonal chain with ``vertices[r] = (z^r, t^r)``, z strictly increasing.

    ``supporting_line[r]`` is the index of the line carrying the segment
    between vertex ``r`` and ``r + 1``.
    """

    vertices: np.ndarray
    supporting_line: np.ndarray

    @property
    def z(self) -> np.ndarray:
        return self.vertices[:, 0]

    @property
    def t(self) -> np.ndarray:
        return self.vertices[:, 1]

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def evaluate(self, z) -> np.ndarray:
        return np.interp(z, self.z, self.t)


def _dedupe(lines: LineSet, weights: np.ndarray):
    pairs = np.column_stack([lines.slopes, lines.intercepts])
    uniq, first, inverse = np.unique(pairs, axis=0, return_index=True, return_inverse=True)
    folded = np.zeros(uniq.shape[0])
    np.add.at(folded, inverse.reshape(-1), weights)
    return uniq[:, 0], uniq[:, 1], folded, first


def _level_line(z, slopes, intercepts, weights, budget) -> int:
    """Index of the level line just right of ``z``.

    Lines are ranked by value at ``z`` (descending), ties broken by slope
    (descending) as a rightward perturbation would. The level line is the
    lowest-ranked one whose strictly-above mass is still within ``budget``.
    """
    v = slopes * z + intercepts
    order = np.argsort(-v, kind="stable")
    tol = TIE_TOL * max(1.0, float(np.max(np.abs(v))))
    vs = v[order]
    # regroup near-equal values so slope decides inside each tie cluster
    cluster = np.concatenate([[0], np.cumsum(np.diff(vs) < -tol)])
    ranked = order[np.lexsort((-slopes[order], cluster))]
    w = weights[ranked]
    above = np.cumsum(w) - w
    pos = int(np.searchsorted(above, budget + 1e-12 * max(1.0, abs(budget)), side="right")) - 1
    return int(ranked[max(pos, 0)])


def _sweep(slopes, intercepts, weights, budget, z_d, z_u):
    cur = _level_line(z_d, slopes, intercepts, weights, budget)
    z = z_d
    verts = [(z_d, slopes[cur] * z_d + intercepts[cur])]
    support = []
    while True:
        ds = slopes - slopes[cur]
        ok = ds != 0
        cross = np.full(slopes.shape, np.inf)
        cross[ok] = (intercepts[cur] - intercepts[ok]) / ds[ok]
        eps = Z_EPS * max(1.0, abs(z))
        cross[cross <= z + eps] = np.inf
        z_next = float(np.min(cross))
        if not z_next < z_u - Z_EPS * max(1.0, abs(z_u)):
            break
        new = _level_line(z_next, slopes, intercepts, weights, budget)
        if new != cur:
            verts.append((z_next, slopes[cur] * z_next + intercepts[cur]))
            support.append(cur)
            cur = new
        z = z_next
    verts.append((z_u, slopes[cur] * z_u + intercepts[cur]))
    support.append(cur)
    return np.array(verts), np.array(support, dtype=int)


def k_upper_envelope(lines: LineSet, k: int) -> EnvelopeChain:
    """Chain whose value at every z is the k-th largest line value."""
    n = len(lines)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    slopes, intercepts, mult, first = _dedupe(lines, np.ones(n))
    verts, support = _sweep(slopes, intercepts, mult, float(k - 1), *lines.domain)
    return EnvelopeChain(verts, first[support])


def weighted_k_envelope(lines: LineSet, epsilon: float) -> EnvelopeChain:
    """Chain of the smallest value with at most ``epsilon`` line weight strictly above."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must lie in [0, 1)")
    w = np.full(len(lines), 1.0 / len(lines)) if lines.weights is None else lines.weights
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("weights must sum to 1")
    slopes, intercepts, folded, first = _dedupe(lines, w)
    verts, support = _sweep(slopes, intercepts, folded, float(epsilon), *lines.domain)
    return EnvelopeChain(verts, first[support])


def _march(z, t, start, stop):
    """Gift-wrapping over presorted points ``start..stop`` (inclusive)."""
    out = [start]
    cur = start
    while cur < stop:
        cand = np.arange(cur + 1, stop + 1)
        slopes = (t[cand] - t[cur]) / (z[cand] - z[cur])
        m = slopes.min()
        # collinear ties: jump to the farthest point so interior ones drop out
        tied = cand[slopes <= m + TIE_TOL * max(1.0, abs(m))]
        cur = int(tied[-1])
        out.append(cur)
    return out


def lower_hull_indices(vertices) -> np.ndarray:
    pts = np.asarray(vertices, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValueError("need at least two (z, t) points")
    z, t = pts[:, 0], pts[:, 1]
    if np.any(np.diff(z) <= 0):
        raise ValueError("z must be strictly increasing")
    last = pts.shape[0] - 1
    low = int(np.argmin(t))
    left = _march(z, t, 0, low) if low > 0 else [0]
    right = _march(z, t, low, last) if low < last else [last]
    return np.array(left + right[1:], dtype=int)


def lower_hull(vertices) -> np.ndarray:
    """Lower convex hull of points presorted by z; endpoints always kept."""
    pts = np.asarray(vertices, dtype=float)
    return pts[lower_hull_indices(pts)]


def envelope_oracle(lines: LineSet, k: int, grid: int = 1001):
    """k-th largest line value by sorting, sampled on ``grid`` points."""
    zs = np.linspace(*lines.domain, grid)
    vals = np.sort(lines.values(zs), axis=1)[:, ::-1]
    return zs, vals[:, k - 1]


def weighted_envelope_oracle(lines: LineSet, epsilon: float, grid: int = 1001):
    """Smallest line value with at most ``epsilon`` weight strictly above it, per grid point."""
    zs = np.linspace(*lines.domain, grid)
    w = np.full(len(lines), 1.0 / len(lines)) if lines.weights is None else lines.weights
    vals = lines.values(zs)
    out = np.empty(grid)
    for i, row in enumerate(vals):
        above = np.array([w[row > v].sum() for v in row])
        out[i] = row[above <= epsilon + 1e-12].min()
    return zs, out
