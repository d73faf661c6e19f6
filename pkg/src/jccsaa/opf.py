"""DC optimal power flow with affine recourse as a joint chance-constrained LP.

Decision vector ``x = (p_1..p_G, beta_1..beta_G)``. Generator ``g`` produces
``p_g - Omega * beta_g`` when the aggregate forecast error is ``Omega``. The
chance block holds four row families, in this order: generator lower
limits, generator upper limits, line lower limits, line upper limits.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .core import JccInstance, Polyhedron, QuadraticObjective, ScenarioRow

__all__ = [
    "PowerSystem", "ScenarioSample", "compute_ptdf", "build_covariance", "sample_scenarios",
    "build_jcc_opf", "evaluate_dispatch", "synthetic_system", "load_system", "SHAPES",
    "DEFAULT_ZETA", "SYSTEM_NAMES", "opf_instance",
]

# buses, generators, lines of the benchmark systems (the 57-bus network has 80 branches)
SHAPES = {
    "rts24": (24, 32, 38),
    "ieee57": (57, 4, 80),
    "rts73": (73, 96, 120),
    "ieee118": (118, 19, 186),
    "ieee300": (300, 57, 411),
}
DEFAULT_ZETA = {"three-bus": 0.15, "rts24": 0.15, "ieee57": 0.15, "rts73": 0.15,
                "ieee118": 0.15, "ieee300": 0.05}
SYSTEM_NAMES = ("three-bus",) + tuple(SHAPES)


@dataclass(frozen=True, eq=False)
class PowerSystem:
    """Network data; bus, generator and line arrays are indexed from zero.

    ``gen_bus``, ``line_from``, ``line_to`` and ``slack`` are bus indices.
    """

    demand: np.ndarray
    gen_bus: np.ndarray
    pmin: np.ndarray
    pmax: np.ndarray
    c2: np.ndarray
    c1: np.ndarray
    c0: np.ndarray
    line_from: np.ndarray
    line_to: np.ndarray
    reactance: np.ndarray
    capacity: np.ndarray
    slack: int = 0
    name: str = "system"

    def __post_init__(self):
        for f in ("demand", "pmin", "pmax", "c2", "c1", "c0", "reactance", "capacity"):
            object.__setattr__(self, f, np.asarray(getattr(self, f), dtype=float).reshape(-1))
        for f in ("gen_bus", "line_from", "line_to"):
            object.__setattr__(self, f, np.asarray(getattr(self, f), dtype=int).reshape(-1))
        N, G, L = self.num_buses, self.num_gens, self.num_lines
        if any(getattr(self, f).shape != (G,) for f in ("pmin", "pmax", "c2", "c1", "c0")):
            raise ValueError("generator arrays must share one length")
        if any(getattr(self, f).shape != (L,) for f in ("line_to", "reactance", "capacity")):
            raise ValueError("line arrays must share one length")
        if np.any(self.demand < 0):
            raise ValueError("demands must be nonnegative")
        if np.any(self.gen_bus < 0) or np.any(self.gen_bus >= N):
            raise ValueError("generator bus index out of range")
        if np.any(self.line_from < 0) or np.any(self.line_from >= N) \
                or np.any(self.line_to < 0) or np.any(self.line_to >= N):
            raise ValueError("line endpoint out of range")
        if np.any(self.pmin > self.pmax):
            raise ValueError("pmin must not exceed pmax")
        if np.any(self.c2 < 0):
            raise ValueError("quadratic costs must be nonnegative")
        if np.any(self.reactance <= 0) or np.any(self.capacity <= 0):
            raise ValueError("reactances and capacities must be positive")
        if not 0 <= self.slack < N:
            raise ValueError("slack bus out of range")

    @property
    def num_buses(self) -> int:
        return self.demand.shape[0]

    @property
    def num_gens(self) -> int:
        return self.pmin.shape[0]

    @property
    def num_lines(self) -> int:
        return self.line_from.shape[0]

    def gen_incidence(self) -> np.ndarray:
        """``N x G`` matrix with a one where generator ``g`` sits at bus ``n``."""
        E = np.zeros((self.num_buses, self.num_gens))
        E[self.gen_bus, np.arange(self.num_gens)] = 1.0
        return E

    def to_dict(self) -> dict:
        """JSON layout; bus ids in the file are one-based."""
        return {
            "name": self.name,
            "slack": int(self.slack) + 1,
            "buses": [{"id": n + 1, "demand": float(d)} for n, d in enumerate(self.demand)],
            "generators": [
                {"bus": int(b) + 1, "pmin": float(lo), "pmax": float(hi),
                 "c2": float(q), "c1": float(c), "c0": float(k)}
                for b, lo, hi, q, c, k in zip(self.gen_bus, self.pmin, self.pmax,
                                              self.c2, self.c1, self.c0)],
            "lines": [
                {"from": int(f) + 1, "to": int(t) + 1, "reactance": float(x), "capacity": float(c)}
                for f, t, x, c in zip(self.line_from, self.line_to, self.reactance, self.capacity)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PowerSystem":
        ids = [int(b["id"]) for b in data["buses"]]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate bus ids")
        index = {b: i for i, b in enumerate(ids)}
        try:
            gens, lines = data["generators"], data["lines"]
            return cls(
                demand=[b["demand"] for b in data["buses"]],
                gen_bus=[index[int(g["bus"])] for g in gens],
                pmin=[g.get("pmin", 0.0) for g in gens],
                pmax=[g["pmax"] for g in gens],
                c2=[g.get("c2", 0.0) for g in gens],
                c1=[g.get("c1", 0.0) for g in gens],
                c0=[g.get("c0", 0.0) for g in gens],
                line_from=[index[int(ln["from"])] for ln in lines],
                line_to=[index[int(ln["to"])] for ln in lines],
                reactance=[ln["reactance"] for ln in lines],
                capacity=[ln["capacity"] for ln in lines],
                slack=index[int(data["slack"])],
                name=data.get("name", "system"),
            )
        except KeyError as exc:
            raise ValueError(f"missing field or unknown bus id: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "PowerSystem":
        return cls.from_dict(json.loads(Path(path).read_text()))


def load_system(name_or_path: str, seed: int = 0) -> PowerSystem:
    """The bundled three-bus fixture, a synthetic benchmark shape, or a JSON file."""
    if name_or_path in ("three-bus", "three_bus", "3bus"):
        text = resources.files("jccsaa").joinpath("data/three_bus.json").read_text()
        return PowerSystem.from_dict(json.loads(text))
    if name_or_path in SHAPES:
        return synthetic_system(*SHAPES[name_or_path], seed=seed, name=name_or_path)
    return PowerSystem.load(name_or_path)


def compute_ptdf(system: PowerSystem) -> np.ndarray:
    """``L x N`` shift factors; injections are balanced at the slack bus."""
    N, L = system.num_buses, system.num_lines
    inc = np.zeros((L, N))
    inc[np.arange(L), system.line_from] = 1.0
    inc[np.arange(L), system.line_to] = -1.0
    adj = (np.abs(inc.T) @ np.abs(inc)) > 0
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise ValueError("network is disconnected")
    b = 1.0 / system.reactance
    lap = inc.T @ (b[:, None] * inc)
    keep = np.setdiff1d(np.arange(N), [system.slack])
    ptdf = np.zeros((L, N))
    ptdf[:, keep] = (b[:, None] * inc[:, keep]) @ np.linalg.inv(lap[np.ix_(keep, keep)])
    return ptdf


def build_covariance(system: PowerSystem, zeta: float, seed: int) -> np.ndarray:
    """Random correlation scaled so that ``Sigma_nn = (zeta d_n)^2``."""
    if not 0.0 < zeta <= 1.0:
        raise ValueError("zeta must lie in (0, 1]")
    rng = np.random.default_rng([seed, 0])
    N = system.num_buses
    Ch = rng.uniform(-1.0, 1.0, size=(N, N))
    C = Ch @ Ch.T
    s = np.sqrt(np.diag(C))
    corr = C / np.outer(s, s)
    d = system.demand
    return zeta ** 2 * corr * np.outer(d, d)


@dataclass(frozen=True, eq=False)
class ScenarioSample:
    """Nodal errors ``omega`` (``N x S``) and their column sums ``aggregate``."""

    omega: np.ndarray
    aggregate: np.ndarray
    variance_estimate: float

    @classmethod
    def from_omega(cls, omega) -> "ScenarioSample":
        omega = np.asarray(omega, dtype=float)
        agg = omega.sum(axis=0)
        var = float(np.var(agg, ddof=1)) if agg.size > 1 else 0.0
        return cls(omega, agg, var)

    @property
    def num_scenarios(self) -> int:
        return self.omega.shape[1]


def sample_scenarios(sigma, num: int, seed: int) -> ScenarioSample:
    """``num`` draws of ``N(0, sigma)`` through a Cholesky factor.

    Buses with zero variance get zero error; the factor is taken on the
    remaining block, which must be positive definite.
    """
    sigma = np.asarray(sigma, dtype=float)
    if num < 1:
        raise ValueError("num must be positive")
    N = sigma.shape[0]
    rng = np.random.default_rng([seed, 1])
    live = np.flatnonzero(np.diag(sigma) > 0)
    dead = np.setdiff1d(np.arange(N), live)
    if dead.size and np.any(sigma[dead] != 0):
        raise ValueError("covariance is not positive semidefinite")
    omega = np.zeros((N, num))
    if live.size:
        try:
            factor = np.linalg.cholesky(sigma[np.ix_(live, live)])
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance factorisation failed (matrix is not positive "
                             "definite)") from exc
        omega[live] = factor @ rng.standard_normal((live.size, num))
    return ScenarioSample.from_omega(omega)


def build_jcc_opf(system: PowerSystem, sample: ScenarioSample, epsilon: float, *,
                  ptdf: np.ndarray | None = None) -> JccInstance:
    G, L = system.num_gens, system.num_lines
    d = system.demand
    if system.pmax.sum() < d.sum():
        raise ValueError(f"infeasible system: total capacity {system.pmax.sum():g} "
                         f"is below total demand {d.sum():g}")
    B = compute_ptdf(system) if ptdf is None else np.asarray(ptdf, dtype=float)
    BG = B @ system.gen_incidence()          # L x G flow shift of each generator
    n = 2 * G
    eye = np.eye(G)
    zero = np.zeros((G, G))
    rows, senses, rhs = [], [], []

    def add(block, sense, values):
        rows.append(np.atleast_2d(block))
        senses.extend([sense] * np.atleast_2d(block).shape[0])
        rhs.append(np.atleast_1d(values))

    add(np.concatenate([np.zeros(G), np.ones(G)]), "=", 1.0)
    add(np.concatenate([np.ones(G), np.zeros(G)]), "=", d.sum())
    add(np.hstack([eye, zero]), ">=", system.pmin)
    add(np.hstack([eye, zero]), "<=", system.pmax)
    base = B @ d
    add(np.hstack([BG, np.zeros((L, G))]), ">=", -system.capacity + base)
    add(np.hstack([BG, np.zeros((L, G))]), "<=", system.capacity + base)
    poly = Polyhedron(np.vstack(rows), tuple(senses), np.concatenate(rhs),
                      np.zeros(n), np.full(n, np.inf))

    Om = sample.aggregate
    Bw = B @ sample.omega                   # L x S
    chance, labels = [], []
    for g in range(G):
        a0 = np.zeros(n); a0[g] = -1.0
        ah = np.zeros(n); ah[G + g] = 1.0
        chance.append(ScenarioRow(a0, ah, Om, np.full(Om.shape, -system.pmin[g])))
        labels.append(f"gen{g}_lower")
    for g in range(G):
        a0 = np.zeros(n); a0[g] = 1.0
        ah = np.zeros(n); ah[G + g] = -1.0
        chance.append(ScenarioRow(a0, ah, Om, np.full(Om.shape, system.pmax[g])))
        labels.append(f"gen{g}_upper")
    for ln in range(L):
        a0 = np.concatenate([-BG[ln], np.zeros(G)])
        ah = np.concatenate([np.zeros(G), BG[ln]])
        chance.append(ScenarioRow(a0, ah, Om, system.capacity[ln] - base[ln] + Bw[ln]))
        labels.append(f"line{ln}_lower")
    for ln in range(L):
        a0 = np.concatenate([BG[ln], np.zeros(G)])
        ah = np.concatenate([np.zeros(G), -BG[ln]])
        chance.append(ScenarioRow(a0, ah, Om, system.capacity[ln] + base[ln] - Bw[ln]))
        labels.append(f"line{ln}_upper")
    objective = QuadraticObjective(np.concatenate([system.c2, sample.variance_estimate * system.c2]),
                                   np.concatenate([system.c1, np.zeros(G)]), system.c0.sum())
    return JccInstance(poly, objective, tuple(chance), epsilon, labels=tuple(labels))


def evaluate_dispatch(system: PowerSystem, dispatch, sample: ScenarioSample, *,
                      ptdf: np.ndarray | None = None, tol: float = 1e-9) -> float:
    """Fraction of scenarios in ``sample`` where any generator or line limit fails.

    ``dispatch`` is the stacked vector ``(p, beta)`` or a ``(p, beta)`` pair.
    """
    G = system.num_gens
    if isinstance(dispatch, tuple):
        p, beta = (np.asarray(v, dtype=float) for v in dispatch)
    else:
        x = np.asarray(dispatch, dtype=float)
        p, beta = x[:G], x[G:2 * G]
    B = compute_ptdf(system) if ptdf is None else ptdf
    Om = sample.aggregate
    out = p[:, None] - np.outer(beta, Om)
    bad = np.any(out < system.pmin[:, None] - tol, axis=0) | np.any(out > system.pmax[:, None] + tol, axis=0)
    inj = system.gen_incidence() @ out - system.demand[:, None] + sample.omega
    flow = B @ inj
    cap = system.capacity[:, None]
    bad |= np.any(np.abs(flow) > cap + tol, axis=0)
    return float(bad.mean())


def synthetic_system(num_buses: int, num_gens: int, num_lines: int, seed: int = 0,
                     name: str = "synthetic") -> PowerSystem:
    """Random connected network with the given counts and comfortable limits."""
    if num_lines < num_buses - 1:
        raise ValueError("a connected network needs at least num_buses - 1 lines")
    if num_lines > num_buses * (num_buses - 1) // 2:
        raise ValueError("too many lines for a simple graph")
    rng = np.random.default_rng(seed)
    edges = [(int(rng.integers(0, i)), i) for i in range(1, num_buses)]
    have = {tuple(sorted(e)) for e in edges}
    while len(edges) < num_lines:
        a, b = (int(v) for v in rng.choice(num_buses, 2, replace=False))
        key = (min(a, b), max(a, b))
        if key not in have:
            have.add(key)
            edges.append(key)
    demand = np.where(rng.random(num_buses) < 0.3, 0.0, rng.uniform(10.0, 100.0, num_buses))
    if demand.sum() == 0:
        demand[0] = 50.0
    gen_bus = rng.integers(0, num_buses, num_gens)
    share = rng.uniform(0.5, 1.5, num_gens)
    pmax = 1.6 * demand.sum() * share / share.sum()
    ef, et = np.array(edges).T
    reactance = rng.uniform(0.02, 0.3, num_lines)
    system = PowerSystem(demand, gen_bus, np.zeros(num_gens), pmax,
                         rng.uniform(0.001, 0.05, num_gens), rng.uniform(5.0, 40.0, num_gens),
                         np.zeros(num_gens), ef, et, reactance, np.ones(num_lines),
                         slack=0, name=name)
    E = system.gen_incidence()
    p0 = pmax * demand.sum() / pmax.sum()
    flow = compute_ptdf(system) @ (E @ p0 - demand)
    capacity = 1.5 * np.abs(flow) + 0.1 * demand.sum() / num_lines + 10.0
    return PowerSystem(demand, gen_bus, np.zeros(num_gens), pmax, system.c2, system.c1,
                       system.c0, ef, et, reactance, capacity, slack=0, name=name)


def opf_instance(system, scenarios: int, epsilon: float, zeta: float | None = None,
                 seed: int = 0) -> tuple[JccInstance, PowerSystem, ScenarioSample]:
    """Sample ``scenarios`` errors for ``system`` (name, path or object) and build the instance."""
    if isinstance(system, str):
        zeta = DEFAULT_ZETA.get(system, 0.15) if zeta is None else zeta
        system = load_system(system)
    zeta = 0.15 if zeta is None else zeta
    sample = sample_scenarios(build_covariance(system, zeta, seed), scenarios, seed)
    return build_jcc_opf(system, sample, epsilon), system, sample
