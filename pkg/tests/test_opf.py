import numpy as np
import pytest

from jccsaa.bnb import MilpRelaxation, pwl_error_bound, solve_milp, variable_box
from jccsaa.core import BigMTable, build_saa_milp
from jccsaa.opf import (DEFAULT_ZETA, SHAPES, PowerSystem, ScenarioSample, build_covariance,
                        build_jcc_opf, compute_ptdf, evaluate_dispatch, load_system,
                        opf_instance, sample_scenarios, synthetic_system)
from jccsaa.strengthen import run_pipeline, tighten
from oracles import enumerate_milp


def triangle(slack=2):
    return PowerSystem(demand=[0.0, 0.0, 0.0], gen_bus=[0], pmin=[0.0], pmax=[1.0], c2=[0.0],
                       c1=[1.0], c0=[0.0], line_from=[0, 0, 1], line_to=[1, 2, 2],
                       reactance=[0.1, 0.1, 0.1], capacity=[1.0, 1.0, 1.0], slack=slack)


def test_ptdf_triangle():
    B = compute_ptdf(triangle())
    # one unit injected at bus 1 and withdrawn at the slack (bus 3)
    np.testing.assert_allclose(B[:, 0], [1 / 3, 2 / 3, 1 / 3], atol=1e-12)
    np.testing.assert_allclose(B[:, 2], 0.0)


def test_ptdf_flow_conservation():
    system = synthetic_system(20, 5, 30, seed=3)
    B = compute_ptdf(system)
    inj = np.random.default_rng(0).normal(size=20)
    inj -= inj.mean()
    flow = B @ inj
    inc = np.zeros((system.num_lines, system.num_buses))
    inc[np.arange(system.num_lines), system.line_from] = 1.0
    inc[np.arange(system.num_lines), system.line_to] = -1.0
    # net outflow at every bus equals its injection
    np.testing.assert_allclose(inc.T @ flow, inj, atol=1e-9)


def test_ptdf_disconnected():
    system = PowerSystem([1.0, 1.0, 1.0, 1.0], [0], [0.0], [5.0], [0.0], [1.0], [0.0],
                         [0, 2], [1, 3], [0.1, 0.1], [1.0, 1.0])
    with pytest.raises(ValueError):
        compute_ptdf(system)


def test_covariance_diagonal():
    system = load_system("rts24")
    for seed in range(5):
        sigma = build_covariance(system, 0.15, seed)
        np.testing.assert_allclose(np.diag(sigma), (0.15 * system.demand) ** 2, rtol=0, atol=1e-12)
        np.testing.assert_allclose(sigma, sigma.T)
    with pytest.raises(ValueError):
        build_covariance(system, 0.0, 0)


def test_cholesky_succeeds():
    system = load_system("rts24")
    live = system.demand > 0
    for seed in range(100):
        sigma = build_covariance(system, 0.15, seed)
        np.linalg.cholesky(sigma[np.ix_(live, live)])
        np.linalg.cholesky(build_covariance(load_system("three-bus"), 0.15, seed))


def test_default_zeta():
    assert DEFAULT_ZETA["ieee300"] == 0.05
    assert all(DEFAULT_ZETA[k] == 0.15 for k in ("rts24", "ieee57", "rts73", "ieee118"))


def test_zero_covariance_sample():
    s = sample_scenarios(np.zeros((3, 3)), 10, seed=1)
    assert np.all(s.omega == 0) and np.all(s.aggregate == 0) and s.variance_estimate == 0


def test_sampling_statistics():
    sigma = build_covariance(load_system("three-bus"), 0.15, seed=2)
    n = 100_000
    s = sample_scenarios(sigma, n, seed=2)
    sd = np.sqrt(np.diag(sigma))
    assert np.all(np.abs(s.omega.mean(axis=1)) <= 4 * sd / np.sqrt(n))
    emp = np.cov(s.omega)
    np.testing.assert_allclose(np.diag(emp), np.diag(sigma), rtol=0.05)
    np.testing.assert_allclose(s.aggregate, s.omega.sum(axis=0), atol=1e-9)
    assert s.variance_estimate == pytest.approx(np.var(s.aggregate, ddof=1))


def test_sampling_is_seeded():
    sigma = build_covariance(load_system("three-bus"), 0.15, seed=0)
    a, b = sample_scenarios(sigma, 50, 7), sample_scenarios(sigma, 50, 7)
    np.testing.assert_array_equal(a.omega, b.omega)
    assert not np.array_equal(a.omega, sample_scenarios(sigma, 50, 8).omega)


def test_indefinite_covariance_rejected():
    with pytest.raises(ValueError):
        sample_scenarios(np.array([[1.0, 2.0], [2.0, 1.0]]), 5, 0)


def test_rts24_row_count():
    inst, system, _ = opf_instance("rts24", 8, 0.05)
    assert inst.num_rows == 2 * 32 + 2 * 38 == 140
    assert inst.labels[0] == "gen0_lower" and inst.labels[-1] == "line37_upper"


@pytest.mark.parametrize("name", list(SHAPES))
@pytest.mark.parametrize("S", [8, 50, 200])
def test_all_shapes_build(name, S):
    inst, system, sample = opf_instance(name, S, 0.05, seed=1)
    N, G, L = SHAPES[name]
    assert (system.num_buses, system.num_gens, system.num_lines) == (N, G, L)
    assert inst.num_rows == 2 * G + 2 * L and inst.num_scenarios == S
    assert inst.num_vars == 2 * G


def test_capacity_below_demand():
    system = load_system("three-bus")
    short = PowerSystem(system.demand, system.gen_bus, system.pmin, system.pmax / 10, system.c2,
                        system.c1, system.c0, system.line_from, system.line_to, system.reactance,
                        system.capacity, system.slack)
    with pytest.raises(ValueError, match="capacity"):
        build_jcc_opf(short, ScenarioSample.from_omega(np.zeros((3, 4))), 0.05)


def test_system_json_round_trip(tmp_path):
    system = synthetic_system(10, 3, 14, seed=5)
    path = tmp_path / "sys.json"
    system.save(path)
    back = PowerSystem.load(path)
    for f in ("demand", "gen_bus", "pmax", "c2", "line_from", "line_to", "reactance", "capacity"):
        np.testing.assert_array_equal(getattr(back, f), getattr(system, f))
    assert back.slack == system.slack


def test_zero_variance_matches_qp():
    cp = pytest.importorskip("cvxpy")
    system = load_system("three-bus")
    sample = ScenarioSample.from_omega(np.zeros((3, 20)))
    inst = build_jcc_opf(system, sample, 0.05)
    model = build_saa_milp(inst, BigMTable.constant(inst.num_rows, 20, 1e4))
    res = solve_milp(model, segments=64)
    G = system.num_gens
    p = cp.Variable(G)
    B = compute_ptdf(system)
    flow = B @ (system.gen_incidence() @ p - system.demand)
    prob = cp.Problem(cp.Minimize(system.c2 @ cp.square(p) + system.c1 @ p),
                      [cp.sum(p) == system.demand.sum(), p >= system.pmin, p <= system.pmax,
                       cp.abs(flow) <= system.capacity])
    prob.solve(solver="CLARABEL")
    box = variable_box(inst.polyhedron, range(2 * G))
    slack = pwl_error_bound(inst.objective, 64, box)
    tol = 1e-7 * abs(prob.value)  # interior-point accuracy
    assert res.objective <= prob.value + tol
    assert res.true_objective >= prob.value - tol
    assert res.true_objective - prob.value <= slack + tol
    np.testing.assert_allclose(res.x[:G], p.value, atol=0.5)


def test_small_sample_matches_enumeration():
    inst, system, sample = opf_instance("three-bus", 8, 0.25, seed=3)
    assert inst.budget == 2
    run = run_pipeline(inst, "TS")
    want, _ = enumerate_milp(inst, MilpRelaxation(run.model).pwl)
    assert run.objective == pytest.approx(want, rel=1e-9)


def test_dispatch_properties():
    inst, system, sample = opf_instance("three-bus", 60, 0.05, seed=4)
    run = run_pipeline(inst, "TS+V")
    x = run.result.x
    G = system.num_gens
    assert x[G:].sum() == pytest.approx(1.0, abs=1e-9)
    assert x[:G].sum() == pytest.approx(system.demand.sum(), abs=1e-9)
    assert inst.polyhedron.contains(x, 1e-9)
    assert evaluate_dispatch(system, x, sample) <= inst.budget / 60 + 1e-12
    fresh = sample_scenarios(np.zeros((3, 3)), 100, 0)
    assert evaluate_dispatch(system, x, fresh) == 0.0


def test_infeasible_dispatch_fails_often():
    system = load_system("three-bus")
    sigma = build_covariance(system, 0.5, seed=1)
    sample = sample_scenarios(sigma, 2000, seed=1)
    # generator 1 at its limit carries all of the recourse
    p = np.array([160.0, 40.0])
    beta = np.array([1.0, 0.0])
    assert evaluate_dispatch(system, (p, beta), sample) > 0.45
    # with beta on the saturated unit every negative error pushes it past pmax
    negatives = np.mean(sample.aggregate < 0)
    assert evaluate_dispatch(system, (p, beta), sample) >= negatives - 1e-12


def test_three_bus_acceleration_is_exact():
    inst, _, _ = opf_instance("three-bus", 100, 0.05, seed=0)
    a, b = tighten(inst, 3), tighten(inst, 3, accelerate=False)
    np.testing.assert_allclose(a.table.values, b.table.values, atol=1e-9, rtol=0)
    assert a.reinstated == 0
