import numpy as np
import pytest
from hypothesis import given, strategies as st

from jccsaa.bnb import MilpRelaxation, solve_milp
from jccsaa.core import (BigMTable, JccInstance, Polyhedron, QuadraticObjective, ScenarioRow,
                         build_saa_milp)
from jccsaa.cuts import (CutSet, RowCuts, ZInterval, generate_cut_set, generate_cuts,
                         row_envelope, sample_polyhedron, verify_row_equivalence, z_bounds)
from jccsaa.envelope import lower_hull
from jccsaa.strengthen import tighten
from conftest import random_instance
from oracles import enumerate_milp, saa_lp, vertices


def three_line_instance():
    # lines t = z, t = -z, t = 1 as Omega_s z - b_s with z = x on [-2, 2]; p = 1
    poly = Polyhedron.box([-2.0], [2.0])
    row = ScenarioRow([0.0], [1.0], [1.0, -1.0, 0.0], [0.0, 0.0, -1.0])
    return JccInstance(poly, QuadraticObjective.linear([1.0]), (row,), 0.5)


def test_z_bounds_box():
    poly = Polyhedron.box([0, 0], [1, 1])
    obj = QuadraticObjective.linear([0, 0])
    rows = (ScenarioRow([0, 0], [1, 1], [1.0], [0.0]), ScenarioRow([1, 0], [0, 0], [1.0], [0.0]))
    inst = JccInstance(poly, obj, rows, 0.0)
    iv = z_bounds(inst, 0)
    assert (iv.lower, iv.upper) == pytest.approx((0.0, 2.0))
    zero = z_bounds(inst, 1)
    assert (zero.lower, zero.upper) == (0.0, 0.0) and zero.degenerate


@given(st.integers(0, 2**31))
def test_z_bounds_match_vertices(seed):
    inst = random_instance(np.random.default_rng(seed))
    P = inst.polyhedron
    V = vertices(P.A, P.senses, P.rhs, P.var_lower, P.var_upper)
    for j in range(inst.num_rows):
        iv = z_bounds(inst, j)
        z = V @ inst.rows[j].a_hat
        assert iv.lower == pytest.approx(z.min(), abs=1e-8)
        assert iv.upper == pytest.approx(z.max(), abs=1e-8)


def test_three_line_cuts():
    inst = three_line_instance()
    assert inst.budget == 1
    cuts = generate_cuts(inst, 0)
    np.testing.assert_allclose(cuts.hull, [(-2, 1), (0, 0), (2, 1)], atol=1e-12)
    np.testing.assert_allclose(cuts.slopes, [-0.5, 0.5])
    np.testing.assert_allclose(cuts.A, [[-0.5], [0.5]])
    np.testing.assert_allclose(cuts.rhs, [0.0, 0.0], atol=1e-12)
    assert len(cuts) == len(cuts.hull) - 1
    assert not cuts.always_within_budget


def test_last_rank_uses_pointwise_minimum():
    # p + 1 = S: the envelope is the lowest line, so cuts follow the weakest scenario
    poly = Polyhedron.box([-2.0], [2.0])
    row = ScenarioRow([0.0], [1.0], [1.0, -1.0, 0.0], [0.0, 0.0, -1.0])
    inst = JccInstance(poly, QuadraticObjective.linear([1.0]), (row,), 0.9)
    assert inst.budget == 2
    env = row_envelope(inst, 0, z_bounds(inst, 0))
    zs = np.linspace(-2, 2, 101)
    np.testing.assert_allclose(env.evaluate(zs), np.minimum(zs, -zs), atol=1e-12)
    # -|z| is concave, so its lower hull is the chord between the endpoints
    cuts = generate_cuts(inst, 0)
    np.testing.assert_allclose(cuts.hull_value(zs), -2.0, atol=1e-12)


def test_degenerate_interval():
    poly = Polyhedron.box([0.0, 0.0], [1.0, 1.0])
    obj = QuadraticObjective.linear([0.0, 0.0])
    # ahat = 0: the row reads a0 @ x <= b_s and U is the (p+1)-th largest of -b
    row = ScenarioRow([1.0, 0.0], [0.0, 0.0], [0.3, 0.1, 0.2], [0.5, 0.8, 0.6])
    inst = JccInstance(poly, obj, (row,), 0.4)
    cuts = generate_cuts(inst, 0)
    assert cuts.interval.degenerate and len(cuts) == 1
    np.testing.assert_allclose(cuts.A, [[1.0, 0.0]])
    assert cuts.rhs[0] == pytest.approx(0.6)
    # no x-part and a non-positive level: nothing to emit
    quiet = JccInstance(poly, obj, (ScenarioRow([0.0, 0.0], [0.0, 0.0], [0.0] * 3, [1.0] * 3),), 0.4)
    empty = generate_cuts(quiet, 0)
    assert len(empty) == 0 and empty.always_within_budget


def test_within_budget_fact():
    poly = Polyhedron.box([0.0], [1.0])
    row = ScenarioRow([0.0], [1.0], [1.0, 1.0, 1.0], [5.0, 6.0, 7.0])
    inst = JccInstance(poly, QuadraticObjective.linear([1.0]), (row,), 0.4)
    assert generate_cuts(inst, 0).always_within_budget


def test_cutset_dedupes_near_duplicates():
    iv = ZInterval(0.0, 1.0)
    a = RowCuts(0, iv, np.array([1.0]), np.zeros((1, 2)), np.array([[1.0, 2.0]]), np.array([3.0]))
    b = RowCuts(1, iv, np.array([1.0]), np.zeros((1, 2)), np.array([[2.0, 4.0 + 1e-12]]), np.array([5.0]))
    c = RowCuts(2, iv, np.zeros(1), np.zeros((1, 2)), np.zeros((1, 2)), np.array([1.0]))
    cs = CutSet((a, b, c), 2)
    A, rhs = cs.matrix()
    assert cs.raw_count == 3 and A.shape == (1, 2)
    # 2x + 4y <= 5 is the tighter of the pair
    assert rhs[0] / np.linalg.norm(A[0]) == pytest.approx(5.0 / np.linalg.norm([2.0, 4.0]))


def _feasible_points(inst, rng, count=6):
    """MILP-feasible x from random violation patterns and random objectives."""
    S, p = inst.num_scenarios, inst.budget
    P = inst.polyhedron
    for _ in range(count):
        drop = rng.permutation(S)[:p]
        enforced = [s for s in range(S) if s not in drop]
        c = rng.standard_normal(inst.num_vars)
        probe = JccInstance(P, QuadraticObjective.linear(c), inst.rows, inst.epsilon)
        sol = saa_lp(probe, enforced)
        if sol is not None:
            yield sol[1]


@given(st.integers(0, 2**31))
def test_cuts_hold_at_feasible_points(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, max_scenarios=10, max_budget=2)
    A, rhs = generate_cut_set(inst).matrix()
    _, x_opt = enumerate_milp(inst)
    for x in [x_opt, *_feasible_points(inst, rng)]:
        assert np.all(A @ x <= rhs + 1e-7)


@given(st.integers(0, 2**31))
def test_cuts_keep_optimum_and_raise_relaxation(seed):
    inst = random_instance(np.random.default_rng(seed))
    model = build_saa_milp(inst, tighten(inst, 1).raw, screen=False)
    rel = MilpRelaxation(model)
    with_cuts = model.with_cuts(*generate_cut_set(inst).matrix())
    rel_c = MilpRelaxation(with_cuts, pwl=rel.pwl)
    base, cut = solve_milp(model, relaxation=rel), solve_milp(with_cuts, relaxation=rel_c)
    assert cut.objective == pytest.approx(base.objective, abs=1e-7)
    assert rel_c.solve()[0] >= rel.solve()[0] - 1e-9


@given(st.integers(0, 2**31))
def test_hull_is_cut_maximum(seed):
    inst = random_instance(np.random.default_rng(seed))
    for j in range(inst.num_rows):
        cuts = generate_cuts(inst, j)
        if cuts.interval.degenerate:
            continue
        zs = np.linspace(cuts.interval.lower, cuts.interval.upper, 1001)
        hull = lower_hull(cuts.envelope.vertices)
        assert np.max(np.abs(cuts.hull_value(zs) - np.interp(zs, hull[:, 0], hull[:, 1]))) <= 1e-9
        # the hull never exceeds the envelope
        assert np.all(cuts.hull_value(zs) <= cuts.envelope.evaluate(zs) + 1e-9)
        assert np.all(np.diff(cuts.slopes) > 0)


def test_equivalence_at_exact_counts():
    inst = three_line_instance()
    row = inst.rows[0]
    env = row_envelope(inst, 0, z_bounds(inst, 0))
    # x = 0 violates one scenario (p), x = 1 and x = -1.5 violate two (p + 1)
    for x, count in ((0.0, 1), (1.0, 2), (-1.5, 2), (0.5, 2)):
        viol = int(np.sum(row.omega * x - row.b > 0))
        assert viol == count
        assert (env.evaluate(x) <= 0) == (viol <= inst.budget)


def test_equivalence_three_lines():
    report = verify_row_equivalence(three_line_instance(), 0, 10_000, seed=1)
    assert report.samples == 10_000 and report.ok


@given(st.integers(0, 2**31))
def test_equivalence_random(seed):
    inst = random_instance(np.random.default_rng(seed))
    for j in range(inst.num_rows):
        assert verify_row_equivalence(inst, j, 500, seed=seed).ok


@given(st.integers(0, 2**31))
def test_equivalence_weighted(seed):
    inst = random_instance(np.random.default_rng(seed), weighted=True)
    for j in range(inst.num_rows):
        assert verify_row_equivalence(inst, j, 500, seed=seed).ok


@given(st.integers(0, 2**31))
def test_envelope_inequality_implies_cuts(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng)
    pts = sample_polyhedron(inst.polyhedron, 300, rng)
    for j in range(inst.num_rows):
        cuts = generate_cuts(inst, j)
        if cuts.interval.degenerate:
            continue
        row = inst.rows[j]
        z = np.clip(pts @ row.a_hat, cuts.interval.lower, cuts.interval.upper)
        ok5 = pts @ row.a0 + cuts.envelope.evaluate(z) <= 0
        lhs = pts[ok5] @ cuts.A.T - cuts.rhs[None, :]
        assert np.all(lhs <= 1e-9)
