import numpy as np
import pytest
from hypothesis import given, strategies as st

from jccsaa.envelope import (LineSet, envelope_oracle, k_upper_envelope, lower_hull,
                             weighted_envelope_oracle, weighted_k_envelope)

THREE = LineSet([1.0, -1.0, 0.0], [0.0, 0.0, 1.0], (-2.0, 2.0))


def random_lines(rng, n_max=30, weighted=False):
    n = int(rng.integers(1, n_max + 1))
    lo = float(rng.uniform(-10, 5))
    hi = lo + float(rng.uniform(0.5, 10))
    w = None
    if weighted:
        w = rng.uniform(0.2, 1.0, n)
        w /= w.sum()
    return LineSet(rng.uniform(-10, 10, n), rng.uniform(-10, 10, n), (lo, hi), w)


def test_three_line_example():
    env = k_upper_envelope(THREE, 2)
    want = [(-2, 1), (-1, 1), (0, 0), (1, 1), (2, 1)]
    np.testing.assert_allclose(env.vertices, want, atol=1e-12)


def test_single_line():
    lines = LineSet([0.5], [2.0], (0.0, 4.0))
    env = k_upper_envelope(lines, 1)
    np.testing.assert_allclose(env.vertices, [(0, 2), (4, 4)])
    assert env.supporting_line.tolist() == [0]


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_parallel_lines(k):
    lines = LineSet([1.0] * 4, [0.0, 3.0, 1.0, 2.0], (-1.0, 1.0))
    env = k_upper_envelope(lines, k)
    assert len(env) == 2
    assert env.evaluate(0.0) == pytest.approx(4 - k)


def test_k_out_of_range():
    with pytest.raises(ValueError):
        k_upper_envelope(THREE, 0)
    with pytest.raises(ValueError):
        k_upper_envelope(THREE, 4)


def test_lineset_validation():
    with pytest.raises(ValueError):
        LineSet([1.0], [1.0, 2.0], (0, 1))
    with pytest.raises(ValueError):
        LineSet([1.0], [1.0], (1, 1))
    with pytest.raises(ValueError):
        LineSet([1.0], [1.0], (0, np.inf))
    with pytest.raises(ValueError):
        LineSet([1.0, 2.0], [1.0, 2.0], (0, 1), weights=[1.0, 0.0])


def test_oracle_on_three_lines():
    zs, vals = envelope_oracle(THREE, 2)
    assert np.max(np.abs(k_upper_envelope(THREE, 2).evaluate(zs) - vals)) <= 1e-9
    _, low = envelope_oracle(THREE, 3)
    np.testing.assert_allclose(low, THREE.values(zs).min(axis=1))
    _, high = envelope_oracle(THREE, 1)
    np.testing.assert_allclose(high, THREE.values(zs).max(axis=1))


def test_coincident_lines_count_with_multiplicity():
    # two copies of t = z and one t = -z: the second largest is t = z everywhere
    lines = LineSet([1.0, 1.0, -1.0], [0.0, 0.0, 0.0], (-1.0, 1.0))
    env = k_upper_envelope(lines, 2)
    zs, vals = envelope_oracle(lines, 2)
    assert np.max(np.abs(env.evaluate(zs) - vals)) <= 1e-12


def test_concurrent_lines():
    # many lines through one point exercise the tie ordering
    slopes = np.linspace(-3, 3, 7)
    lines = LineSet(slopes, -slopes * 0.5, (-1.0, 2.0))
    for k in range(1, 8):
        zs, vals = envelope_oracle(lines, k)
        assert np.max(np.abs(k_upper_envelope(lines, k).evaluate(zs) - vals)) <= 1e-9


@given(st.integers(0, 2**31))
def test_matches_sorting_oracle(seed):
    lines = random_lines(np.random.default_rng(seed))
    for k in range(1, len(lines) + 1):
        env = k_upper_envelope(lines, k)
        zs, vals = envelope_oracle(lines, k)
        assert np.max(np.abs(env.evaluate(zs) - vals)) <= 1e-9


@given(st.integers(0, 2**31))
def test_vertices_are_line_intersections(seed):
    lines = random_lines(np.random.default_rng(seed))
    k = int(np.random.default_rng(seed + 1).integers(1, len(lines) + 1))
    env = k_upper_envelope(lines, k)
    z, t = env.z, env.t
    assert z[0] == lines.domain[0] and z[-1] == lines.domain[1]
    assert np.all(np.diff(z) > 0)
    for r, line in enumerate(env.supporting_line):
        for zz, tt in ((z[r], t[r]), (z[r + 1], t[r + 1])):
            assert abs(lines.slopes[line] * zz + lines.intercepts[line] - tt) <= 1e-9 * max(1, abs(tt))


@given(st.integers(0, 2**31))
def test_weighted_uniform_reduces_to_rank(seed):
    rng = np.random.default_rng(seed)
    lines = random_lines(rng)
    n = len(lines)
    p = int(rng.integers(0, n))
    eps = (p + 0.5) / n
    if eps >= 1:
        return
    uniform = LineSet(lines.slopes, lines.intercepts, lines.domain, np.full(n, 1.0 / n))
    a, b = weighted_k_envelope(uniform, eps), k_upper_envelope(lines, p + 1)
    assert a.vertices.shape == b.vertices.shape
    np.testing.assert_allclose(a.vertices, b.vertices, atol=1e-12)


@given(st.integers(0, 2**31))
def test_weighted_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    lines = random_lines(rng, n_max=12, weighted=True)
    eps = float(rng.uniform(0, 0.9))
    zs, vals = weighted_envelope_oracle(lines, eps, grid=201)
    assert np.max(np.abs(weighted_k_envelope(lines, eps).evaluate(zs) - vals)) <= 1e-9


def test_weighted_two_lines():
    lines = LineSet([1.0, -1.0], [0.0, 0.0], (-1.0, 1.0), weights=[0.9, 0.1])
    zs = np.linspace(-1, 1, 101)
    upper = weighted_k_envelope(lines, 0.05)
    np.testing.assert_allclose(upper.evaluate(zs), np.abs(zs), atol=1e-12)
    heavy = weighted_k_envelope(lines, 0.1)
    np.testing.assert_allclose(heavy.evaluate(zs), zs, atol=1e-12)
    for eps in (0.05, 0.1):
        _, want = weighted_envelope_oracle(lines, eps, grid=101)
        np.testing.assert_allclose(weighted_k_envelope(lines, eps).evaluate(zs), want, atol=1e-12)


def test_weighted_validation():
    lines = LineSet([1.0, -1.0], [0.0, 0.0], (-1.0, 1.0), weights=[0.5, 0.4])
    with pytest.raises(ValueError):
        weighted_k_envelope(lines, 0.1)
    with pytest.raises(ValueError):
        weighted_k_envelope(THREE, 1.0)


def test_lower_hull_example():
    hull = lower_hull([(0, 0), (1, 2), (2, 1), (3, 3)])
    np.testing.assert_allclose(hull, [(0, 0), (2, 1), (3, 3)])


def test_lower_hull_collinear():
    pts = [(z, 2 * z + 1) for z in range(6)]
    np.testing.assert_allclose(lower_hull(pts), [pts[0], pts[-1]])


def test_lower_hull_convex_chain_unchanged():
    pts = [(z, z * z) for z in np.linspace(-2, 3, 9)]
    np.testing.assert_allclose(lower_hull(pts), pts)


def test_lower_hull_errors():
    with pytest.raises(ValueError):
        lower_hull([(0, 0)])
    with pytest.raises(ValueError):
        lower_hull([(0, 0), (0, 1)])


def check_hull(pts, hull):
    slopes = np.diff(hull[:, 1]) / np.diff(hull[:, 0])
    assert np.all(np.diff(slopes) > 0)
    np.testing.assert_array_equal(hull[0], pts[0])
    np.testing.assert_array_equal(hull[-1], pts[-1])
    assert np.all(pts[:, 1] >= np.interp(pts[:, 0], hull[:, 0], hull[:, 1]) - 1e-9)
    # every hull point is an input point, in order
    idx = [int(np.flatnonzero((pts == h).all(axis=1))[0]) for h in hull]
    assert idx == sorted(idx)


@given(st.integers(0, 2**31))
def test_hull_properties(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    z = np.cumsum(rng.uniform(0.01, 1.0, n))
    pts = np.column_stack([z, rng.normal(0, 3, n)])
    check_hull(pts, lower_hull(pts))


@given(st.integers(0, 2**31))
def test_hull_of_envelope(seed):
    lines = random_lines(np.random.default_rng(seed))
    env = k_upper_envelope(lines, max(1, len(lines) // 2))
    check_hull(env.vertices, lower_hull(env.vertices))
