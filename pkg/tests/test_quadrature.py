import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvf.errors import InvalidInput, Unsupported
from mvf.quadrature import (
    POINT_RULE,
    ellipsoid_average,
    make_ball_rule,
    make_sphere_rule,
    make_time_rule,
    spacetime_average,
)


def quad_form(rule, M):
    return np.einsum("q,qi,ij,qj->", rule.weights, rule.nodes, M, rule.nodes)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("level", [1, 2, 3])
def test_rule_invariants(n, level):
    for rule, radius_ok in ((make_ball_rule(n, level), 1.0), (make_sphere_rule(n, level), None)):
        assert abs(rule.weights.sum() - 1) <= 1e-14
        assert np.all(rule.weights > 0)
        assert np.allclose(rule.weights @ rule.nodes, 0, atol=1e-15)
        norms = np.linalg.norm(rule.nodes, axis=1)
        if radius_ok:
            assert norms.max() <= 1 + 1e-14
        else:
            assert np.allclose(norms, 1)
        # closed under y -> -y with equal weights
        for y, w in zip(rule.nodes, rule.weights):
            d = np.linalg.norm(rule.nodes + y, axis=1)
            j = np.argmin(d)
            assert d[j] < 1e-12 and abs(rule.weights[j] - w) < 1e-15


def test_node_count_grows():
    for n in (1, 2, 3):
        sizes = [len(make_ball_rule(n, L)) for L in (1, 2, 3)]
        assert sizes == sorted(sizes) and sizes[0] < sizes[-1]


def test_one_dimensional_rule():
    r = make_ball_rule(1, 1)
    assert np.allclose(np.sort(r.nodes.ravel()), [-np.sqrt(1 / 3), np.sqrt(1 / 3)])
    assert np.allclose(r.weights, 0.5)
    assert r.weights @ r.nodes[:, 0] ** 2 == pytest.approx(1 / 3)


def test_ball_level2_example():
    M = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert quad_form(make_ball_rule(2, 2), M) == pytest.approx(1.25, abs=1e-14)


def test_higher_moments_with_level():
    # E|y|^4 over the unit ball is n/(n+4); level >= 2 is exact for it
    for n in (1, 2, 3):
        r = make_ball_rule(n, 2)
        assert r.weights @ np.sum(r.nodes**2, 1) ** 2 == pytest.approx(n / (n + 4), abs=1e-14)


def test_unsupported_and_invalid():
    with pytest.raises(Unsupported):
        make_ball_rule(4)
    with pytest.raises(InvalidInput):
        make_ball_rule(2, 0)
    with pytest.raises(InvalidInput):
        make_time_rule(0)


def test_time_rule_mean_half():
    for p in (1, 2, 3, 5):
        r = make_time_rule(p)
        assert abs(r.mean - 0.5) <= 1e-14
        assert abs(r.weights.sum() - 1) <= 1e-14
    assert POINT_RULE.mean == 0.5


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1), st.sampled_from([1.0, 0.5, 0.1]))
def test_trace_identities(n, seed, eps):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, n))
    M = B + B.T

    def u(p, t):
        return np.einsum("pi,ij,pj->p", p, M, p)

    ball = make_ball_rule(n)
    sphere = make_sphere_rule(n)
    x = np.zeros(n)
    assert (n + 2) / eps**2 * ellipsoid_average(u, x, 0.0, np.eye(n), eps, ball) == pytest.approx(np.trace(M), abs=1e-10)
    assert n / eps**2 * ellipsoid_average(u, x, 0.0, np.eye(n), eps, sphere) == pytest.approx(np.trace(M), abs=1e-10)


def test_ellipsoid_average_examples():
    ball = make_ball_rule(2)
    x = np.array([0.3, -0.7])
    assert ellipsoid_average(lambda p, t: np.full(len(p), 2.5), x, 0, np.eye(2), 0.1, ball) == pytest.approx(2.5)
    val = ellipsoid_average(lambda p, t: 0.5 * np.sum(p**2, 1), np.zeros(2), 0, np.eye(2), 0.1, ball)
    assert val == pytest.approx(0.0025, abs=1e-15)
    v = np.array([1.5, -2.0])
    A = np.array([[2.0, 0.3], [0.3, 0.5]])
    assert ellipsoid_average(lambda p, t: p @ v, x, 0, A, 0.2, ball) == pytest.approx(x @ v)


def test_ellipsoid_average_batch():
    ball = make_ball_rule(3, 2)
    X = np.random.default_rng(1).normal(size=(7, 3))
    out = ellipsoid_average(lambda p, t: np.sum(p**2, 1), X, 0, np.eye(3), 0.3, ball)
    assert out.shape == (7,)
    assert np.allclose(out, np.sum(X**2, 1) + 0.09 * 3 / 5)


def test_spacetime_average_examples():
    ball = make_ball_rule(2)
    x, t, d = np.array([0.1, 0.2]), 1.0, 0.3
    assert spacetime_average(lambda p, s: s, x, t, np.eye(2), 0.1, d, ball) == pytest.approx(t - d / 2)
    assert spacetime_average(lambda p, s: np.full(len(p), 4.0), x, t, np.eye(2), 0.1, d, ball) == pytest.approx(4.0)
    n, eps = 2, 0.1

    def u(p, s):
        return 0.5 * np.sum((p - x) ** 2, 1) + s

    w = n * eps**2 / (n + 2)
    assert spacetime_average(u, x, t, np.eye(2), eps, w, ball) == pytest.approx(t, abs=1e-15)
    with pytest.raises(InvalidInput):
        spacetime_average(u, x, t, np.eye(2), eps, 0.0, ball)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1), st.floats(0.01, 1.0))
def test_affine_reproduction(n, seed, window):
    rng = np.random.default_rng(seed)
    a, v, c = rng.normal(), rng.normal(size=n), rng.normal()
    x, t = rng.normal(size=n), rng.normal()

    def u(p, s):
        return a + (p - x) @ v + c * (s - t)

    got = spacetime_average(u, x, t, np.eye(n) * 0.7, 0.3, window, make_ball_rule(n), make_time_rule(2))
    assert got == pytest.approx(a - c * window / 2, abs=1e-12)
