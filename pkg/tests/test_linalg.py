import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvf import linalg
from mvf.errors import InvalidInput, NotPositiveDefinite
from mvf.linalg import NEG_INFINITY, SymMatrix


def random_spd(rng, n, lo=0.1, hi=10.0):
    Q = np.linalg.qr(rng.normal(size=(n, n)))[0]
    return Q @ np.diag(rng.uniform(lo, hi, n)) @ Q.T


def test_symmatrix_roundtrip_and_symmetry():
    a = np.array([[2.0, 1.0], [1.0, 3.0]])
    S = SymMatrix.from_dense(a)
    assert S.entries.size == 3
    assert np.array_equal(S.dense(), a)
    assert S == SymMatrix.from_dense(a)
    with pytest.raises(InvalidInput):
        SymMatrix.from_dense([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(InvalidInput):
        SymMatrix(2, [1.0, np.nan, 1.0])


def test_eigendecompose_examples():
    lam, Q = linalg.eigendecompose(np.diag([3.0, 1.0]))
    assert np.allclose(lam, [1, 3])
    assert np.allclose(np.abs(Q), [[0, 1], [1, 0]])
    lam, Q = linalg.eigendecompose([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(lam, [-1, 1])
    assert abs(abs(Q[0, 0]) - 1 / math.sqrt(2)) < 1e-12
    rng = np.random.default_rng(0)
    B = rng.normal(size=(3, 3))
    M = B + B.T
    lam, Q = linalg.eigendecompose(M)
    assert np.abs(Q @ np.diag(lam) @ Q.T - M).max() <= 1e-12
    assert np.abs(Q.T @ Q - np.eye(3)).max() <= 1e-12
    assert np.all(np.diff(lam) >= 0)


def test_eigendecompose_rejects_nonfinite():
    with pytest.raises(InvalidInput):
        linalg.eigendecompose([[np.inf, 0.0], [0.0, 1.0]])


def test_inf_trace_det1_examples():
    r = linalg.inf_trace_det1(np.eye(2))
    assert r.value == pytest.approx(2.0)
    assert np.allclose(r.optimizer, np.eye(2))
    r = linalg.inf_trace_det1(np.diag([1.0, 4.0]))
    assert r.value == pytest.approx(4.0)
    assert np.allclose(r.optimizer, np.diag([math.sqrt(2), math.sqrt(2) / 2]))
    r = linalg.inf_trace_det1(np.diag([1.0, -1.0]))
    assert r.value is NEG_INFINITY and r.optimizer is None and r.unbounded


def test_inf_trace_det1_grid_oracle_diag14():
    # diag(s, 1/s) over s in (0, 4]
    s = np.linspace(1e-3, 4, 400001)
    assert np.min(s**2 + 4 / s**2) == pytest.approx(4.0, abs=1e-6)
    assert s[np.argmin(s**2 + 4 / s**2)] == pytest.approx(math.sqrt(2), abs=1e-4)


def test_inf_trace_det1_psd_singular_gives_zero():
    r = linalg.inf_trace_det1(np.diag([0.0, 1.0]))
    assert r.value == 0.0 and r.optimizer is None


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 3), st.integers(0, 2**31 - 1), st.floats(0.1, 20))
def test_scaling_law(n, seed, c):
    M = random_spd(np.random.default_rng(seed), n)
    a = linalg.inf_trace_det1(c * M).value
    b = linalg.inf_trace_det1(M).value
    assert a == pytest.approx(c * b, rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 3), st.integers(0, 2**31 - 1))
def test_optimizer_feasibility(n, seed):
    M = random_spd(np.random.default_rng(seed), n)
    r = linalg.inf_trace_det1(M)
    A = r.optimizer
    assert abs(np.linalg.det(A) - 1) <= 1e-10
    assert abs(np.trace(A.T @ M @ A) - n * np.linalg.det(M) ** (1 / n)) <= 1e-10 * (1 + r.value)


def test_theta0_examples():
    assert linalg.theta0(np.eye(2)) == pytest.approx(1.0)
    assert linalg.theta0(np.diag([1.0, 4.0])) == pytest.approx(math.sqrt(2))
    assert linalg.theta0(np.diag([4.0, 4.0])) == pytest.approx(1.0)
    with pytest.raises(NotPositiveDefinite):
        linalg.theta0(np.diag([0.0, 1.0]))


def test_theta0_marks_cap_sensitivity():
    M = np.diag([1.0, 4.0])
    t0 = linalg.theta0(M)
    assert not linalg.inf_trace_det1_capped(M, t0 * 1.001).truncated
    assert linalg.inf_trace_det1_capped(M, t0 * 0.999).value > 4.0


def test_capped_examples():
    r = linalg.inf_trace_det1_capped(np.eye(2), 10)
    assert r.value == pytest.approx(2.0) and not r.truncated
    # dense grid over diag(s, 1/s) with 1/1.1 <= s <= 1.1
    M = np.diag([1.0, 4.0])
    s = np.linspace(1 / 1.1, 1.1, 200001)
    r = linalg.inf_trace_det1_capped(M, 1.1)
    assert r.truncated
    assert r.value == pytest.approx(np.min(s * s + 4 / (s * s)), abs=1e-9)
    with pytest.raises(InvalidInput):
        linalg.inf_trace_det1_capped(M, 0.0)


def test_capped_indefinite_matches_rotation_search():
    M = np.diag([1.0, -1.0])
    r = linalg.inf_trace_det1_capped(M, 2.0)
    assert math.isfinite(r.value)
    ang = np.linspace(0, np.pi, 721)
    s = np.exp(np.linspace(-math.log(2), math.log(2), 721))
    c, sn = np.cos(ang)[:, None], np.sin(ang)[:, None]
    # trace(R D R^t M R D R^t) with D = diag(s, 1/s)
    a11 = (c * c * s + sn * sn / s)
    a22 = (sn * sn * s + c * c / s)
    a12 = c * sn * (s - 1 / s)
    brute = np.min(a11**2 + a12**2 - (a22**2 + a12**2))
    assert r.value == pytest.approx(brute, abs=1e-6)
    assert r.value == pytest.approx(-3.75, abs=1e-9)


def test_capped_below_one_is_infeasible():
    r = linalg.inf_trace_det1_capped(np.diag([1.0, 4.0]), 0.9)
    assert r.value == math.inf and r.truncated


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 3), st.integers(0, 2**31 - 1))
def test_cap_monotone_and_exact_above_theta0(n, seed):
    M = random_spd(np.random.default_rng(seed), n)
    t0 = linalg.theta0(M)
    free = linalg.inf_trace_det1(M).value
    caps = np.linspace(1.0, 2 * t0, 12)
    vals = [linalg.inf_trace_det1_capped(M, c).value for c in caps]
    assert all(a >= b - 1e-9 for a, b in zip(vals, vals[1:]))
    assert linalg.inf_trace_det1_capped(M, t0 * (1 + 1e-6)).value == pytest.approx(free, abs=1e-10)


def test_capped_optimizer_feasible_when_truncated():
    M = np.diag([1.0, 2.0, 9.0])
    r = linalg.inf_trace_det1_capped(M, 1.2)
    A = r.optimizer
    assert abs(np.linalg.det(A) - 1) < 1e-9
    assert np.linalg.eigvalsh(A).max() <= 1.2 + 1e-9
    assert np.trace(A @ M @ A) == pytest.approx(r.value, abs=1e-9)


def test_det_root_perturbed_examples():
    assert linalg.det_root_perturbed(np.eye(2), 0.0) == pytest.approx(1.0)
    for eta in (1e-2, 1e-4, 1e-6):
        assert linalg.det_root_perturbed(np.diag([0.0, 1.0]), eta) == pytest.approx(math.sqrt(eta * (1 + eta)))
    # sqrt(1.01 * 4.01)
    assert linalg.det_root_perturbed(np.diag([1.0, 4.0]), 0.01) == pytest.approx(2.0124860, abs=1e-7)
    with pytest.raises(InvalidInput):
        linalg.det_root_perturbed(np.diag([1.0, 2.0]), -2.0)


def test_det_root_lipschitz_bound_nondegenerate():
    rng = np.random.default_rng(4)
    for _ in range(20):
        M = random_spd(rng, 3)
        C = linalg.det_root_perturbation_constant(M, 0.1)
        base = linalg.det_root(M)
        for eta in (1e-3, 1e-2, 0.1):
            assert abs(linalg.det_root_perturbed(M, eta) - base) <= C * eta + 1e-14


def test_det_root_degenerate_one_sided():
    M = np.diag([0.0, 1.0])
    assert linalg.det_root_perturbation_constant(M, 0.1) == math.inf
    vals = [linalg.det_root_perturbed(M, e) for e in (1e-1, 1e-2, 1e-3, 1e-4)]
    # only the lower bound survives: perturbed >= det root and -> det root
    assert all(v >= linalg.det_root(M) for v in vals)
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1.1e-2


def test_elementary_symmetric():
    assert np.allclose(linalg.elementary_symmetric([1, 2, 3]), [1, 6, 11, 6])


def test_inf_trace_block_examples():
    assert linalg.inf_trace_block(1.0, np.eye(2), 100).value == pytest.approx(3.0)
    assert linalg.inf_trace_block(4.0, np.diag([1.0, 4.0]), 100).value == pytest.approx(3 * 16 ** (1 / 3))
    vals = [linalg.inf_trace_block(0.0, np.eye(2), th).value for th in (10, 100, 1000)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    # brute force over b in [1/theta, theta] with A = b^{-1/2} I
    for th, v in zip((10, 100, 1000), vals):
        b = np.exp(np.linspace(-math.log(th), math.log(th), 20001))
        assert v == pytest.approx(np.min(2 / b), rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 3), st.integers(0, 2**31 - 1), st.floats(-5, 5), st.floats(0.5, 30))
def test_block_consistency(n, seed, m, theta):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, n))
    M = B + B.T
    block = np.zeros((n + 1, n + 1))
    block[0, 0] = m
    block[1:, 1:] = M
    a = linalg.inf_trace_block(m, M, theta).value
    b = linalg.inf_trace_det1_capped(block, theta).value
    assert a == pytest.approx(b, abs=1e-10)
