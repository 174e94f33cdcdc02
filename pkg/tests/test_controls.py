import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvf import linalg
from mvf.controls import (
    PhiSchedule,
    directions,
    pucci_family,
    rank_one_family,
    rotations,
    sample_det1,
    sample_det1_times_b,
    supinf_family_for_lambda_k,
)
from mvf.errors import InvalidInput


def traces(fam, M):
    return np.einsum("kji,jl,kli->k", fam.matrices, M, fam.matrices)


def test_phi_schedule():
    phi = PhiSchedule()
    assert phi(0.01) == pytest.approx(10.0)
    eps = np.array([1e-2, 1e-4, 1e-6])
    assert np.all(np.diff([phi(e) for e in eps]) > 0)
    assert np.all(np.diff([e * phi(e) for e in eps]) < 0)
    with pytest.raises(InvalidInput):
        PhiSchedule(1.0)


@pytest.mark.parametrize("n", [2, 3])
def test_rotations_orthogonal(n):
    R = rotations(n, 20)
    assert np.allclose(R[0], np.eye(n))
    assert np.allclose(np.einsum("kji,kjl->kil", R, R), np.eye(n), atol=1e-12)
    assert np.allclose(np.linalg.det(R), 1)


def test_directions_unit_and_nested():
    for n in (2, 3):
        D = directions(n, 64)
        assert np.allclose(np.linalg.norm(D, axis=1), 1)
        assert np.allclose(directions(n, 128)[:64] if n == 3 else directions(n, 128)[::2], D)


def test_det1_examples():
    fam = sample_det1(2, 1, 1, 1)
    assert len(fam) == 1 and np.allclose(fam.matrices[0], np.eye(2))
    fam = sample_det1(2, 4, 8, 16)
    assert len(fam) == 129
    assert np.abs(np.linalg.det(fam.matrices) - 1).max() <= 1e-10
    assert np.allclose(fam.matrices, np.swapaxes(fam.matrices, 1, 2))
    assert np.linalg.eigvalsh(fam.matrices).min() > 0
    with pytest.raises(InvalidInput):
        sample_det1(2, 0.5)


def test_det1_converges_to_closed_form():
    M = np.diag([1.0, 4.0])
    target = linalg.inf_trace_det1(M).value
    mins = [traces(sample_det1(2, np.sqrt(2), c, c), M).min() for c in (2, 4, 8, 16)]
    assert all(a >= b - 1e-12 for a, b in zip(mins, mins[1:]))
    assert mins[-1] == pytest.approx(target, rel=0.02)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_det1_feasibility(n):
    fam = sample_det1(n, 3.0, 16, 16)
    assert np.abs(np.linalg.det(fam.matrices) - 1).max() <= 1e-10
    assert np.linalg.eigvalsh(fam.matrices).max() <= 3.0 * (1 + 1e-12)


def test_det1_times_b():
    fam = sample_det1_times_b(2, 1, 4, 4, 4)
    assert len(fam) == 1 and fam.b[0] == 1 and np.allclose(fam.matrices[0], np.eye(2))
    fam = sample_det1_times_b(2, 4, 16, 16, 8)
    assert np.abs(fam.b * np.linalg.det(fam.matrices) - 1).max() <= 1e-10
    assert np.linalg.eigvalsh(fam.matrices).max() <= 4 * (1 + 1e-12)
    assert fam.b.max() <= 4 * (1 + 1e-12)
    best = np.min(fam.b**2 + traces(fam, np.eye(2)))
    assert best == pytest.approx(linalg.inf_trace_block(1.0, np.eye(2), 4).value, rel=0.02)


def test_pucci_family():
    fam = pucci_family(2, 1, 4, 16)
    lam = np.linalg.eigvalsh(fam.matrices)
    assert lam.min() >= 1 - 1e-12 and lam.max() <= 2 + 1e-12
    M = np.diag([1.0, -1.0])
    assert traces(fam, M).min() == pytest.approx(1 * 1 + 4 * (-1), rel=0.02)
    with pytest.raises(InvalidInput):
        pucci_family(2, 2, 2)
    with pytest.raises(InvalidInput):
        pucci_family(2, 3, 2)


def test_rank_one():
    fam = rank_one_family(2, 64)
    assert np.allclose(fam.matrices @ fam.matrices, fam.matrices)  # projections
    assert np.allclose(np.trace(fam.matrices, axis1=1, axis2=2), 1)
    assert traces(fam, np.diag([2.0, 5.0])).min() == pytest.approx(2.0, rel=0.01)
    V = np.array([[0.0], [1.0], [0.0]])
    sub = rank_one_family(3, 8, V)
    assert np.allclose(sub.matrices, np.diag([0.0, 1.0, 0.0]))


def test_supinf_examples():
    fam = supinf_family_for_lambda_k(2, 1, 16, 64)
    assert fam.group_count == 1
    M = np.diag([4.0, 1.0, 7.0])
    top = supinf_family_for_lambda_k(3, 3)
    assert top.reduce(traces(top, M))[0] == pytest.approx(7.0, rel=0.01)
    mid = supinf_family_for_lambda_k(3, 2)
    assert mid.reduce(traces(mid, np.diag([-2.0, 2.0, 2.0])))[0] == pytest.approx(2.0, rel=0.02)
    with pytest.raises(InvalidInput):
        supinf_family_for_lambda_k(3, 4)
    with pytest.raises(InvalidInput):
        supinf_family_for_lambda_k(3, 0)


def test_supinf_reduce_ties_first():
    fam = supinf_family_for_lambda_k(2, 2, 4, 4)
    vals = np.zeros(len(fam))
    best, outer, inner = fam.reduce(vals)
    assert best == 0 and outer == 0 and inner == 0


def test_courant_fischer_random():
    rng = np.random.default_rng(11)
    fams = {k: supinf_family_for_lambda_k(3, k) for k in (1, 2, 3)}
    for _ in range(50):
        Q = np.linalg.qr(rng.normal(size=(3, 3)))[0]
        lam = rng.uniform(-3, 3, 3)
        M = Q @ np.diag(lam) @ Q.T
        for k, fam in fams.items():
            got = fam.reduce(traces(fam, M))[0]
            exact = np.sort(lam)[k - 1]
            assert abs(got - exact) <= 0.02 * abs(exact) + 1e-3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_refinement_monotone(seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(3, 3))
    M = B @ B.T + 0.1 * np.eye(3)
    mins = [traces(sample_det1(3, 4.0, c, c), M).min() for c in (4, 8, 16)]
    assert mins[0] >= mins[1] - 1e-12 >= mins[2] - 2e-12
    M2 = B[:2, :2] + B[:2, :2].T
    mins = [traces(pucci_family(2, 0.5, 3.0, c, c), M2).min() for c in (4, 8, 16)]
    assert mins[0] >= mins[1] - 1e-12 >= mins[2] - 2e-12
    mins = [traces(rank_one_family(3, c), M).min() for c in (16, 32, 64)]
    assert mins[0] >= mins[1] - 1e-12 >= mins[2] - 2e-12
