import zlib

import numpy as np
import pytest

from mvf import catalog
from mvf.errors import InvalidInput, Unsupported

KEYS = sorted(catalog.CATALOG)


def fd_derivatives(u, x, t, h=1e-4):
    """Central differences for u_t, gradient and Hessian at a single point."""
    n = len(x)
    f = lambda y, s: float(u(np.asarray(y)[None], s)[0])  # noqa: E731
    ut = (f(x, t + h) - f(x, t - h)) / (2 * h)
    g = np.empty(n)
    H = np.empty((n, n))
    E = np.eye(n) * h
    for i in range(n):
        g[i] = (f(x + E[i], t) - f(x - E[i], t)) / (2 * h)
        for j in range(n):
            H[i, j] = (
                f(x + E[i] + E[j], t) - f(x + E[i] - E[j], t) - f(x - E[i] + E[j], t) + f(x - E[i] - E[j], t)
            ) / (4 * h * h)
    return ut, g, H


@pytest.mark.parametrize("key", KEYS)
def test_entry_derivatives_and_pde(key):
    e = catalog.CATALOG[key]
    rng = np.random.default_rng(zlib.crc32(key.encode()))
    for n in e.dims:
        for _ in range(3):
            x = rng.uniform(-0.6, 0.6, n)
            t = rng.uniform(0.2, 1.0)
            ut, g, H = fd_derivatives(e.u, x, t)
            assert float(e.u_t(x[None], t)[0]) == pytest.approx(ut, abs=1e-6)
            assert np.allclose(e.gradient(x[None], t)[0], g, atol=1e-6)
            assert np.allclose(e.hessian(x[None], t)[0], H, atol=1e-4)
            # the PDE holds with finite-difference derivatives
            res = e.pde(x[None], t, np.array([ut]), g[None], H[None])
            assert abs(float(np.ravel(res)[0])) <= 1e-3


def test_quadratic_flag_matches_hessian():
    for e in catalog.CATALOG.values():
        n = e.dims[-1]
        x = np.random.default_rng(0).uniform(-1, 1, (4, n))
        Hs = e.hessian(x, 0.5)
        const_h = np.allclose(Hs, Hs[0])
        assert const_h == e.quadratic, e.key


def test_listing():
    text = catalog.list_catalog()
    assert "ma1-quadratic: u = |x|²/2 + t solves u_t = det(D²u)^{1/n}, f = 0" in text
    assert "pucci-quadratic" in text
    lines = text.strip().splitlines()
    assert lines == sorted(lines)
    assert text == catalog.list_catalog()


def test_lookup_errors():
    with pytest.raises(InvalidInput):
        catalog.get("nope")
    with pytest.raises(Unsupported):
        catalog.get("lambda2-saddle").operator(2)


def test_operators_build():
    for e in catalog.CATALOG.values():
        op = e.operator(e.default_n, direction_count=16, subspace_count=32)
        assert op.n == e.default_n
