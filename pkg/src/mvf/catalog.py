"""Built-in classical solutions, payoffs and operator presets, keyed by name.

Each entry bundles an exact solution ``u(x, t)``, its time derivative and
Hessian in closed form, the residual of the equation it solves (used by the
tests with finite-difference derivatives) and a factory for the matching
``OperatorSpec``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .controls import PhiSchedule, pucci_family, rank_one_family, supinf_family_for_lambda_k
from .errors import InvalidInput, Unsupported
from .operators import OperatorSpec

__all__ = ["CatalogEntry", "CATALOG", "get", "list_catalog"]

ANISO = np.array([1.0, 4.0, 2.0])
THETA, BIG_THETA = 1.0, 4.0
P_DEFAULT = 4.0


def _sq(x):
    return np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)


def _t(x, t):
    return np.broadcast_to(np.asarray(t, dtype=float), np.shape(x)[:-1])


def _eye(x, scale=1.0):
    n = np.shape(x)[-1]
    return np.broadcast_to(scale * np.eye(n), np.shape(x)[:-1] + (n, n)).copy()


def _det_root(H):
    n = H.shape[-1]
    return np.clip(np.linalg.det(H), 0, None) ** (1.0 / n)


@dataclass(frozen=True)
class CatalogEntry:
    """A named classical solution together with its operator preset.

    ``pde(x, t, u_t, grad, hess)`` returns the equation residual at given
    derivatives; ``dims`` lists the supported space dimensions. ``gradient``
    is the spatial gradient in closed form.
    """

    key: str
    description: str
    cls: str
    u: Callable
    u_t: Callable
    hessian: Callable
    pde: Callable
    dims: tuple = (1, 2, 3)
    rhs: Callable | float | None = None
    quadratic: bool = True
    default_n: int = 2
    preset: dict = field(default_factory=dict)
    gradient: Callable | None = None

    def check_dim(self, n: int):
        if n not in self.dims:
            raise Unsupported(f"{self.key} is defined for n in {self.dims}, got n={n}")

    def operator(self, n: int | None = None, variant="point", **counts) -> OperatorSpec:
        """The operator whose mean value formula this solution satisfies.

        ``counts`` override family sizes (``rotation_count``, ``stretch_count``,
        ``b_count``, ``direction_count``, ``subspace_count``, ``phi_exponent``).
        """
        n = self.default_n if n is None else n
        self.check_dim(n)
        counts = dict(self.preset, **counts)
        phi = PhiSchedule(counts.pop("phi_exponent", 0.5))
        sub = counts.pop("subspace_count", 8192)
        dirs = counts.pop("direction_count", 64)
        if self.cls in ("MA1", "MA2"):
            return OperatorSpec(self.cls, n, variant, phi, self.rhs, **counts)
        if self.cls == "Heat":
            return OperatorSpec("Heat", n, variant, **counts)
        if self.cls == "PLaplacian":
            return OperatorSpec("PLaplacian", n, variant, p=P_DEFAULT, direction_count=dirs, **counts)
        kind = counts.pop("family")
        if kind == "pucci":
            fam = pucci_family(n, THETA, BIG_THETA, counts.pop("rotation_count", 16), counts.pop("stretch_count", 0))
            return OperatorSpec("Inf", n, variant, fam, **counts)
        if kind == "lambda1":
            return OperatorSpec("Inf", n, variant, rank_one_family(n, dirs), **counts)
        k = int(kind[-1])
        fam = supinf_family_for_lambda_k(n, k, sub, dirs)
        return OperatorSpec("SupInf", n, variant, fam, **counts)


def _ma1_pde(f):
    return lambda x, t, ut, g, H: ut - _det_root(H) - f(x, t)


def _zero(x, t):
    return np.zeros(np.shape(x)[:-1])


def _quartic_hess(x, t):
    x = np.asarray(x, dtype=float)
    return _eye(x) * (1 + 0.4 * _sq(x))[..., None, None] + 0.8 * np.einsum("...i,...j->...ij", x, x)


def _quartic_f(x, t):
    return 1.0 - _det_root(_quartic_hess(x, t))


def _aniso(x):
    return ANISO[: np.shape(x)[-1]]


def _plap_c(n, p=P_DEFAULT):
    return 2 * (n + p - 2) / (n + p)


def _plap_pde(x, t, ut, g, H):
    n = np.shape(x)[-1]
    gg = np.sum(g * g, axis=-1)
    inf_lap = np.einsum("...i,...ij,...j->...", g, H, g) / np.where(gg > 0, gg, 1.0)
    return (n + P_DEFAULT) * ut - np.trace(H, axis1=-2, axis2=-1) - (P_DEFAULT - 2) * inf_lap


def _cosine_hess(x, t):
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    c, s = np.cos(x), np.sin(x)
    H = np.empty(x.shape + (n,))
    for i in range(n):
        for j in range(n):
            f = np.prod(np.delete(c, [i, j], axis=-1), axis=-1)
            H[..., i, j] = -np.prod(c, -1) if i == j else s[..., i] * s[..., j] * f
    return np.exp(-n * _t(x, t))[..., None, None] * H


def _cosine_grad(x, t):
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    c, s = np.cos(x), np.sin(x)
    g = np.empty(x.shape)
    for i in range(n):
        g[..., i] = -s[..., i] * np.prod(np.delete(c, i, axis=-1), axis=-1)
    return np.exp(-n * _t(x, t))[..., None] * g


def _pucci_minus(H):
    lam = np.linalg.eigvalsh(H)
    return THETA * np.clip(lam, 0, None).sum(-1) + BIG_THETA * np.clip(lam, None, 0).sum(-1)


_ENTRIES = [
    CatalogEntry(
        "ma1-quadratic",
        "u = |x|²/2 + t solves u_t = det(D²u)^{1/n}, f = 0",
        "MA1",
        u=lambda x, t: 0.5 * _sq(x) + _t(x, t),
        u_t=lambda x, t: np.ones(np.shape(x)[:-1]),
        hessian=lambda x, t: _eye(x),
        pde=_ma1_pde(_zero),
        rhs=0.0,
        gradient=lambda x, t: np.array(x, dtype=float),
    ),
    CatalogEntry(
        "ma1-aniso",
        "u = Σ c_i x_i²/2 + (Π c_i)^{1/n} t with c = (1, 4, 2) solves u_t = det(D²u)^{1/n}, f = 0",
        "MA1",
        u=lambda x, t: 0.5 * np.sum(_aniso(x) * np.asarray(x) ** 2, -1)
        + np.prod(_aniso(x)) ** (1 / np.shape(x)[-1]) * _t(x, t),
        u_t=lambda x, t: np.full(np.shape(x)[:-1], np.prod(_aniso(x)) ** (1 / np.shape(x)[-1])),
        hessian=lambda x, t: np.broadcast_to(np.diag(_aniso(x)), np.shape(x) + (np.shape(x)[-1],)).copy(),
        pde=_ma1_pde(_zero),
        rhs=0.0,
        gradient=lambda x, t: _aniso(x) * np.asarray(x, dtype=float),
    ),
    CatalogEntry(
        "ma1-forced",
        "u = |x|² + t solves u_t = det(D²u)^{1/n} + f, f = -1",
        "MA1",
        u=lambda x, t: _sq(x) + _t(x, t),
        u_t=lambda x, t: np.ones(np.shape(x)[:-1]),
        hessian=lambda x, t: _eye(x, 2.0),
        pde=_ma1_pde(lambda x, t: -np.ones(np.shape(x)[:-1])),
        rhs=-1.0,
        gradient=lambda x, t: 2.0 * np.asarray(x, dtype=float),
    ),
    CatalogEntry(
        "ma1-quartic",
        "u = |x|²/2 + t + |x|⁴/10 solves u_t = det(D²u)^{1/n} + f, f = 1 - det(D²u)^{1/n}",
        "MA1",
        u=lambda x, t: 0.5 * _sq(x) + _t(x, t) + 0.1 * _sq(x) ** 2,
        u_t=lambda x, t: np.ones(np.shape(x)[:-1]),
        hessian=_quartic_hess,
        pde=_ma1_pde(_quartic_f),
        rhs=_quartic_f,
        quadratic=False,
        gradient=lambda x, t: np.asarray(x, dtype=float) * (1 + 0.4 * _sq(x))[..., None],
    ),
    CatalogEntry(
        "ma2-quadratic",
        "u = |x|²/2 - t solves -u_t det(D²u) = f, f = 1",
        "MA2",
        u=lambda x, t: 0.5 * _sq(x) - _t(x, t),
        u_t=lambda x, t: -np.ones(np.shape(x)[:-1]),
        hessian=lambda x, t: _eye(x),
        pde=lambda x, t, ut, g, H: -ut * np.linalg.det(H) - 1.0,
        rhs=1.0,
        gradient=lambda x, t: np.array(x, dtype=float),
    ),
    CatalogEntry(
        "ma2-static",
        "u = |x|²/2 solves -u_t det(D²u) = f, f = 0",
        "MA2",
        u=lambda x, t: 0.5 * _sq(x) + 0 * _t(x, t),
        u_t=lambda x, t: np.zeros(np.shape(x)[:-1]),
        hessian=lambda x, t: _eye(x),
        pde=lambda x, t, ut, g, H: -ut * np.linalg.det(H),
        rhs=0.0,
        gradient=lambda x, t: np.array(x, dtype=float),
    ),
    CatalogEntry(
        "heat-quadratic",
        "u = |x|² + 2nt solves u_t = Δu",
        "Heat",
        u=lambda x, t: _sq(x) + 2 * np.shape(x)[-1] * _t(x, t),
        u_t=lambda x, t: np.full(np.shape(x)[:-1], 2.0 * np.shape(x)[-1]),
        hessian=lambda x, t: _eye(x, 2.0),
        pde=lambda x, t, ut, g, H: ut - np.trace(H, axis1=-2, axis2=-1),
        gradient=lambda x, t: 2.0 * np.asarray(x, dtype=float),
    ),
    CatalogEntry(
        "heat-cosine",
        "u = exp(-nt) Π cos(x_i) solves u_t = Δu",
        "Heat",
        u=lambda x, t: np.exp(-np.shape(x)[-1] * _t(x, t)) * np.prod(np.cos(x), -1),
        u_t=lambda x, t: -np.shape(x)[-1] * np.exp(-np.shape(x)[-1] * _t(x, t)) * np.prod(np.cos(x), -1),
        hessian=_cosine_hess,
        pde=lambda x, t, ut, g, H: ut - np.trace(H, axis1=-2, axis2=-1),
        quadratic=False,
        gradient=_cosine_grad,
    ),
    CatalogEntry(
        "pucci-quadratic",
        "u = |x|² + 2nθt solves u_t = θ Σ λ_i⁺(D²u) + Θ Σ λ_i⁻(D²u), θ = 1, Θ = 4",
        "Inf",
        u=lambda x, t: _sq(x) + 2 * np.shape(x)[-1] * THETA * _t(x, t),
        u_t=lambda x, t: np.full(np.shape(x)[:-1], 2.0 * np.shape(x)[-1] * THETA),
        hessian=lambda x, t: _eye(x, 2.0),
        pde=lambda x, t, ut, g, H: ut - _pucci_minus(H),
        preset=dict(family="pucci"),
        gradient=lambda x, t: 2.0 * np.asarray(x, dtype=float),
    ),
    CatalogEntry(
        "pucci-saddle",
        "u = x_1² - x_2² - 6t solves u_t = θ Σ λ_i⁺(D²u) + Θ Σ λ_i⁻(D²u), θ = 1, Θ = 4",
        "Inf",
        u=lambda x, t: np.asarray(x)[..., 0] ** 2 - np.asarray(x)[..., 1] ** 2 - 6 * _t(x, t),
        u_t=lambda x, t: np.full(np.shape(x)[:-1], -6.0),
        hessian=lambda x, t: np.broadcast_to(np.diag([2.0, -2.0]), np.shape(x) + (2,)).copy(),
        pde=lambda x, t, ut, g, H: ut - _pucci_minus(H),
        dims=(2,),
        preset=dict(family="pucci"),
        gradient=lambda x, t: np.asarray(x, dtype=float) * [2.0, -2.0],
    ),
    CatalogEntry(
        "lambda1-saddle",
        "u = x_1² - x_2² - 2t solves u_t = λ_1(D²u)",
        "Inf",
        u=lambda x, t: np.asarray(x)[..., 0] ** 2 - np.asarray(x)[..., 1] ** 2 - 2 * _t(x, t),
        u_t=lambda x, t: np.full(np.shape(x)[:-1], -2.0),
        hessian=lambda x, t: np.broadcast_to(np.diag([2.0, -2.0]), np.shape(x) + (2,)).copy(),
        pde=lambda x, t, ut, g, H: ut - np.linalg.eigvalsh(H)[..., 0],
        dims=(2,),
        preset=dict(family="lambda1"),
        gradient=lambda x, t: np.asarray(x, dtype=float) * [2.0, -2.0],
    ),
    CatalogEntry(
        "lambda2-saddle",
        "u = 2t + x_1² + x_2² - x_3² solves u_t = λ_2(D²u)",
        "SupInf",
        u=lambda x, t: 2 * _t(x, t) + np.asarray(x)[..., 0] ** 2 + np.asarray(x)[..., 1] ** 2 - np.asarray(x)[..., 2] ** 2,
        u_t=lambda x, t: np.full(np.shape(x)[:-1], 2.0),
        hessian=lambda x, t: np.broadcast_to(np.diag([2.0, 2.0, -2.0]), np.shape(x) + (3,)).copy(),
        pde=lambda x, t, ut, g, H: ut - np.linalg.eigvalsh(H)[..., 1],
        dims=(3,),
        default_n=3,
        preset=dict(family="lambda2"),
        gradient=lambda x, t: np.asarray(x, dtype=float) * [2.0, 2.0, -2.0],
    ),
    CatalogEntry(
        "plaplacian-quadratic",
        "u = |x|² + ct with c = 2(n + p - 2)/(n + p), p = 4, solves (n + p) u_t = Δu + (p - 2) Δ_∞u",
        "PLaplacian",
        u=lambda x, t: _sq(x) + _plap_c(np.shape(x)[-1]) * _t(x, t),
        u_t=lambda x, t: np.full(np.shape(x)[:-1], _plap_c(np.shape(x)[-1])),
        hessian=lambda x, t: _eye(x, 2.0),
        pde=_plap_pde,
        gradient=lambda x, t: 2.0 * np.asarray(x, dtype=float),
    ),
]

CATALOG = {e.key: e for e in _ENTRIES}


def get(key: str) -> CatalogEntry:
    try:
        return CATALOG[key]
    except KeyError:
        raise InvalidInput(f"unknown catalog key {key!r}; known: {', '.join(sorted(CATALOG))}") from None


def list_catalog() -> str:
    """Sorted listing, one ``key: description`` line per entry."""
    return "\n".join(f"{k}: {CATALOG[k].description}" for k in sorted(CATALOG)) + "\n"
