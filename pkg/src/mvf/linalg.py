"""Symmetric-matrix helpers and closed-form constrained trace infima.

The central identity is

    inf_{det A = 1} trace(A^t M A) = n det(M)^{1/n}      (M >= 0)

together with its capped version (``A <= theta I``) and the block version
used for the Gauss-curvature flow, where the time derivative occupies an
extra diagonal slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InvalidInput, NotPositiveDefinite

__all__ = [
    "NEG_INFINITY",
    "SymMatrix",
    "InfimumResult",
    "as_dense",
    "tol_psd",
    "eigendecompose",
    "det_root",
    "inf_trace_det1",
    "inf_trace_det1_capped",
    "theta0",
    "det_root_perturbed",
    "elementary_symmetric",
    "det_root_perturbation_constant",
    "inf_trace_block",
    "ball_quadratic_min",
]


class _NegInfinity:
    """Marker for an infimum equal to minus infinity.

    Deliberately not a float: arithmetic on it raises, so an unbounded
    infimum cannot leak silently into an average.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NEG_INFINITY"

    def __reduce__(self):
        return (_NegInfinity, ())


NEG_INFINITY = _NegInfinity()


class SymMatrix:
    """Dense symmetric matrix stored as its packed upper triangle."""

    __slots__ = ("dim", "entries")

    def __init__(self, dim: int, entries):
        dim = int(dim)
        entries = np.asarray(entries, dtype=float).ravel()
        if dim < 1 or entries.size != dim * (dim + 1) // 2:
            raise InvalidInput(f"need {dim * (dim + 1) // 2} packed entries for dim={dim}")
        if not np.all(np.isfinite(entries)):
            raise InvalidInput("non-finite matrix entry")
        self.dim = dim
        self.entries = entries

    @classmethod
    def from_dense(cls, a, atol: float = 1e-10) -> "SymMatrix":
        a = np.asarray(a, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInput(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidInput("non-finite matrix entry")
        scale = 1.0 + np.abs(a).max()
        if np.abs(a - a.T).max() > atol * scale:
            raise InvalidInput("matrix is not symmetric")
        iu = np.triu_indices(a.shape[0])
        return cls(a.shape[0], 0.5 * (a + a.T)[iu])

    def dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        iu = np.triu_indices(self.dim)
        out[iu] = self.entries
        out.T[iu] = self.entries
        return out

    def __array__(self, dtype=None, copy=None):
        d = self.dense()
        return d if dtype is None else d.astype(dtype)

    def __eq__(self, other):
        return (
            isinstance(other, SymMatrix)
            and other.dim == self.dim
            and np.array_equal(other.entries, self.entries)
        )

    def __repr__(self):
        return f"SymMatrix({self.dense().tolist()!r})"


MatrixLike = Union[SymMatrix, np.ndarray, list]


def as_dense(M: MatrixLike) -> np.ndarray:
    """Validate ``M`` and return it as a symmetric float array."""
    if isinstance(M, SymMatrix):
        return M.dense()
    return SymMatrix.from_dense(M).dense()


@dataclass(frozen=True)
class InfimumResult:
    """Outcome of a constrained trace minimisation.

    ``value`` is a float, or :data:`NEG_INFINITY` when the infimum is
    unbounded below. ``truncated`` records whether the cap ``A <= theta I``
    changed the answer compared with the uncapped problem.
    """

    value: object
    optimizer: np.ndarray | None = None
    truncated: bool = False

    @property
    def unbounded(self) -> bool:
        return self.value is NEG_INFINITY


def tol_psd(M: MatrixLike) -> float:
    """Scale-relative threshold separating 'zero' from negative eigenvalues."""
    a = as_dense(M)
    return 1e-10 * (1.0 + np.abs(a).sum(axis=1).max())


def eigendecompose(M: MatrixLike) -> tuple[np.ndarray, np.ndarray]:
    """Return ascending eigenvalues and an orthonormal eigenvector frame.

    Columns of the frame are the eigenvectors, so ``M = Q diag(lam) Q^t``.
    """
    a = as_dense(M)
    lam, Q = np.linalg.eigh(a)
    return lam, Q


def _det_root_from_eigs(lam: np.ndarray, tol: float) -> float:
    lam = np.where(lam <= tol, 0.0, lam)
    if np.any(lam <= 0.0):
        return 0.0
    # mean of logs avoids under/overflow of the raw product
    return float(np.exp(np.mean(np.log(lam))))


def det_root(M: MatrixLike) -> float:
    """``det(M)^{1/n}`` for ``M >= 0`` (eigenvalues near zero count as zero)."""
    lam, _ = eigendecompose(M)
    tol = tol_psd(M)
    if lam[0] < -tol:
        raise InvalidInput("det root of a matrix with a negative eigenvalue")
    return _det_root_from_eigs(lam, tol)


def inf_trace_det1(M: MatrixLike) -> InfimumResult:
    """Infimum of ``trace(A^t M A)`` over ``det A = 1``.

    For ``M >= 0`` the value is ``n det(M)^{1/n}``; when ``M > 0`` it is
    attained at ``det(M)^{1/(2n)} M^{-1/2}``. A negative eigenvalue makes the
    infimum :data:`NEG_INFINITY`.
    """
    lam, Q = eigendecompose(M)
    n = lam.size
    tol = tol_psd(M)
    if lam[0] < -tol:
        return InfimumResult(NEG_INFINITY, None, False)
    root = _det_root_from_eigs(lam, tol)
    value = n * root
    optimizer = None
    if lam[0] > tol:
        stretch = math.sqrt(root) / np.sqrt(lam)
        optimizer = (Q * stretch) @ Q.T
    return InfimumResult(value, optimizer, False)


def theta0(M: MatrixLike) -> float:
    """Smallest cap above which the det-1 infimum is unaffected by ``A <= theta I``."""
    lam, _ = eigendecompose(M)
    tol = tol_psd(M)
    if lam[0] <= tol:
        raise NotPositiveDefinite(f"lambda_min = {lam[0]:.3e} is not > {tol:.1e}")
    return math.sqrt(_det_root_from_eigs(lam, tol) / lam[0])


def _waterfill(lam: np.ndarray, cap2: float) -> np.ndarray:
    """Minimise sum(lam * s) subject to prod(s) = 1, 0 < s <= cap2, for lam >= 0.

    KKT: every free coordinate satisfies lam_i s_i = c; coordinates whose
    unconstrained share would exceed ``cap2`` are pinned to it. Zero weights
    are pinned first since they cost nothing.
    """
    n = lam.size
    pinned = lam <= 0.0
    log_cap = math.log(cap2)
    while True:
        free = ~pinned
        if not free.any():
            # only possible when cap2 == 1
            return np.full(n, cap2)
        log_c = (np.log(lam[free]).sum() - pinned.sum() * log_cap) / free.sum()
        share = np.full(n, cap2)
        share[free] = np.exp(log_c - np.log(lam[free]))
        over = free & (share > cap2 * (1 + 1e-14))
        if not over.any():
            return share
        # pin the cheapest free coordinate and redistribute
        idx = np.flatnonzero(over)
        pinned[idx[np.argmin(lam[idx])]] = True


def _pairwise_descent(lam: np.ndarray, cap_log: float, starts: int = 64, seed: int = 0) -> np.ndarray:
    """Minimise sum(lam * exp(l)) over sum(l) = 0, l <= cap_log by exact pair moves.

    Each move fixes ``l_i + l_j`` and minimises the two-term function exactly
    on its feasible interval; runs from ``starts`` feasible points at once
    and returns the best log-share vector found.
    """
    n = lam.size
    rng = np.random.default_rng(seed)
    z = rng.uniform(-cap_log, cap_log, size=(starts, n))
    z[0] = 0.0
    # structured start: most negative weights at the cap
    if starts > 1:
        order = np.argsort(lam)
        k = max(int(np.sum(lam < 0)), 1)
        z[1] = 0.0
        z[1, order[: k]] = cap_log
        z[1, order[k:]] = -k * cap_log / max(n - k, 1)
        if n == k:
            z[1, order[-1]] = -(n - 1) * cap_log
    z -= z.mean(axis=1, keepdims=True)
    top = z.max(axis=1, keepdims=True)
    scale = np.where(top > cap_log, cap_log / np.where(top > 0, top, 1.0), 1.0)
    l = z * scale

    def objective(v):
        return (lam * np.exp(v)).sum(axis=1)

    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    best = objective(l)
    for _ in range(500):
        for i, j in pairs:
            a, b = lam[i], lam[j]
            c = l[:, i] + l[:, j]
            lo, hi = c - cap_log, np.full_like(c, cap_log)
            cand = [lo, hi]
            if a > 0 and b > 0:
                cand.append(np.clip(0.5 * (c + math.log(b / a)), lo, hi))
            cand = np.stack(cand, axis=1)
            vals = a * np.exp(cand) + b * np.exp(c[:, None] - cand)
            x = cand[np.arange(len(c)), np.argmin(vals, axis=1)]
            l[:, i] = x
            l[:, j] = c - x
        new = objective(l)
        done = np.all(best - new <= 1e-15 * (1.0 + np.abs(best)))
        best = new
        if done:
            break
    return l[np.argmin(best)]


def _capped_from_eigen(lam: np.ndarray, Q: np.ndarray, theta: float, tol: float) -> InfimumResult:
    if not theta > 0:
        raise InvalidInput(f"cap theta must be positive, got {theta}")
    n = lam.size
    if theta < 1.0:
        # no det-1 matrix fits under theta I
        return InfimumResult(math.inf, None, True)
    if lam[0] > tol:
        root = _det_root_from_eigs(lam, tol)
        t0 = math.sqrt(root / lam[0])
        if theta >= t0:
            stretch = math.sqrt(root) / np.sqrt(lam)
            return InfimumResult(n * root, (Q * stretch) @ Q.T, False)
    if math.isinf(theta):
        # no cap: the singular or indefinite infimum is not attained
        if lam[0] < -tol:
            return InfimumResult(NEG_INFINITY, None, False)
        return InfimumResult(n * _det_root_from_eigs(lam, tol), None, False)
    cap2 = theta * theta
    if lam[0] >= -tol:
        share = _waterfill(np.clip(lam, 0.0, None), cap2)
    else:
        share = np.exp(_pairwise_descent(lam, math.log(cap2)))
    value = float(np.dot(lam, share))
    optimizer = (Q * np.sqrt(share)) @ Q.T
    return InfimumResult(value, optimizer, True)


def inf_trace_det1_capped(M: MatrixLike, theta: float) -> InfimumResult:
    """Infimum of ``trace(A^t M A)`` over symmetric ``0 < A <= theta I``, ``det A = 1``.

    Equals :func:`inf_trace_det1` whenever ``M > 0`` and ``theta >= theta0(M)``.
    Otherwise the search runs in the eigenframe of ``M``, which is optimal:
    for fixed stretches the trace is minimised by pairing the largest
    stretch with the smallest eigenvalue.
    """
    lam, Q = eigendecompose(M)
    return _capped_from_eigen(lam, Q, float(theta), tol_psd(M))


def elementary_symmetric(values) -> np.ndarray:
    """Return ``[sigma_0, ..., sigma_n]`` of the given numbers."""
    coeffs = np.array([1.0])
    for v in np.asarray(values, dtype=float):
        coeffs = np.convolve(coeffs, [1.0, v])
    # np.poly-style ordering: coeffs[k] = sigma_k
    return coeffs


def det_root_perturbed(M: MatrixLike, eta: float) -> float:
    """``det(M + eta I)^{1/n}``."""
    lam, _ = eigendecompose(M)
    shifted = lam + eta
    if shifted[0] < -tol_psd(M):
        raise InvalidInput(f"M + eta I has eigenvalue {shifted[0]:.3e} < 0")
    shifted = np.clip(shifted, 0.0, None)
    if np.any(shifted == 0.0):
        return 0.0
    return float(np.exp(np.mean(np.log(shifted))))


def det_root_perturbation_constant(M: MatrixLike, eta_max: float) -> float:
    """Lipschitz constant of ``eta -> det(M + eta I)^{1/n}`` on ``[0, eta_max]``.

    Uses ``det(M + eta I) - det M = sum_k eta^k sigma_{n-k}(M)`` and the mean
    value theorem for ``s -> s^{1/n}`` on ``[det M, det(M + eta I)]``. Only
    finite when ``det M > 0``.
    """
    lam, _ = eigendecompose(M)
    n = lam.size
    sig = elementary_symmetric(lam)
    det = sig[n]
    if det <= 0:
        return math.inf
    slope = sum(sig[n - k] * eta_max ** (k - 1) for k in range(1, n + 1))
    return slope * det ** (1.0 / n - 1.0) / n


def inf_trace_block(m_time: float, M_space: MatrixLike, theta: float) -> InfimumResult:
    """Infimum of ``b^2 m_time + trace(A^t M A)`` over ``b det A = 1``, ``A <= theta I``, ``b <= theta``.

    This is the capped det-1 problem for the block matrix ``diag(m_time, M)``
    with the control ``diag(b, A)``; the returned optimizer is that
    ``(n+1) x (n+1)`` block matrix.
    """
    lam_s, Q_s = eigendecompose(M_space)
    n = lam_s.size
    lam = np.concatenate([[float(m_time)], lam_s])
    Q = np.zeros((n + 1, n + 1))
    Q[0, 0] = 1.0
    Q[1:, 1:] = Q_s
    order = np.argsort(lam, kind="stable")
    block = np.zeros((n + 1, n + 1))
    block[0, 0] = m_time
    block[1:, 1:] = as_dense(M_space)
    return _capped_from_eigen(lam[order], Q[:, order], float(theta), tol_psd(block))


def ball_quadratic_min(a, B) -> float:
    """Minimum of ``a . z + z^t B z / 2`` over the closed unit ball.

    Solved in the eigenbasis of ``B``: either the unconstrained minimizer is
    feasible, or the multiplier ``mu >= max(0, -lambda_min)`` solves
    ``|(B + mu I)^{-1} a| = 1`` (with the usual hard-case completion along the
    bottom eigenvector when ``a`` has no component there).
    """
    from scipy.optimize import brentq

    lam, Q = eigendecompose(B)
    alpha = Q.T @ np.asarray(a, dtype=float)
    scale = max(1.0, float(np.abs(lam).max()), float(np.abs(alpha).max()))
    tiny = 1e-13 * scale
    if lam[0] > tiny:
        z = -alpha / lam
        if z @ z <= 1.0:
            return float(alpha @ z + 0.5 * np.sum(lam * z * z))
    lo = max(0.0, -lam[0])
    bottom = np.abs(lam - lam[0]) <= tiny
    if np.all(np.abs(alpha[bottom]) <= tiny):
        # hard case candidate: pseudo-inverse step plus a bottom-eigenvector fill
        rest = ~bottom
        z = np.zeros_like(alpha)
        z[rest] = -alpha[rest] / (lam[rest] + lo)
        short = 1.0 - z @ z
        if short >= 0:
            z[np.flatnonzero(bottom)[0]] = math.sqrt(short)
            return float(alpha @ z + 0.5 * np.sum(lam * z * z))

    def excess(mu):
        return float(np.sum((alpha / (lam + mu)) ** 2)) - 1.0

    left = lo + tiny
    while excess(left) < 0:
        left = lo + (left - lo) * 1e-3
        if left - lo < 1e-300:
            break
    right = lo + float(np.linalg.norm(alpha)) + 1.0
    mu = brentq(excess, left, right, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    z = -alpha / (lam + mu)
    return float(alpha @ z + 0.5 * np.sum(lam * z * z))
