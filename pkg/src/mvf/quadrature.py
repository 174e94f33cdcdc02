"""Symmetric quadrature on the unit ball, the unit sphere and time windows.

Every rule here is closed under ``y -> -y`` and integrates quadratics
exactly, so for any symmetric ``M``::

    sum_i w_i <M y_i, y_i> = trace(M) / (n + 2)     (ball)
    sum_i w_i <M y_i, y_i> = trace(M) / n           (sphere)

which is all the second-order consistency of the mean value operators
needs. Higher ``level`` raises the polynomial degree integrated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre, roots_sh_jacobi

from .errors import InvalidInput, Unsupported

__all__ = [
    "BallRule",
    "SphereRule",
    "TimeRule",
    "make_ball_rule",
    "make_sphere_rule",
    "make_time_rule",
    "POINT_RULE",
    "ellipsoid_average",
    "spacetime_average",
]


@dataclass(frozen=True)
class BallRule:
    dim: int
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True)
class SphereRule:
    dim: int
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True)
class TimeRule:
    """Nodes ``tau`` in [0, 1]; a window ``(t - delta, t)`` is sampled at ``t - delta * tau``."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.nodes))

    def __len__(self):
        return len(self.weights)


def _angular(n: int, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Antipodally symmetric sphere nodes exact to degree ``2 * level + 1``."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([0.5, 0.5])
    if n == 2:
        m = 2 * level + 2
        ang = 2 * np.pi * np.arange(m) / m
        return np.column_stack([np.cos(ang), np.sin(ang)]), np.full(m, 1.0 / m)
    if n == 3:
        if level == 1:
            nodes = np.vstack([np.eye(3), -np.eye(3)])
            return nodes, np.full(6, 1.0 / 6)
        z, wz = roots_legendre(level + 1)
        m = 2 * level + 2
        phi = 2 * np.pi * np.arange(m) / m
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        rho = np.sqrt(1 - zz**2)
        nodes = np.column_stack([(rho * np.cos(pp)).ravel(), (rho * np.sin(pp)).ravel(), zz.ravel()])
        weights = np.repeat(wz / 2, m) / m
        return nodes, weights
    raise Unsupported(f"quadrature is implemented for n in {{1, 2, 3}}, got n={n}")


def make_sphere_rule(n: int, level: int = 1) -> SphereRule:
    if level < 1:
        raise InvalidInput("level must be >= 1")
    nodes, weights = _angular(n, level)
    return SphereRule(n, nodes, weights / weights.sum())


def make_ball_rule(n: int, level: int = 1) -> BallRule:
    """Product rule: Gauss-Jacobi in ``r^2`` times a symmetric angular set.

    With ``rho = r^2`` the radial density of the uniform ball becomes
    ``(n/2) rho^{n/2 - 1}`` on [0, 1]; ``level`` Gauss nodes for that weight
    integrate even radial powers up to ``r^{4 level - 2}``. Level 1 is the
    single shell of radius ``sqrt(n / (n + 2))``.
    """
    if level < 1:
        raise InvalidInput("level must be >= 1")
    ang, wang = _angular(n, level)
    rho, wrho = roots_sh_jacobi(level, n / 2, n / 2)
    wrho = wrho / wrho.sum()
    radii = np.sqrt(rho)
    nodes = (radii[:, None, None] * ang[None, :, :]).reshape(-1, n)
    weights = (wrho[:, None] * wang[None, :]).ravel()
    return BallRule(n, nodes, weights / weights.sum())


def make_time_rule(points: int = 3) -> TimeRule:
    """Gauss-Legendre on [0, 1]; one point gives the midpoint evaluation."""
    if points < 1:
        raise InvalidInput("points must be >= 1")
    x, w = roots_legendre(points)
    return TimeRule(0.5 * (x + 1), w / w.sum())


POINT_RULE = TimeRule(np.array([0.5]), np.array([1.0]))


def _as_points(x, n):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != n:
        raise InvalidInput(f"point dimension {x.shape[-1]} does not match rule dimension {n}")
    return x


def ellipsoid_average(u, x, t, A, eps: float, rule) -> np.ndarray | float:
    """Average of ``u(x + eps A y, t)`` over the rule nodes ``y``.

    ``u`` is any callable ``u(points, t)`` taking an ``(m, n)`` array;
    grid functions interpolate multilinearly and raise ``OutOfDomain`` when a
    node leaves their grid. ``x`` may be a single point or an ``(N, n)``
    batch, in which case an array of ``N`` averages is returned.
    """
    n = rule.dim
    single = np.ndim(x) == 1
    X = _as_points(x, n)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    shifts = eps * rule.nodes @ A.T
    pts = (X[:, None, :] + shifts[None, :, :]).reshape(-1, n)
    vals = np.broadcast_to(np.asarray(u(pts, t), dtype=float), (len(pts),)).reshape(len(X), len(rule))
    out = vals @ rule.weights
    return float(out[0]) if single else out


def spacetime_average(u, x, t, A, eps: float, window: float, ball, time_rule=None):
    """Tensor average of ``u(x + eps A y, s)`` over the ball and ``s`` in ``(t - window, t)``."""
    if not window > 0:
        raise InvalidInput(f"time window must be positive, got {window}")
    if time_rule is None:
        time_rule = make_time_rule(3)
    total = 0.0
    for tau, w in zip(time_rule.nodes, time_rule.weights):
        total = total + w * ellipsoid_average(u, x, t - window * tau, A, eps, ball)
    return total
