"""Finite, nested discretisations of the control sets of the mean value operators.

All families are deterministic. Rotations, directions and stretch vectors are
prefixes of fixed low-discrepancy sequences (or dyadic angle grids in 2-d),
so doubling a count gives a superset of the previous family and the family
minimum of any fixed objective can only go down.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, Unsupported

__all__ = [
    "PhiSchedule",
    "ControlFamily",
    "SupInfFamily",
    "rotations",
    "directions",
    "sample_det1",
    "sample_det1_times_b",
    "pucci_family",
    "rank_one_family",
    "supinf_family_for_lambda_k",
    "single_control",
]


@dataclass(frozen=True)
class PhiSchedule:
    """Cap ``phi(eps) = eps**(-p)`` with ``0 < p < 1``.

    Then ``phi -> inf`` and ``eps * phi -> 0`` as ``eps -> 0``.
    """

    exponent: float = 0.5

    def __post_init__(self):
        if not 0 < self.exponent < 1:
            raise InvalidInput(f"exponent must lie in (0, 1), got {self.exponent}")

    def __call__(self, eps: float) -> float:
        return float(eps) ** (-self.exponent)


@dataclass(frozen=True)
class ControlFamily:
    """A materialised list of controls ``(A_i, b_i)``.

    ``matrices`` has shape ``(m, n, n)`` and ``b`` shape ``(m,)``.
    """

    kind: str
    matrices: np.ndarray
    b: np.ndarray
    params: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.b)

    def __getitem__(self, i):
        return self.matrices[i], float(self.b[i])

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]


@dataclass(frozen=True)
class SupInfFamily:
    """Outer list of families: sup over groups of the inf within each group.

    Controls are stored flat; ``group[i]`` is the outer index of control ``i``
    and controls of one group are contiguous.
    """

    matrices: np.ndarray
    b: np.ndarray
    group: np.ndarray
    params: dict = field(default_factory=dict)
    kind: str = "SupInf"

    @classmethod
    def from_members(cls, members, params=None):
        members = list(members)
        if not members:
            raise InvalidInput("a sup-inf family needs at least one member")
        mats = np.concatenate([m.matrices for m in members])
        b = np.concatenate([m.b for m in members])
        group = np.concatenate([np.full(len(m), k) for k, m in enumerate(members)])
        return cls(mats, b, group, dict(params or {}))

    def __len__(self):
        return len(self.b)

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    @property
    def group_count(self) -> int:
        return int(self.group[-1]) + 1

    @property
    def members(self) -> tuple:
        cuts = np.flatnonzero(np.diff(self.group)) + 1
        return tuple(
            ControlFamily("BoundedSet", m, bb, {})
            for m, bb in zip(np.split(self.matrices, cuts), np.split(self.b, cuts))
        )

    def flatten(self):
        return self.matrices, self.b, self.group

    def reduce(self, values: np.ndarray, axis: int = -1):
        """Sup over groups of the inf within groups, along ``axis``.

        Returns ``(value, outer, inner)`` where ``inner`` is a flat control
        index; ties go to the first group and the first control.
        """
        values = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
        starts = np.r_[0, np.flatnonzero(np.diff(self.group)) + 1]
        mins = np.minimum.reduceat(values, starts, axis=-1)
        best = mins.max(axis=-1, keepdims=True)
        outer = np.argmax(mins >= best - 1e-12, axis=-1)
        in_group = self.group[None, :] == outer.reshape(-1, 1)
        flat = values.reshape(-1, values.shape[-1])
        masked = np.where(in_group, flat, np.inf)
        mn = masked.min(axis=-1, keepdims=True)
        inner = np.argmax(masked <= mn + 1e-12, axis=-1).reshape(outer.shape)
        return best[..., 0], outer, inner


def _check_dim(n):
    if n not in (1, 2, 3):
        raise Unsupported(f"control families are implemented for n in {{1, 2, 3}}, got n={n}")


def _r_sequence(dim: int, count: int, start: int = 1) -> np.ndarray:
    """Points ``frac(k * alpha)`` of the generalised golden-ratio sequence."""
    g = 2.0
    for _ in range(64):
        g = (1 + g) ** (1.0 / (dim + 1))
    alpha = (1.0 / g) ** np.arange(1, dim + 1)
    k = np.arange(start, start + count)[:, None]
    return np.mod(k * alpha, 1.0)


def rotations(n: int, count: int) -> np.ndarray:
    """``count`` rotation matrices; the first one is always the identity."""
    _check_dim(n)
    count = max(int(count), 1)
    if n == 1:
        return np.ones((1, 1, 1))
    if n == 2:
        ang = np.pi * np.arange(count) / count
        c, s = np.cos(ang), np.sin(ang)
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    out = [np.eye(3)]
    if count > 1:
        u = _r_sequence(3, count - 1)
        # Shoemake: uniform unit quaternions from three uniforms
        a, b = np.sqrt(1 - u[:, 0]), np.sqrt(u[:, 0])
        x, y = a * np.sin(2 * np.pi * u[:, 1]), a * np.cos(2 * np.pi * u[:, 1])
        z, w = b * np.sin(2 * np.pi * u[:, 2]), b * np.cos(2 * np.pi * u[:, 2])
        R = np.empty((count - 1, 3, 3))
        R[:, 0, 0] = 1 - 2 * (y * y + z * z)
        R[:, 0, 1] = 2 * (x * y - z * w)
        R[:, 0, 2] = 2 * (x * z + y * w)
        R[:, 1, 0] = 2 * (x * y + z * w)
        R[:, 1, 1] = 1 - 2 * (x * x + z * z)
        R[:, 1, 2] = 2 * (y * z - x * w)
        R[:, 2, 0] = 2 * (x * z - y * w)
        R[:, 2, 1] = 2 * (y * z + x * w)
        R[:, 2, 2] = 1 - 2 * (x * x + y * y)
        out.extend(R)
    return np.asarray(out)


def directions(n: int, count: int, full_sphere: bool = False) -> np.ndarray:
    """Unit vectors, one per line through the origin unless ``full_sphere``.

    In 2-d these are dyadic angle grids; in 3-d the coordinate axes come
    first (``e_3, e_1, e_2``, plus their negatives on the full sphere) and the
    rest follow a low-discrepancy sequence with uniform height.
    """
    _check_dim(n)
    count = max(int(count), 1)
    if n == 1:
        return np.array([[1.0], [-1.0]]) if full_sphere and count > 1 else np.array([[1.0]])
    if n == 2:
        span = 2 * np.pi if full_sphere else np.pi
        ang = span * np.arange(count) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    axes = np.eye(3)[[2, 0, 1]]
    if full_sphere:
        axes = np.vstack([axes, -axes])
    if count <= len(axes):
        return axes[:count].copy()
    out = list(axes)
    if count > len(axes):
        u = _r_sequence(2, count - len(axes))
        z = 2 * u[:, 0] - 1 if full_sphere else u[:, 0]
        phi = 2 * np.pi * u[:, 1]
        rho = np.sqrt(1 - z * z)
        out.extend(np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z]))
    return np.asarray(out)


def _log_stretches(n: int, log_cap: float, count: int) -> np.ndarray:
    """Log-stretch vectors with zero sum and entries ``<= log_cap``, excluding 0."""
    if n == 1 or log_cap <= 0 or count < 1:
        return np.zeros((0, n))
    if n == 2:
        j = np.arange(1, count + 1) / count * log_cap
        return np.column_stack([j, -j])
    out = []
    start = 1
    while len(out) < count:
        u = _r_sequence(2, 4 * count, start)
        start += 4 * count
        l1 = log_cap * (2 * u[:, 0] - 1)
        l2 = log_cap * (2 * u[:, 1] - 1)
        l3 = -l1 - l2
        ok = l3 <= log_cap
        out.extend(np.column_stack([l1, l2, l3])[ok])
    return np.asarray(out[:count])


def _frame_products(R: np.ndarray, s: np.ndarray) -> np.ndarray:
    """All ``R diag(s) R^t`` for rotations ``R`` (r, n, n) and stretches ``s`` (k, n)."""
    return np.einsum("rij,kj,rlj->rkil", R, s, R).reshape(-1, R.shape[1], R.shape[1])


def sample_det1(n: int, phi_cap: float, rotation_count: int = 8, stretch_count: int = 8) -> ControlFamily:
    """Symmetric ``A = R diag(s) R^t`` with ``prod(s) = 1`` and ``max(s) <= phi_cap``.

    The identity comes first, followed by ``rotation_count * stretch_count``
    rotated stretches.
    """
    _check_dim(n)
    if not phi_cap >= 1:
        raise InvalidInput(f"phi_cap must be >= 1 (the identity must be feasible), got {phi_cap}")
    eye = np.eye(n)[None]
    logs = _log_stretches(n, math.log(phi_cap), stretch_count)
    params = dict(n=n, phi_cap=phi_cap, rotation_count=rotation_count, stretch_count=stretch_count)
    if len(logs) == 0:
        return ControlFamily("Det1", eye, np.ones(1), params)
    mats = _frame_products(rotations(n, rotation_count), np.exp(logs))
    mats = np.concatenate([eye, mats])
    return ControlFamily("Det1", mats, np.ones(len(mats)), params)


def sample_det1_times_b(
    n: int, phi_cap: float, rotation_count: int = 8, stretch_count: int = 8, b_count: int = 4
) -> ControlFamily:
    """Pairs ``(A, b)`` with ``b det(A) = 1``, ``A <= phi_cap I`` and ``1/phi_cap <= b <= phi_cap``.

    ``b`` runs over a log-uniform grid containing 1; each det-1 sample is
    rescaled by ``b^{-1/n}`` and dropped if the rescaled matrix breaks the cap.
    """
    base = sample_det1(n, phi_cap, rotation_count, stretch_count)
    if phi_cap == 1:
        js = [0]
    else:
        js = [0] + [s * j for j in range(1, b_count + 1) for s in (1, -1)]
    mats, bs = [], []
    top = np.linalg.eigvalsh(base.matrices)[:, -1]
    for j in js:
        b = phi_cap ** (j / max(b_count, 1))
        scale = b ** (-1.0 / n)
        ok = top * scale <= phi_cap * (1 + 1e-12)
        mats.append(base.matrices[ok] * scale)
        bs.append(np.full(int(ok.sum()), b))
    params = dict(base.params, b_count=b_count)
    return ControlFamily("Det1TimesB", np.concatenate(mats), np.concatenate(bs), params)


def pucci_family(n: int, theta: float, Theta: float, rotation_count: int = 8, stretch_count: int = 0) -> ControlFamily:
    """``A = R diag(s) R^t`` with ``sqrt(theta) <= s_i <= sqrt(Theta)``, ``b = 1``.

    Stretch vectors are the corners of the box (where Pucci extrema are
    attained) plus ``stretch_count`` interior low-discrepancy points.
    """
    _check_dim(n)
    if not 0 < theta < Theta:
        raise InvalidInput(f"need 0 < theta < Theta, got theta={theta}, Theta={Theta}")
    lo, hi = math.sqrt(theta), math.sqrt(Theta)
    corners = np.array(list(itertools.product([lo, hi], repeat=n)))
    mixed = corners[(corners != lo).any(1) & (corners != hi).any(1)]
    interior = lo + (hi - lo) * _r_sequence(n, stretch_count) if stretch_count else np.zeros((0, n))
    rotated = np.vstack([mixed, interior])
    mats = [lo * np.eye(n)[None], hi * np.eye(n)[None]]
    if len(rotated):
        mats.append(_frame_products(rotations(n, rotation_count), rotated))
    mats = np.concatenate(mats)
    params = dict(n=n, theta=theta, Theta=Theta, rotation_count=rotation_count, stretch_count=stretch_count)
    return ControlFamily("Pucci", mats, np.ones(len(mats)), params)


def rank_one_family(n: int, direction_count: int = 64, V=None) -> ControlFamily:
    """Projections ``A = v v^t`` onto sampled unit directions, ``b = 1``.

    With ``V`` (an ``n x d`` orthonormal basis) the directions are restricted
    to its column span.
    """
    _check_dim(n)
    if V is None:
        vs = directions(n, direction_count)
        kind = "RankOneAll"
    else:
        V = np.asarray(V, dtype=float).reshape(n, -1)
        vs = directions(V.shape[1], direction_count) @ V.T
        kind = "RankOneSubspace"
    mats = np.einsum("ki,kj->kij", vs, vs)
    return ControlFamily(kind, mats, np.ones(len(mats)), dict(n=n, direction_count=direction_count))


def supinf_family_for_lambda_k(n: int, k: int, subspace_count: int = 8192, direction_count: int = 64) -> SupInfFamily:
    """Sup over subspaces ``V`` of dimension ``n - k + 1`` of the inf over unit ``v`` in ``V``.

    This is the Courant-Fischer max-min for the k-th smallest eigenvalue,
    ``lambda_k(M) = max_{dim V = n-k+1} min_{v in V, |v| = 1} <M v, v>``.

    ``subspace_count`` lines or hyperplane normals are sampled for the outer
    sup and ``direction_count`` directions inside each plane. When
    ``V = R^n`` with ``n = 3`` the inner set is a whole sphere and gets
    ``max(subspace_count, direction_count)`` directions.
    """
    _check_dim(n)
    if not 1 <= k <= n:
        raise InvalidInput(f"k must satisfy 1 <= k <= n={n}, got {k}")
    d = n - k + 1
    params = dict(n=n, k=k, subspace_count=subspace_count, direction_count=direction_count)
    if d == n:
        count = max(subspace_count, direction_count) if n == 3 else direction_count
        fam = rank_one_family(n, count)
        return SupInfFamily(fam.matrices, fam.b, np.zeros(len(fam), dtype=int), params)
    ws = directions(n, subspace_count)
    if d == 1:
        mats = np.einsum("ki,kj->kij", ws, ws)
        return SupInfFamily(mats, np.ones(len(ws)), np.arange(len(ws)), params)
    if d == n - 1 == 2:
        # orthonormal frame (p, q) of each plane w-perp, then unit vectors cos*p + sin*q
        helper = np.where(np.abs(ws[:, [0]]) < 0.9, np.eye(3)[0], np.eye(3)[1])
        p = np.cross(ws, helper)
        p /= np.linalg.norm(p, axis=1, keepdims=True)
        q = np.cross(ws, p)
        c = directions(2, direction_count)
        vs = np.einsum("da,kai->kdi", c, np.stack([p, q], 1)).reshape(-1, 3)
        mats = np.einsum("ki,kj->kij", vs, vs)
        group = np.repeat(np.arange(len(ws)), len(c))
        return SupInfFamily(mats, np.ones(len(vs)), group, params)
    raise Unsupported(f"subspace dimension {d} in n={n}")  # pragma: no cover


def single_control(A, b: float = 1.0, kind: str = "BoundedSet") -> ControlFamily:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return ControlFamily(kind, A[None], np.array([float(b)]), dict(n=A.shape[0]))
