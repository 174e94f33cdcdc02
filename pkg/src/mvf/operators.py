"""Asymptotic mean value operators and a consistency checker.

Every operator has the same shape: for each control ``(A, b)`` average
``u(x + eps A y, s)`` over a ball (or sphere) rule in ``y`` and a time window
``s in (t - window(b), t)``, take the inf (or sup of infs) over controls and
add an explicit ``eps^2`` correction. The point variant replaces the time
average by one evaluation at the middle of the window.

Functions ``u`` are callables ``u(points, t)`` with ``points`` of shape
``(P, n)`` and ``t`` a scalar or an array of length ``P``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from . import linalg
from .controls import ControlFamily, PhiSchedule, SupInfFamily, directions, sample_det1, sample_det1_times_b
from .errors import InvalidInput, InvalidRhs
from .quadrature import POINT_RULE, make_ball_rule, make_sphere_rule, make_time_rule

__all__ = [
    "Variant",
    "OperatorClass",
    "OperatorSpec",
    "MvfEvaluation",
    "ConsistencyReport",
    "control_averages",
    "mvf_ma1",
    "mvf_ma2",
    "mvf_inf",
    "mvf_supinf",
    "mvf_heat",
    "mvf_plaplacian",
    "evaluate",
    "consistency_check",
    "family_objective",
    "continuum_objective",
    "family_gap",
    "midrange_candidates",
]

# points per call to u when batching over controls
_CHUNK_POINTS = 1 << 21


class Variant(str, Enum):
    TIME_AVERAGE = "time"
    POINT_EVAL = "point"
    SPHERE_AVERAGE = "sphere"


class OperatorClass(str, Enum):
    MA1 = "MA1"
    MA2 = "MA2"
    INF = "Inf"
    SUPINF = "SupInf"
    HEAT = "Heat"
    PLAPLACIAN = "PLaplacian"


@dataclass(frozen=True)
class MvfEvaluation:
    """Result of one operator evaluation (scalar) or a batch (arrays).

    ``value = reduce(residual_inputs) + correction``; ``argext`` is the flat
    index of the extremal control in ``family`` (for sup-inf families it is
    the inner index and ``outer`` holds the group).
    """

    value: float | np.ndarray
    correction: float | np.ndarray
    argext: int | np.ndarray | None = None
    residual_inputs: np.ndarray | None = None
    family: ControlFamily | SupInfFamily | None = None
    outer: int | np.ndarray | None = None

    @property
    def control(self):
        """``(A, b)`` of the extremal control for a scalar evaluation."""
        if self.family is None or self.argext is None:
            return None
        i = int(self.argext)
        return self.family.matrices[i], float(self.family.b[i])


@dataclass(frozen=True)
class ConsistencyReport:
    eps: np.ndarray
    residuals: np.ndarray
    per_point: np.ndarray
    slope: float

    def __post_init__(self):
        if len(self.eps) != len(self.residuals):
            raise InvalidInput("eps and residuals differ in length")


def _as_callable_rhs(f):
    if f is None:
        return lambda X, t: np.zeros(len(X))
    if callable(f):
        return lambda X, t: np.broadcast_to(np.asarray(f(X, t), dtype=float), (len(X),))
    c = float(f)
    return lambda X, t: np.full(len(X), c)


@dataclass(frozen=True)
class OperatorSpec:
    """Configuration of a mean value operator.

    ``controls`` is a ``PhiSchedule`` for the Monge-Ampere classes (the family
    is rebuilt for each ``eps`` with cap ``phi(eps)``), a ``ControlFamily``
    for the inf class and a ``SupInfFamily`` for the sup-inf class. It is
    ignored for the heat and p-Laplacian classes.
    """

    cls: OperatorClass
    n: int
    variant: Variant = Variant.TIME_AVERAGE
    controls: object = None
    rhs_f: Callable | float | None = None
    p: float = 2.0
    rotation_count: int = 16
    stretch_count: int = 16
    b_count: int = 8
    ball_level: int = 1
    time_points: int = 3
    direction_count: int = 64

    def __post_init__(self):
        object.__setattr__(self, "cls", OperatorClass(self.cls))
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.cls == OperatorClass.PLAPLACIAN and not self.p > 1:
            raise InvalidInput(f"p-Laplacian needs p > 1, got {self.p}")
        if self.cls in (OperatorClass.MA1, OperatorClass.MA2):
            if self.controls is None:
                object.__setattr__(self, "controls", PhiSchedule())
        elif self.cls == OperatorClass.INF and not isinstance(self.controls, ControlFamily):
            raise InvalidInput("the inf class needs a ControlFamily")
        elif self.cls == OperatorClass.SUPINF and not isinstance(self.controls, SupInfFamily):
            raise InvalidInput("the sup-inf class needs a SupInfFamily")
        if self.cls not in (OperatorClass.MA1, OperatorClass.MA2) and self.rhs_f not in (None, 0, 0.0):
            raise InvalidInput(f"{self.cls.value} operators are homogeneous; rhs_f must be zero")

    def family(self, eps: float):
        if self.cls in (OperatorClass.MA1, OperatorClass.MA2):
            sched = self.controls
            if isinstance(sched, (ControlFamily, SupInfFamily)):
                return sched
            cap = sched(eps) if callable(sched) else float(sched)
            if self.cls == OperatorClass.MA1:
                return sample_det1(self.n, cap, self.rotation_count, self.stretch_count)
            return sample_det1_times_b(self.n, cap, self.rotation_count, self.stretch_count, self.b_count)
        if self.cls in (OperatorClass.HEAT, OperatorClass.PLAPLACIAN):
            return ControlFamily("BoundedSet", np.eye(self.n)[None], np.ones(1), dict(n=self.n))
        return self.controls

    def window_coefficients(self, b: np.ndarray) -> np.ndarray:
        """Per-control time window divided by ``eps^2``."""
        n = self.n
        b = np.asarray(b, dtype=float)
        denom = n if self.variant == Variant.SPHERE_AVERAGE else n + 2
        if self.cls == OperatorClass.MA1:
            return np.full(b.shape, 1.0 if self.variant == Variant.SPHERE_AVERAGE else n / (n + 2))
        if self.cls == OperatorClass.MA2:
            return b**2 / denom
        if self.cls == OperatorClass.PLAPLACIAN:
            return np.ones(b.shape)
        return b / denom

    def offsets(self, eps: float, family=None) -> np.ndarray:
        """Point-evaluation time offsets ``window / 2`` per control."""
        family = self.family(eps) if family is None else family
        return 0.5 * eps**2 * self.window_coefficients(family.b)

    def correction(self, X, t, eps: float) -> np.ndarray:
        n = self.n
        if self.cls not in (OperatorClass.MA1, OperatorClass.MA2):
            return np.zeros(len(X))
        f = _as_callable_rhs(self.rhs_f)(X, t)
        sphere = self.variant == Variant.SPHERE_AVERAGE
        if self.cls == OperatorClass.MA1:
            return (0.5 if sphere else n / (2 * (n + 2))) * f * eps**2
        if np.any(f < 0):
            raise InvalidRhs(f"MA2 needs f >= 0, got min f = {f.min()}")
        c = (n + 1) / (2 * n) if sphere else (n + 1) / (2 * (n + 2))
        return -c * f ** (1.0 / (n + 1)) * eps**2

    def spatial_rule(self):
        if self.variant == Variant.SPHERE_AVERAGE:
            return make_sphere_rule(self.n, self.ball_level)
        return make_ball_rule(self.n, self.ball_level)

    def time_rule(self):
        return POINT_RULE if self.variant == Variant.POINT_EVAL else make_time_rule(self.time_points)


def control_averages(u, X, t, eps: float, mats, windows, rule, time_rule) -> np.ndarray:
    """Averages of ``u`` for every query point and control, shape ``(N, m)``.

    The average for control ``j`` at point ``x`` is
    ``sum_tau w_tau sum_i w_i u(x + eps A_j y_i, t - windows[j] * tau)``.
    ``t`` is a scalar or an array with one time per query point.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N, n = X.shape
    mats = np.asarray(mats, dtype=float)
    windows = np.asarray(windows, dtype=float)
    m, q = len(mats), len(rule.weights)
    if m == 0:
        raise InvalidInput("empty control family")
    t = np.asarray(t, dtype=float)
    tcol = t.reshape(-1, 1) if t.ndim else np.full((1, 1), float(t))
    shifts = eps * np.einsum("kij,qj->kqi", mats, rule.nodes)
    out = np.empty((N, m))
    chunk = max(1, _CHUNK_POINTS // max(1, N * q))
    for lo in range(0, m, chunk):
        hi = min(m, lo + chunk)
        pts = (X[:, None, None, :] + shifts[None, lo:hi]).reshape(-1, n)
        acc = np.zeros((N, hi - lo))
        for tau, w in zip(time_rule.nodes, time_rule.weights):
            s = np.broadcast_to((tcol - windows[None, lo:hi] * tau)[:, :, None], (N, hi - lo, q))
            vals = np.asarray(u(pts, s.reshape(-1)), dtype=float).reshape(N, hi - lo, q)
            acc += w * (vals @ rule.weights)
        out[:, lo:hi] = acc
    return out


def _first_argmin(values: np.ndarray) -> np.ndarray:
    mn = values.min(axis=-1, keepdims=True)
    return np.argmax(values <= mn + 1e-12, axis=-1)


def _pack(single, value, corr, arg, avgs, family, outer=None):
    if single:
        return MvfEvaluation(
            float(value[0]),
            float(corr[0]),
            int(arg[0]),
            avgs[0],
            family,
            None if outer is None else int(outer[0]),
        )
    return MvfEvaluation(value, corr, arg, avgs, family, outer)


def evaluate(spec: OperatorSpec, u, x, t, eps: float, family=None, extra_offsets=None) -> MvfEvaluation:
    """Evaluate the operator described by ``spec`` at ``x`` (a point or an ``(N, n)`` batch)."""
    if not eps > 0:
        raise InvalidInput(f"eps must be positive, got {eps}")
    if spec.cls == OperatorClass.PLAPLACIAN:
        return _plaplacian(spec, u, x, t, eps, extra_offsets)
    single = np.ndim(x) == 1
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if X.shape[1] != spec.n:
        raise InvalidInput(f"points have dimension {X.shape[1]}, operator has n={spec.n}")
    family = spec.family(eps) if family is None else family
    if len(family) == 0:
        raise InvalidInput("empty control family")
    windows = eps**2 * spec.window_coefficients(family.b)
    corr = spec.correction(X, t, eps)
    avgs = control_averages(u, X, t, eps, family.matrices, windows, spec.spatial_rule(), spec.time_rule())
    if isinstance(family, SupInfFamily):
        best, outer, inner = family.reduce(avgs)
        return _pack(single, best + corr, corr, inner, avgs, family, outer)
    arg = _first_argmin(avgs)
    value = avgs[np.arange(len(X)), arg] + corr
    return _pack(single, value, corr, arg, avgs, family)


def mvf_ma1(u, x, t, eps, phi=None, f=0.0, variant="time", family=None, **kw) -> MvfEvaluation:
    """Monge-Ampere operator for ``u_t = det(D^2 u)^{1/n} + f``.

    Inf over det-1 controls capped by ``phi(eps)`` of the ellipsoid average
    over the window ``n eps^2 / (n + 2)``, plus ``n f eps^2 / (2 (n + 2))``.
    The sphere variant uses window ``eps^2`` and correction ``f eps^2 / 2``.
    """
    spec = OperatorSpec("MA1", np.shape(x)[-1], variant, phi or PhiSchedule(), f, **kw)
    return evaluate(spec, u, x, t, eps, family)


def mvf_ma2(u, x, t, eps, phi=None, f=0.0, variant="time", family=None, **kw) -> MvfEvaluation:
    """Operator for ``-u_t det(D^2 u) = f`` with ``f >= 0``.

    Inf over ``(A, b)`` with ``b det A = 1`` of the average over the window
    ``b^2 eps^2 / (n + 2)``, minus ``(n + 1) f^{1/(n+1)} eps^2 / (2 (n + 2))``.

    Raises
    ------
    InvalidRhs
        If ``f < 0`` at a query point.
    """
    spec = OperatorSpec("MA2", np.shape(x)[-1], variant, phi or PhiSchedule(), f, **kw)
    return evaluate(spec, u, x, t, eps, family)


def mvf_inf(u, x, t, eps, family: ControlFamily, variant="time", **kw) -> MvfEvaluation:
    """Inf over a bounded family of averages over the window ``b eps^2 / (n + 2)``."""
    return evaluate(OperatorSpec("Inf", family.dim, variant, family, **kw), u, x, t, eps)


def mvf_supinf(u, x, t, eps, family: SupInfFamily, variant="time", **kw) -> MvfEvaluation:
    """Sup over groups of the inf over controls within the group."""
    return evaluate(OperatorSpec("SupInf", family.dim, variant, family, **kw), u, x, t, eps)


def mvf_heat(u, x, t, eps, variant="time", **kw) -> MvfEvaluation:
    """Heat operator for ``u_t = Laplacian(u)``: one control ``(I, 1)``."""
    return evaluate(OperatorSpec("Heat", np.shape(x)[-1], variant, **kw), u, x, t, eps)


def midrange_candidates(spec: OperatorSpec, eps: float, extra_offsets=None) -> np.ndarray:
    """Unit-ball points over which the p-Laplacian max and min are taken."""
    n = spec.n
    ball = make_ball_rule(n, spec.ball_level)
    cands = np.vstack([np.zeros((1, n)), ball.nodes, directions(n, spec.direction_count, full_sphere=True)])
    if extra_offsets is not None and len(extra_offsets):
        extra = np.asarray(extra_offsets, dtype=float) / eps
        cands = np.vstack([cands, extra[np.sum(extra**2, axis=1) <= 1 + 1e-12]])
    return cands


def _plaplacian(spec, u, x, t, eps, extra_offsets=None):
    n, p = spec.n, spec.p
    single = np.ndim(x) == 1
    X = np.atleast_2d(np.asarray(x, dtype=float))
    ball = make_ball_rule(n, spec.ball_level)
    cands = midrange_candidates(spec, eps, extra_offsets)
    trule = spec.time_rule()
    window = eps**2
    eye = np.eye(n)[None]
    avg = control_averages(u, X, t, eps, eye, [window], ball, trule)[:, 0]
    N, c = len(X), len(cands)
    pts = (X[:, None, :] + eps * cands[None]).reshape(-1, n)
    tcol = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1, 1), (N, 1))
    extreme = np.zeros(N)
    for tau, w in zip(trule.nodes, trule.weights):
        s = np.broadcast_to(tcol - window * tau, (N, c)).reshape(-1)
        vals = np.asarray(u(pts, s), dtype=float).reshape(N, c)
        extreme += w * 0.5 * (vals.max(axis=1) + vals.min(axis=1))
    value = (p - 2) / (p + n) * extreme + (n + 2) / (p + n) * avg
    inputs = np.column_stack([extreme, avg])
    zero = np.zeros(N)
    if single:
        return MvfEvaluation(float(value[0]), 0.0, None, inputs[0])
    return MvfEvaluation(value, zero, None, inputs)


def mvf_plaplacian(u, x, t, eps, p: float, variant="time", extra_offsets=None, **kw) -> MvfEvaluation:
    """Normalised parabolic p-Laplacian ``(n + p) u_t = |Du|^{2-p} div(|Du|^{p-2} Du)``.

    Mixes the midrange ``(max + min) / 2`` over ``B_eps(x)`` with weight
    ``(p - 2) / (p + n)`` and the ball average with weight ``(n + 2) / (p + n)``,
    both over the window ``eps^2``. The max and min run over the ball rule
    nodes, ``direction_count`` points of the sphere, the centre and any
    ``extra_offsets`` (e.g. lattice points) inside the ball.
    """
    spec = OperatorSpec("PLaplacian", np.shape(x)[-1], variant, p=p, **kw)
    return evaluate(spec, u, x, t, eps, extra_offsets=extra_offsets)


def consistency_check(spec: OperatorSpec, u_exact, points, eps_sequence, t: float = 1.0) -> ConsistencyReport:
    """Residuals ``|u(x, t) - M(u, eps)(x, t)|`` over ``points`` for each ``eps``.

    ``slope`` is the least-squares slope of ``log(max residual)`` against
    ``log(eps)``; it is NaN when some residual is exactly zero.
    """
    eps = np.asarray(eps_sequence, dtype=float)
    if np.any(np.diff(eps) >= 0):
        raise InvalidInput("eps_sequence must be strictly decreasing")
    P = np.atleast_2d(np.asarray(points, dtype=float))
    exact = np.asarray(u_exact(P, np.full(len(P), t)), dtype=float)
    per_point = np.empty((len(eps), len(P)))
    for i, e in enumerate(eps):
        per_point[i] = np.abs(exact - evaluate(spec, u_exact, P, t, e).value)
    if not np.all(np.isfinite(per_point)):
        raise InvalidInput("non-finite residual")
    res = per_point.max(axis=1)
    slope = float(np.polyfit(np.log(eps), np.log(res), 1)[0]) if np.all(res > 0) and len(eps) > 1 else math.nan
    return ConsistencyReport(eps, res, per_point, slope)


def family_objective(spec: OperatorSpec, hessian, u_t: float, family) -> np.ndarray:
    """Per-control ``(average - u) * 2 (n + 2) / eps^2`` for a quadratic-affine ``u``.

    For ``u`` quadratic in space with Hessian ``H`` and affine in time the
    ball average is exact and equals
    ``u + eps^2 (trace(A H A) - (n + 2) * window_coefficient * u_t) / (2 (n + 2))``.
    Sphere rules replace ``n + 2`` by ``n``.
    """
    H = linalg.as_dense(hessian)
    n = spec.n
    k = n if spec.variant == Variant.SPHERE_AVERAGE else n + 2
    tr = np.einsum("kji,jl,kli->k", family.matrices, H, family.matrices)
    return tr - k * spec.window_coefficients(family.b) * u_t


def continuum_objective(spec: OperatorSpec, hessian, u_t: float, eps: float, capped: bool = False) -> float:
    """Extremum of :func:`family_objective` over the undiscretised control set.

    Closed forms: det-1 infimum (MA1), block infimum (MA2), Pucci extremal
    sum, smallest eigenvalue (rank-one) and Courant-Fischer ``lambda_k``
    (sup-inf). Any other family is already exact. For the Monge-Ampere
    classes the ideal set has no cap unless ``capped`` is set, in which case
    the family's ``phi(eps)`` cap is kept.
    """
    H = linalg.as_dense(hessian)
    n = spec.n
    sphere = spec.variant == Variant.SPHERE_AVERAGE
    k = n if sphere else n + 2
    fam = spec.family(eps)
    params = getattr(fam, "params", {})
    lam = np.linalg.eigvalsh(H)
    cap = params.get("phi_cap", math.inf) if capped else math.inf
    if spec.cls == OperatorClass.MA1:
        res = linalg.inf_trace_det1_capped(H, cap) if math.isfinite(cap) else linalg.inf_trace_det1(H)
        coef = 1.0 if sphere else n / (n + 2)
        return _finite(res.value) - k * coef * u_t
    if spec.cls == OperatorClass.MA2:
        # the objective is trace(A H A) + b^2 (-u_t) for both rules
        return _finite(linalg.inf_trace_block(-u_t, H, cap).value)
    if spec.cls in (OperatorClass.INF, OperatorClass.SUPINF, OperatorClass.HEAT):
        kind = getattr(fam, "kind", "")
        if kind == "Pucci":
            th, Th = params["theta"], params["Theta"]
            spatial = th * lam[lam > 0].sum() + Th * lam[lam < 0].sum()
        elif kind == "RankOneAll":
            spatial = lam[0]
        elif kind == "SupInf" and "k" in params:
            spatial = lam[params["k"] - 1]
        else:
            obj = family_objective(spec, H, u_t, fam)
            return float(fam.reduce(obj)[0]) if isinstance(fam, SupInfFamily) else float(obj.min())
        return spatial - u_t
    raise InvalidInput(f"no closed-form objective for {spec.cls.value}")


def _finite(v):
    return -math.inf if v is linalg.NEG_INFINITY else float(v)


def _midrange_gap(spec, hessian, gradient, eps):
    if gradient is None:
        raise InvalidInput("the p-Laplacian gap needs the spatial gradient at the probe")
    H = linalg.as_dense(hessian)
    a = eps * np.asarray(gradient, dtype=float)
    B = eps**2 * H
    z = midrange_candidates(spec, eps)
    q = z @ a + 0.5 * np.einsum("pi,ij,pj->p", z, B, z)
    lo = linalg.ball_quadratic_min(a, B)
    hi = -linalg.ball_quadratic_min(-a, -B)
    # sampled max is below hi and sampled min above lo
    err = 0.5 * abs((q.max() - hi) + (q.min() - lo))
    return abs(spec.p - 2) / (spec.p + spec.n) * err


def family_gap(spec: OperatorSpec, hessian, u_t: float, eps: float, gradient=None, capped: bool = False) -> float:
    """``eps^2 / (2 (n + 2))`` times (discrete extremum - continuum extremum).

    This is exactly the consistency residual the control discretisation
    alone causes on a quadratic-affine classical solution. By default the
    continuum is the ideal control set, so for the Monge-Ampere classes the
    gap includes the ``phi(eps)`` cap truncation (nonzero when the ideal
    infimum needs stretches beyond the cap, e.g. ``f = 0`` in MA2). With
    ``capped=True`` only the sampling error inside the capped set remains.

    For the p-Laplacian class the gap is the midrange sampling error instead:
    the candidate max and min of the quadratic over the ball against the
    exact ones, which needs ``gradient``.
    """
    if spec.cls == OperatorClass.PLAPLACIAN:
        return _midrange_gap(spec, hessian, gradient, eps)
    fam = spec.family(eps)
    obj = family_objective(spec, hessian, u_t, fam)
    disc = float(fam.reduce(obj)[0]) if isinstance(fam, SupInfFamily) else float(obj.min())
    k = spec.n if spec.variant == Variant.SPHERE_AVERAGE else spec.n + 2
    return eps**2 / (2 * k) * abs(disc - continuum_objective(spec, hessian, u_t, eps, capped))
