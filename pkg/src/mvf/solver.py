"""Explicit time marching of the point-evaluation dynamic programming principles.

Each new time level is obtained by applying the operator, without its
``o(eps^2)`` remainder, at every interior node of a uniform lattice. Stencil
points between nodes are interpolated multilinearly and times between stored
levels linearly. Nodes outside the open box (the collar) are pinned to the
boundary data ``g``.
"""

from __future__ import annotations

import math
import os
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.ndimage import map_coordinates

from .controls import SupInfFamily
from .errors import Diverged, InvalidInput, InvalidWindow, OutOfDomain
from .operators import OperatorClass, OperatorSpec, Variant, evaluate

__all__ = ["GridFunction", "ProblemSpec", "SolveReport", "march", "convergence_study", "matched_spacing"]


def matched_spacing(n: int, eps: float, k: int = 1) -> float:
    """Spacing that puts the level-1 ball nodes of ``A = I`` exactly on lattice points."""
    return eps * math.sqrt(n / (n + 2)) / k


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MVF_THREADS", "1")))
    except ValueError:
        return 1


class GridFunction:
    """Values on a uniform lattice at uniformly spaced time levels.

    Calling the object as ``gf(points, t)`` interpolates multilinearly in
    space and linearly in time. Times before ``t0`` are answered by the data
    ``history`` callable when they lie within ``history_span`` of ``t0``.

    Parameters
    ----------
    origin : array
        Coordinates of lattice node ``(0, ..., 0)``.
    h : float
        Lattice spacing.
    shape : tuple of int
        Nodes per axis.
    t0, dt : float
        First time level and level spacing.
    levels : int
        Number of allocated levels.
    """

    def __init__(self, origin, h, shape, t0, dt, levels, history=None, history_span=0.0):
        self.origin = np.asarray(origin, dtype=float)
        self.h = float(h)
        self.shape = tuple(int(s) for s in shape)
        self.n = len(self.shape)
        self.t0 = float(t0)
        self.dt = float(dt)
        self.values = np.full((levels,) + self.shape, np.nan)
        self.available = 0
        self.history = history
        self.history_span = float(history_span)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.available)

    def nodes(self) -> np.ndarray:
        axes = [self.origin[d] + self.h * np.arange(s) for d, s in enumerate(self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, self.n)

    def set_level(self, k: int, values):
        self.values[k] = np.asarray(values, dtype=float).reshape(self.shape)
        self.available = max(self.available, k + 1)

    def level(self, k: int) -> np.ndarray:
        return self.values[k]

    def _coords(self, pts):
        c = (pts - self.origin) / self.h
        hi = np.array(self.shape) - 1
        bad = np.any((c < -1e-9) | (c > hi + 1e-9), axis=1)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise OutOfDomain(None, tuple(pts[i]))
        return np.clip(c, 0, hi).T

    def _spatial(self, k, coords):
        return map_coordinates(self.values[k], coords, order=1, mode="nearest")

    def __call__(self, points, t):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(pts),))
        out = np.empty(len(pts))
        pos = (t - self.t0) / self.dt
        early = pos < -1e-9
        if np.any(early):
            if self.history is None or np.any(self.t0 - t[early] > self.history_span * (1 + 1e-12)):
                raise InvalidWindow(f"time {t[early].min()!r} is before the first level {self.t0!r}")
            out[early] = self.history(pts[early], t[early])
        late = pos > self.available - 1 + 1e-9
        if np.any(late):
            raise InvalidWindow(f"time {t[late].max()!r} is after the last computed level")
        rest = ~early
        if not np.any(rest):
            return out
        p = np.clip(pos[rest], 0, self.available - 1)
        coords = self._coords(pts[rest])
        lo = np.floor(p + 1e-9).astype(int)
        lo = np.minimum(lo, self.available - 1)
        frac = p - lo
        frac[frac < 1e-9] = 0.0
        vals = np.empty(len(p))
        for k in np.unique(lo):
            sel = lo == k
            v = self._spatial(k, coords[:, sel])
            fr = frac[sel]
            if np.any(fr > 0):
                v = v + fr * (self._spatial(k + 1, coords[:, sel]) - v)
            vals[sel] = v
        out[rest] = vals
        return out


@dataclass
class ProblemSpec:
    """A marching problem on the box ``[lower, upper]``.

    ``g(x, t)`` supplies initial values at ``t0`` and lateral values in the
    collar at every level. Times before ``t0`` (needed when a control's
    offset exceeds the elapsed time) are read from ``g`` only within
    ``history``; otherwise ``InvalidWindow`` is raised.
    """

    operator: OperatorSpec
    lower: np.ndarray
    upper: np.ndarray
    h: float
    eps: float
    g: Callable
    t0: float = 0.0
    steps: int = 10
    exact: Callable | None = None
    history: float = 0.0
    family: object = None
    check_convexity: bool = True

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (self.operator.n,) or self.upper.shape != (self.operator.n,):
            raise InvalidInput("box corners must have the operator's dimension")
        if not (self.h > 0 and self.eps > 0 and self.steps >= 1):
            raise InvalidInput("need h > 0, eps > 0 and steps >= 1")
        if np.any(self.upper <= self.lower):
            raise InvalidInput("empty box")


@dataclass
class SolveReport:
    solution: GridFunction
    interior: np.ndarray
    argext: np.ndarray | None
    outer: np.ndarray | None
    family: object
    control_stats: list
    wall_clock: float
    error_table: dict | None = None
    extra: dict = field(default_factory=dict)

    @property
    def sup_error(self) -> float:
        if self.error_table is None:
            raise InvalidInput("no exact solution was supplied")
        return float(np.max(self.error_table["sup"]))

    def greedy_lookup(self, x, t):
        """Flat control index chosen by the scheme at the nearest interior node and level."""
        gf = self.solution
        X = np.atleast_2d(np.asarray(x, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(X),))
        nodes = self.extra["interior_nodes"]
        idx = np.rint((X - gf.origin) / gf.h).astype(int)
        idx = np.clip(idx, 0, np.array(gf.shape) - 1)
        flat = np.ravel_multi_index(idx.T, gf.shape)
        pos = self.extra["interior_position"][flat]
        if np.any(pos < 0):
            # snap to the nearest interior node
            miss = pos < 0
            d = np.sum((X[miss, None, :] - nodes[None]) ** 2, axis=-1)
            pos[miss] = np.argmin(d, axis=1)
        lvl = np.clip(np.rint((t - gf.t0) / gf.dt).astype(int), 1, len(self.argext)) - 1
        outer = None if self.outer is None else self.outer[lvl, pos]
        return self.argext[lvl, pos], outer


def _stencil_radius(spec: ProblemSpec, family) -> float:
    op = spec.operator
    if op.cls == OperatorClass.PLAPLACIAN:
        return spec.eps
    norms = np.linalg.norm(family.matrices, ord=2, axis=(1, 2))
    rule = op.spatial_rule()
    return spec.eps * float(norms.max()) * float(np.linalg.norm(rule.nodes, axis=1).max())


def _lattice_offsets(n, h, r):
    k = int(math.floor(r / h + 1e-9))
    ax = np.arange(-k, k + 1) * h
    pts = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), -1).reshape(-1, n)
    return pts[np.sum(pts**2, 1) <= r * r * (1 + 1e-12)]


def march(spec: ProblemSpec) -> SolveReport:
    """Solve the point-evaluation DPP forward in time.

    The step is the smallest per-control offset; level ``k + 1`` reads
    earlier levels only. Returns the full space-time solution, the extremal
    control per interior node and level, and an error table when
    ``spec.exact`` is given.

    Raises
    ------
    InvalidWindow
        A control offset reaches before ``t0 - history``.
    Diverged
        A value exceeds ``1e12 * (1 + max|g|)`` or is not finite.
    """
    start = _time.perf_counter()
    op = spec.operator
    if op.variant != Variant.POINT_EVAL:
        op = replace(op, variant=Variant.POINT_EVAL)
    n, h, eps = op.n, spec.h, spec.eps
    family = op.family(eps) if spec.family is None else spec.family
    if op.cls == OperatorClass.PLAPLACIAN:
        dt = 0.5 * eps**2
    else:
        dt = float(op.offsets(eps, family).min())
    collar = _stencil_radius(spec, family) + h
    cells = np.ceil(collar / h - 1e-9).astype(int)
    origin = spec.lower - cells * h
    shape = np.floor((spec.upper + cells * h - origin) / h + 1e-9).astype(int) + 1
    gf = GridFunction(origin, h, shape, spec.t0, dt, spec.steps + 1, spec.g, spec.history)
    nodes = gf.nodes()
    tol = 1e-9 * h
    inside = np.all((nodes > spec.lower + tol) & (nodes < spec.upper - tol), axis=1)
    interior = np.flatnonzero(inside)
    if len(interior) == 0:
        raise InvalidInput("no interior lattice nodes; refine h or enlarge the box")
    position = np.full(len(nodes), -1)
    position[interior] = np.arange(len(interior))
    X = nodes[interior]
    collar_nodes = nodes[~inside]

    g0 = np.asarray(spec.g(nodes, np.full(len(nodes), spec.t0)), dtype=float)
    if spec.check_convexity and op.cls in (OperatorClass.MA1, OperatorClass.MA2):
        _check_convex(g0.reshape(gf.shape), h)
    gf.set_level(0, g0)
    gmax = float(np.max(np.abs(g0)))
    extra_offsets = _lattice_offsets(n, h, eps) if op.cls == OperatorClass.PLAPLACIAN else None

    supinf = isinstance(family, SupInfFamily)
    argext = np.zeros((spec.steps, len(X)), dtype=np.int64) if op.cls != OperatorClass.PLAPLACIAN else None
    outer = np.zeros((spec.steps, len(X)), dtype=np.int64) if supinf else None
    stats = []
    threads = _threads()
    chunks = np.array_split(np.arange(len(X)), max(1, threads * 4)) if threads > 1 else [np.arange(len(X))]

    err = None
    if spec.exact is not None:
        err = {"time": [], "sup": [], "mean": []}
        _record_error(err, gf, 0, nodes, interior, spec.exact)

    for k in range(spec.steps):
        t_new = spec.t0 + (k + 1) * dt
        level = np.empty(len(nodes))
        level[~inside] = spec.g(collar_nodes, np.full(len(collar_nodes), t_new))
        gmax = max(gmax, float(np.max(np.abs(level[~inside]), initial=0.0)))

        def work(idx):
            return evaluate(op, gf, X[idx], t_new, eps, family=family, extra_offsets=extra_offsets)

        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                parts = list(ex.map(work, chunks))
        else:
            parts = [work(chunks[0])]
        vals = np.concatenate([np.atleast_1d(p.value) for p in parts])
        level[interior] = vals
        bound = 1e12 * (1 + gmax)
        bad = ~np.isfinite(vals) | (np.abs(vals) > bound)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise Diverged((tuple(X[i]), t_new), float(vals[i]))
        if argext is not None:
            argext[k] = np.concatenate([np.atleast_1d(p.argext) for p in parts])
            if supinf:
                outer[k] = np.concatenate([np.atleast_1d(p.outer) for p in parts])
            counts = np.bincount(argext[k], minlength=1)
            top = int(np.argmax(counts))
            stats.append(
                dict(
                    level=k + 1,
                    distinct_controls=int(np.count_nonzero(counts)),
                    most_common=top,
                    most_common_fraction=float(counts[top] / len(X)),
                )
            )
        gf.set_level(k + 1, level)
        if err is not None:
            _record_error(err, gf, k + 1, nodes, interior, spec.exact)

    if err is not None:
        err = {key: np.asarray(v) for key, v in err.items()}
    return SolveReport(
        solution=gf,
        interior=interior,
        argext=argext,
        outer=outer,
        family=family,
        control_stats=stats,
        wall_clock=_time.perf_counter() - start,
        error_table=err,
        extra=dict(interior_nodes=X, interior_position=position, dt=dt, collar=cells * h),
    )


def _record_error(err, gf, k, nodes, interior, exact):
    t = gf.t0 + k * gf.dt
    diff = np.abs(gf.level(k).reshape(-1)[interior] - exact(nodes[interior], np.full(len(interior), t)))
    err["time"].append(t)
    err["sup"].append(float(diff.max()))
    err["mean"].append(float(diff.mean()))


def _check_convex(values, h):
    """Second differences along every axis must be nonnegative up to rounding."""
    tol = 1e-10 * (1.0 + float(np.abs(values).max()))
    for ax in range(values.ndim):
        d2 = np.diff(values, 2, axis=ax)
        if np.any(d2 < -tol):
            raise InvalidInput("initial data is not convex in x within tolerance")


def convergence_study(spec: ProblemSpec, exact, eps_list, refinement_list=(1,), h_of_eps=None, final_time=None):
    """Sup and mean errors of :func:`march` over ``eps`` and family refinements.

    ``refinement_list`` entries multiply the family counts of the operator.
    ``h_of_eps`` maps ``eps`` to a spacing (default: keep ``spec.h``).
    With ``final_time`` the number of steps follows from the step size;
    otherwise ``spec.steps`` is kept. Returns a dict of row lists plus
    ``monotone_eps`` / ``monotone_refinement`` flags (errors non-increasing
    along each axis of the table).
    """
    rows = []
    for eps in eps_list:
        for r in refinement_list:
            op = _refined(spec.operator, r)
            h = spec.h if h_of_eps is None else float(h_of_eps(eps))
            fam = op.family(eps)
            steps = spec.steps
            if final_time is not None:
                dt = 0.5 * eps**2 if op.cls == OperatorClass.PLAPLACIAN else float(replace(op, variant="point").offsets(eps, fam).min())
                steps = max(1, int(round((final_time - spec.t0) / dt)))
            sp = replace(spec, operator=op, eps=eps, h=h, steps=steps, exact=exact, family=None)
            rep = march(sp)
            rows.append(
                dict(
                    eps=eps,
                    refinement=r,
                    h=h,
                    steps=steps,
                    family_size=len(rep.family),
                    sup=float(rep.error_table["sup"][-1]),
                    mean=float(rep.error_table["mean"][-1]),
                    max_sup=rep.sup_error,
                )
            )
    sup = np.array([[row["sup"] for row in rows if row["eps"] == e] for e in eps_list])
    slack = 1e-12
    monotone_eps = bool(np.all(np.diff(sup, axis=0) <= slack)) if len(eps_list) > 1 else True
    monotone_ref = bool(np.all(np.diff(sup, axis=1) <= slack)) if len(refinement_list) > 1 else True
    return dict(rows=rows, monotone_eps=monotone_eps, monotone_refinement=monotone_ref)


def _refined(op: OperatorSpec, r: int) -> OperatorSpec:
    if r == 1:
        return op
    return replace(
        op,
        rotation_count=op.rotation_count * r,
        stretch_count=op.stretch_count * r,
        b_count=op.b_count * r,
        direction_count=op.direction_count * r,
    )
