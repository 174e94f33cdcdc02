"""Monte Carlo simulation of the controlled random walks and games.

A token at ``(x, t)`` moves to ``x + eps A y`` with ``y`` uniform in the
unit ball and the clock goes back by the control's offset; the game stops
the first time ``x`` leaves the open box or ``t`` reaches ``t_min``, and the
payoff is ``g`` at the landed point plus the accumulated running payoff.

Every trajectory ``i`` draws from its own Philox stream keyed by
``(seed, i)``, so results do not depend on chunking or thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .controls import ControlFamily, SupInfFamily, single_control
from .errors import InvalidControl, InvalidInput
from .operators import OperatorSpec

__all__ = [
    "GameSpec",
    "TrajectoryRecord",
    "ValueEstimate",
    "simulate_walk",
    "simulate_control",
    "simulate_two_player",
    "constant_strategy",
    "greedy_strategy",
    "greedy_pair",
    "trajectory_stream",
]

_CHUNK = 4096
_BLOCK = 8
EXIT_SPACE, EXIT_TIME, EXIT_BOTH = 1, 2, 3


@dataclass(frozen=True)
class GameSpec:
    """Domain, controls and payoffs of a walk or game.

    ``operator`` fixes the per-control time offsets and the running payoff
    (its ``eps^2`` correction evaluated at the current state).
    """

    operator: OperatorSpec
    family: ControlFamily | SupInfFamily
    lower: np.ndarray
    upper: np.ndarray
    eps: float
    g: Callable
    t_min: float = 0.0
    max_steps: int | None = None

    @classmethod
    def walk(cls, A, b, lower, upper, eps, g, t_min=0.0):
        """Random walk with the fixed control ``(A, b)`` and no running payoff."""
        fam = single_control(A, b)
        op = OperatorSpec("Inf", fam.dim, "point", fam)
        return cls(op, fam, np.asarray(lower, float), np.asarray(upper, float), eps, g, t_min)

    def offsets(self) -> np.ndarray:
        return self.operator.offsets(self.eps, self.family)

    def running(self, X, t) -> np.ndarray:
        return self.operator.correction(X, t, self.eps)

    def inside(self, X) -> np.ndarray:
        return np.all((X > self.lower) & (X < self.upper), axis=1)

    def step_cap(self, t_start) -> int:
        cap = math.ceil((float(np.max(t_start)) - self.t_min) / float(self.offsets().min()) * (1 + 1e-9)) + 1
        return cap if self.max_steps is None else min(cap, self.max_steps)


@dataclass
class TrajectoryRecord:
    positions: np.ndarray
    times: np.ndarray
    controls: np.ndarray
    running_payoff: float
    exit_flag: int

    @property
    def spatial_exit(self) -> bool:
        return bool(self.exit_flag & EXIT_SPACE)

    @property
    def time_exit(self) -> bool:
        return bool(self.exit_flag & EXIT_TIME)


@dataclass
class ValueEstimate:
    mean: float
    stderr: float
    count: int
    seed: int
    steps_mean: float = 0.0
    records: list = field(default_factory=list)


def trajectory_stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for trajectory ``index`` of run ``seed``."""
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) + int(index)))


def _ball_candidates(n: int) -> int:
    return 16 if n <= 2 else 32


def _draw(gens, rows, n, K):
    """One block of cube candidates per selected trajectory, shape (len(rows), BLOCK, K, n)."""
    return np.stack([2.0 * gens[r].random((_BLOCK, K, n)) - 1.0 for r in rows])


def _accept(cands, gens, rows):
    """First candidate inside the unit ball; rare misses fall back to fresh draws."""
    inside = np.sum(cands**2, axis=-1) <= 1.0
    first = np.argmax(inside, axis=-1)
    y = np.take_along_axis(cands, first[..., None, None], axis=-2)[..., 0, :]
    miss = ~inside.any(axis=-1)
    for r, s in zip(*np.nonzero(miss)):
        gen = gens[rows[r]]
        while True:
            c = 2.0 * gen.random(cands.shape[-1]) - 1.0
            if c @ c <= 1.0:
                y[r, s] = c
                break
    return y


def _check_indices(idx, lo, hi, what="control"):
    idx = np.asarray(idx)
    if idx.dtype.kind not in "iu" or np.any(idx < lo) or np.any(idx >= hi):
        raise InvalidControl(f"strategy returned a {what} outside the family")
    return idx.astype(np.int64)


def _run_chunk(spec, start, t_start, lo, hi, seed, choose, n_records):
    n = len(start)
    K = _ball_candidates(n)
    gens = [trajectory_stream(seed, i) for i in range(lo, hi)]
    m = hi - lo
    X = np.tile(start, (m, 1))
    T = np.full(m, float(t_start))
    pay = np.zeros(m)
    steps = np.zeros(m, dtype=np.int64)
    flag = np.zeros(m, dtype=np.int64)
    active = np.arange(m)
    offsets = spec.offsets()
    mats = spec.family.matrices
    cap = spec.step_cap(t_start)
    rec = min(n_records, m)
    hist = [([X[i].copy()], [T[i]], []) for i in range(rec)]
    buf = {}
    step = 0
    if not spec.inside(X[:1])[0] or t_start <= spec.t_min:
        raise InvalidInput("start must lie in the open space-time cylinder")
    while len(active):
        if step >= cap:
            raise InvalidInput(f"trajectory exceeded the hard cap of {cap} steps")
        slot = step % _BLOCK
        if slot == 0:
            cands = _draw(gens, active, n, K)
            buf = dict(zip(active.tolist(), _accept(cands, gens, active)))
        j = choose(X[active], T[active])
        pay[active] += spec.running(X[active], T[active])
        y = np.stack([buf[a][slot] for a in active.tolist()])
        X[active] += spec.eps * np.einsum("kij,kj->ki", mats[j], y)
        T[active] -= offsets[j]
        steps[active] += 1
        for i in active[active < rec]:
            hist[i][0].append(X[i].copy())
            hist[i][1].append(T[i])
            hist[i][2].append(int(j[np.searchsorted(active, i)]))
        out_space = ~spec.inside(X[active])
        out_time = T[active] <= spec.t_min
        done = out_space | out_time
        flag[active[done]] = out_space[done] * EXIT_SPACE + out_time[done] * EXIT_TIME
        active = active[~done]
        step += 1
    total = np.asarray(spec.g(X, T), dtype=float) + pay
    records = [
        TrajectoryRecord(np.array(p), np.array(t), np.array(c, dtype=np.int64), float(pay[i]), int(flag[i]))
        for i, (p, t, c) in enumerate(hist)
    ]
    return total, steps, records


def _simulate(spec, start, t_start, count, seed, choose, records):
    if count <= 0:
        raise InvalidInput("count must be positive")
    start = np.asarray(start, dtype=float)
    values = np.empty(count)
    steps = np.empty(count, dtype=np.int64)
    bounds = [(lo, min(count, lo + _CHUNK)) for lo in range(0, count, _CHUNK)]
    threads = max(1, int(os.environ.get("MVF_THREADS", "1") or 1))

    def work(b):
        lo, hi = b
        return _run_chunk(spec, start, t_start, lo, hi, seed, choose, records - lo if records > lo else 0)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(work, bounds))
    else:
        results = [work(b) for b in bounds]
    recs = []
    for (lo, hi), (v, s, r) in zip(bounds, results):
        values[lo:hi] = v
        steps[lo:hi] = s
        recs.extend(r)
    stderr = float(values.std(ddof=1) / math.sqrt(count)) if count > 1 else 0.0
    return ValueEstimate(float(values.mean()), stderr, count, seed, float(steps.mean()), recs[:records])


def simulate_walk(spec: GameSpec, start, t_start: float, count: int, seed: int = 0, records: int = 0) -> ValueEstimate:
    """Estimate ``E[g(x_tau, t_tau)]`` for the walk with the single control of ``spec``."""
    if len(spec.family) != 1:
        raise InvalidInput("simulate_walk needs a family with exactly one control")
    return _simulate(spec, start, t_start, count, seed, lambda X, t: np.zeros(len(X), dtype=np.int64), records)


def simulate_control(spec: GameSpec, start, t_start: float, count: int, seed: int = 0, strategy=None, records: int = 0):
    """Estimate ``E[g + running payoff]`` when one controller picks controls by ``strategy``.

    ``strategy(X, t)`` returns one flat family index per row of ``X``.
    Without a strategy the first control (the identity for det-1 families)
    is used throughout.

    Raises
    ------
    InvalidControl
        If the strategy returns an index outside the family.
    """
    m = len(spec.family)
    strategy = strategy or constant_strategy(0)

    def choose(X, t):
        return _check_indices(strategy(X, t), 0, m)

    return _simulate(spec, start, t_start, count, seed, choose, records)


def simulate_two_player(spec: GameSpec, start, t_start: float, count: int, seed: int, strategy_I, strategy_II, records: int = 0):
    """Two-player sup-inf game: player I picks a group, player II a control in it.

    ``strategy_I(X, t)`` returns group indices and ``strategy_II(X, t, group)``
    flat control indices, which must belong to the chosen group.
    """
    fam = spec.family
    if not isinstance(fam, SupInfFamily):
        raise InvalidInput("the two-player game needs a SupInfFamily")

    def choose(X, t):
        grp = _check_indices(strategy_I(X, t), 0, fam.group_count, "group")
        j = _check_indices(strategy_II(X, t, grp), 0, len(fam))
        if np.any(fam.group[j] != grp):
            raise InvalidControl("player II chose a control outside player I's group")
        return j

    return _simulate(spec, start, t_start, count, seed, choose, records)


def constant_strategy(index: int):
    return lambda X, t: np.full(len(X), int(index), dtype=np.int64)


def greedy_strategy(report):
    """Controller strategy that replays the scheme's extremal control at the nearest node and level."""
    return lambda X, t: report.greedy_lookup(X, t)[0]


def greedy_pair(report):
    """``(strategy_I, strategy_II)`` replaying the scheme's sup-inf choices."""
    def first(X, t):
        return report.greedy_lookup(X, t)[1]

    def second(X, t, grp):
        inner, outer = report.greedy_lookup(X, t)
        if np.array_equal(outer, grp):
            return inner
        # player I deviated: best response in its group from the stored averages is unavailable,
        # so fall back to the group's first control
        starts = np.r_[0, np.flatnonzero(np.diff(report.family.group)) + 1]
        return np.where(outer == grp, inner, starts[grp])

    return first, second
