"""The scheme as the value of a random game.

A random walk with ellipsoidal steps estimates the heat solution by Monte
Carlo. For Monge-Ampere, a controller can play the control the marched
scheme chose at the nearest node (greedy play). The game is played off the
lattice, with exact payoffs. It therefore lands near the exact value. The
marched value sits above that by the interpolation error on convex data,
which is O(h^2). Any fixed control does clearly worse.
"""

import math

import numpy as np

from mvf import GameSpec, ProblemSpec, catalog, march, matched_spacing, simulate_control, simulate_walk
from mvf.games import constant_strategy, greedy_strategy

lo, hi = np.full(2, -0.5), np.full(2, 0.5)

e = catalog.get("heat-quadratic")
walk = GameSpec.walk(np.eye(2), 1.0, lo, hi, 0.2, e.u)
est = simulate_walk(walk, [0.1, 0.2], 0.1, 50000, seed=11)
exact = e.u(np.array([[0.1, 0.2]]), 0.1)[0]
print(f"heat walk: {est.mean:.5f} +- {est.stderr:.5f}  (exact {exact:.5f})")

e = catalog.get("ma1-aniso")
op = e.operator(2, rotation_count=8, stretch_count=8)
rep = march(ProblemSpec(op, lo, hi, matched_spacing(2, 0.2, 2), 0.2, e.u, steps=6, exact=e.u, history=math.inf))
t = rep.solution.times[-1]
game = GameSpec(op, rep.family, lo, hi, 0.2, e.u)
x0 = np.zeros((1, 2))
greedy = simulate_control(game, x0[0], t, 20000, seed=4, strategy=greedy_strategy(rep))
fixed = simulate_control(game, x0[0], t, 20000, seed=4, strategy=constant_strategy(0))
print(f"\nma1-aniso at t={t:.3f}")
print(f"  exact value     {e.u(x0, t)[0]:.5f}")
print(f"  marched value   {rep.solution(x0, t)[0]:.5f}  (h^2 = {rep.solution.h**2:.5f})")
print(f"  greedy control  {greedy.mean:.5f} +- {greedy.stderr:.5f}")
print(f"  fixed control   {fixed.mean:.5f} +- {fixed.stderr:.5f}")
