"""Marching the dynamic programming scheme forward in time.

The scheme is run on a box with boundary and initial data taken from the
exact solution. On quadratic solutions whose optimal control lies in the
family, the lattice is matched to the ball nodes and the error is round-off.
A smooth non-quadratic heat solution shows second-order convergence.
"""

import math

import numpy as np

from mvf import ProblemSpec, catalog, convergence_study, march, matched_spacing

lo, hi = np.full(2, -0.5), np.full(2, 0.5)
for key in ("ma1-quadratic", "pucci-quadratic", "lambda1-saddle"):
    e = catalog.get(key)
    op = e.operator(2)
    spec = ProblemSpec(op, lo, hi, matched_spacing(2, 0.2, 3), 0.2, e.u, steps=6, exact=e.u, history=math.inf)
    rep = march(spec)
    print(f"{key:16s} sup error {rep.sup_error:.2e} after 6 steps, {rep.wall_clock:.2f}s")

e = catalog.get("heat-cosine")
base = ProblemSpec(e.operator(1), [-1.0], [1.0], matched_spacing(1, 0.2), 0.2, e.u, exact=e.u, history=math.inf)
res = convergence_study(base, e.u, [0.2, 0.1, 0.05], h_of_eps=lambda eps: matched_spacing(1, eps), final_time=0.2)
sup = [r["sup"] for r in res["rows"]]
print("\nheat-cosine n=1 up to t=0.2")
for r, s in zip(res["rows"], sup):
    print(f"  eps {r['eps']:.3f}: sup error {s:.3e}")
print("  observed orders:", ", ".join(f"{math.log2(a / b):.2f}" for a, b in zip(sup, sup[1:])))
