"""Why Monge-Ampere becomes a control problem.

For a PSD matrix M, minimising trace(A^t M A) over det A = 1 recovers
n det(M)^{1/n}. This script checks that identity against random search,
then shows what happens once the stretches of A are capped.
"""

import numpy as np

from mvf import linalg

rng = np.random.default_rng(0)
n = 3
G = rng.normal(size=(n, n))
M = G @ G.T + 0.1 * np.eye(n)

res = linalg.inf_trace_det1(M)
print(f"n det(M)^(1/n)          = {n * linalg.det_root(M):.6f}")
print(f"closed-form infimum     = {res.value:.6f}")

# random det-1 matrices never beat it
best = np.inf
for _ in range(20000):
    A = rng.normal(size=(n, n))
    d = np.linalg.det(A)
    if abs(d) < 1e-3:
        continue
    A /= np.sign(d) * abs(d) ** (1 / n)
    best = min(best, np.trace(A.T @ M @ A))
print(f"best of 20000 samples   = {best:.6f}")

# the optimiser needs stretches up to theta0; below that the cap binds
t0 = linalg.theta0(M)
print(f"\ntheta0 (largest stretch of the optimiser) = {t0:.4f}")
for factor in (2.0, 1.01, 0.9, 0.7):
    capped = linalg.inf_trace_det1_capped(M, factor * t0)
    print(f"cap {factor:4.2f} theta0 -> {capped.value:.6f}  truncated={capped.truncated}")

# an indefinite matrix has no lower bound
print("\nindefinite:", linalg.inf_trace_det1(np.diag([1.0, -1.0, 2.0])).value)
