"""Exact W2 error of LMC and KLMC on a Gaussian target, against the bounds.

On a Gaussian target both chains stay Gaussian, so the law after n steps is
available in closed form and W2 needs no sampling at all.
"""

# %%
import math

import numpy as np

from langevin_mc.metrics import klmc_gaussian_recursion, lmc_gaussian_recursion, GaussianLaw
from langevin_mc.theory import bound_curve, plan_klmc, plan_lmc

diag = np.geomspace(1.0, 10.0, 4)
A, mean, p = np.diag(diag), np.zeros(4), 4
kappa = diag.max() / diag.min()
w2_start = math.sqrt(np.sum(1.0 / diag))  # W2 from a point mass at the mode

# %%
plan = plan_klmc(0.1, kappa, M=diag.max())
trace = klmc_gaussian_recursion(A, mean, plan.gamma, plan.h, None, plan.n, every=max(plan.n // 8, 1))
bounds = bound_curve("klmc", plan, p, trace.n, w2_start)
print(f"KLMC: h={plan.h:.3e}, gamma={plan.gamma:g}, n={plan.n}")
for n, w, b in zip(trace.n, trace.w2_exact, bounds):
    print(f"  n={n:6d}  W2={w:.5f}  bound={b:.5f}")

# %%
# LMC needs many more steps for the same target.
plan = plan_lmc(0.1, kappa, M=diag.max())
trace = lmc_gaussian_recursion(A, mean, plan.h, GaussianLaw.point(mean), plan.n,
                               every=max(plan.n // 8, 1))
bounds = bound_curve("lmc", plan, p, trace.n, w2_start)
print(f"LMC: h={plan.h:.3e}, n={plan.n}")
for n, w, b in zip(trace.n, trace.w2_exact, bounds):
    print(f"  n={n:6d}  W2={w:.5f}  bound={b:.5f}")
