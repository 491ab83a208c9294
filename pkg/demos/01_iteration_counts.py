"""Iteration counts needed by each sampler for a W2 accuracy target.

Run with ``python demos/01_iteration_counts.py``.
"""

# %%
# The planners turn an accuracy ``eps`` (in units of sqrt(p/m)) and a condition
# number into a step size and a number of iterations.
from langevin_mc import plan_for
from langevin_mc.harness.table1 import compare_table1

for kind in ("lmc", "rlmc", "klmc", "rklmc"):
    plan = plan_for(kind, eps=0.1, kappa=1e3)
    g = "" if plan.gamma is None else f", gamma={plan.gamma:g}"
    print(f"{kind:6s} h={plan.h:.3e}{g}, n={plan.n:,}")

# %%
# Randomizing the gradient evaluation point buys a better dependence on kappa,
# and the kinetic samplers improve it again.  The full grid, next to the
# two-significant-figure reference values:
_, comps = compare_table1()
for c in comps:
    flag = "" if c.match else f"   printed {c.printed:.2g} (ratio {c.ratio:.2f})"
    print(f"{c.algorithm:6s} eps={c.eps:<7g} kappa={c.kappa:<8g} n={c.n_2sf:.2g}{flag}")
