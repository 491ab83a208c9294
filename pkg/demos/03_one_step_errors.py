"""One-step discretization error of KLMC and RKLMC, measured by coupling.

A coarse step and a fine-grid reference of the kinetic diffusion share one
Brownian path, so their L2 distance is the local error of the coarse step.
Takes about ten seconds.
"""

# %%
import numpy as np

from langevin_mc import make_gaussian
from langevin_mc.coupling import one_step_error_report
from langevin_mc.harness.validate import klmc_velocity_slope

pot = make_gaussian(np.diag(np.geomspace(0.1, 1.0, 4)))
gamma = 5.0 * pot.M
etas = (0.05, 0.1, 0.2)

# %%
vel = []
for eta in etas:
    rep = one_step_error_report(pot, gamma, eta / gamma, replicas=4000, seed=0)
    print(f"eta={eta}")
    for r in rep.rows:
        print(f"  {r.name:14s} measured={r.measured:.3e}  bound={r.bound:.3e}")
    vel.append(rep.row("klmc_v").measured)

# %%
# The KLMC velocity error scales like eta^2.
print(f"log-log slope of the KLMC velocity error: {klmc_velocity_slope(etas, vel):.3f}")
