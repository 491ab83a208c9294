"""Langevin Monte Carlo samplers (LMC, RLMC, KLMC, RKLMC) with W2 error bounds.

Submodules: ``potentials`` (targets), ``coeffs`` (stable step coefficients and
noise covariances), ``samplers`` (kernels and the chain runner), ``coupling``
(fine-grid references and one-step error measurement), ``theory`` (bounds and
planners), ``metrics`` (Wasserstein-2 tools) and ``harness`` (CLI).
"""

from .potentials import PotentialSpec, make_gaussian, make_logistic
from .samplers import ChainState, KernelConfig, Kind, run_chain
from .theory import bound_for, plan_for, table1

__version__ = "0.1.0"

__all__ = [
    "PotentialSpec", "make_gaussian", "make_logistic",
    "ChainState", "KernelConfig", "Kind", "run_chain",
    "bound_for", "plan_for", "table1",
]
