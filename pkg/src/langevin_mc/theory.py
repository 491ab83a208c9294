"""Closed-form W2 error bounds, step-size planners and the iteration-count table.

All bounds are upper bounds on ``W2(nu_n, pi)`` for the position marginal.
Precondition violations never stop an evaluation; they are reported through
``BoundReport.valid`` and ``BoundReport.violated``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .samplers import Kind

__all__ = [
    "BoundInputs",
    "BoundReport",
    "Plan",
    "lmc_bound",
    "rlmc_bound",
    "klmc_bound",
    "rklmc_bound",
    "bound_for",
    "bound_curve",
    "plan_lmc",
    "plan_rlmc",
    "plan_klmc",
    "plan_rklmc",
    "plan_for",
    "TableCell",
    "table1",
    "table1_csv",
    "table1_text",
    "round_2sf",
    "TABLE1_EPS",
    "TABLE1_KAPPA",
]

TABLE1_EPS = (1e-1, 1e-3, 1e-5)
TABLE1_KAPPA = (1e1, 1e3, 1e5, 1e7, 1e9, 1e11)


@dataclass(frozen=True)
class BoundInputs:
    """Arguments shared by the bound evaluators.

    ``w2_init`` is ``W2(nu_0, pi)`` and ``ef0`` is ``E[f(theta_0) - f(theta_*)]``.
    """

    m: float
    M: float
    p: int
    h: float
    n: int
    w2_init: float = 0.0
    ef0: float = 0.0
    gamma: Optional[float] = None

    def __post_init__(self):
        if not (0 < self.m <= self.M):
            raise ValueError(f"need 0 < m <= M, got m={self.m}, M={self.M}")
        if self.h <= 0 or self.p < 1 or self.n < 0:
            raise ValueError("need h > 0, p >= 1 and n >= 0")

    @property
    def kappa(self) -> float:
        return self.M / self.m

    def with_n(self, n: int) -> "BoundInputs":
        return BoundInputs(self.m, self.M, self.p, self.h, n, self.w2_init, self.ef0, self.gamma)


@dataclass(frozen=True)
class BoundReport:
    """``total`` is the sum of ``terms``; ``violated`` lists failed preconditions."""

    total: float
    terms: dict
    valid: bool
    violated: tuple = ()


def _report(terms, checks):
    violated = tuple(name for name, ok in checks if not ok)
    return BoundReport(float(sum(terms.values())), terms, not violated, violated)


def _need_gamma(b: BoundInputs, name):
    if b.gamma is None or b.gamma <= 0:
        raise ValueError(f"{name} needs gamma > 0")
    return b.gamma


def _power_one_minus(x, n):
    """``|1 - x|^n``; through log1p so that ``x`` far below machine epsilon still counts."""
    if n == 0:
        return 1.0
    if x < 1.0:
        return math.exp(n * math.log1p(-x))
    return abs(1.0 - x) ** n


def lmc_bound(b: BoundInputs) -> BoundReport:
    """``(1 - mh)^n W0 + sqrt(2 M h p / m)``, valid for ``Mh <= 1``.

    The contraction factor uses exponent ``+n``; ``|1 - mh|`` is taken so that
    the value stays a distance outside the valid range.
    """
    mh, Mh = b.m * b.h, b.M * b.h
    terms = {
        "initial": _power_one_minus(mh, b.n) * b.w2_init,
        "discretization": math.sqrt(2.0 * Mh * b.p / b.m),
    }
    return _report(terms, [("Mh<=1", Mh <= 1.0)])


def rlmc_bound(b: BoundInputs) -> BoundReport:
    """``1.11 e^{-mnh/2} W0 + (2.4 sqrt(kappa Mh) + 1.77) Mh sqrt(p/m)``."""
    Mh = b.M * b.h
    terms = {
        "initial": 1.11 * math.exp(-b.m * b.n * b.h / 2.0) * b.w2_init,
        "discretization": (2.4 * math.sqrt(b.kappa * Mh) + 1.77) * Mh * math.sqrt(b.p / b.m),
    }
    return _report(terms, [("Mh+sqrt(kappa)(Mh)^1.5<=1/4",
                            Mh + math.sqrt(b.kappa) * Mh**1.5 <= 0.25)])


def klmc_bound(b: BoundInputs) -> BoundReport:
    """``2 rho^n W0 + 0.05 sqrt(rho^n ef0 / m) + 0.9 eta sqrt(kappa p / m)``, ``rho = e^{-mh}``."""
    gamma = _need_gamma(b, "klmc_bound")
    eta = gamma * b.h
    rho_n = math.exp(-b.m * b.h * b.n)
    terms = {
        "initial": 2.0 * rho_n * b.w2_init,
        "potential_gap": 0.05 * math.sqrt(rho_n * b.ef0 / b.m),
        "discretization": 0.9 * eta * math.sqrt(b.kappa * b.p / b.m),
    }
    return _report(terms, [("gamma>=5M", gamma >= 5.0 * b.M),
                           ("sqrt(kappa)*gamma*h<=0.1", math.sqrt(b.kappa) * eta <= 0.1)])


def rklmc_bound(b: BoundInputs) -> BoundReport:
    """``1.6 rho^n W0 + 0.1 sqrt(rho^n ef0 / m) + 0.2 eta^3 sqrt(kappa p/m) + 10 eta^1.5 sqrt(p/m)``."""
    gamma = _need_gamma(b, "rklmc_bound")
    eta = gamma * b.h
    rho_n = math.exp(-b.m * b.h * b.n)
    terms = {
        "initial": 1.6 * rho_n * b.w2_init,
        "potential_gap": 0.1 * math.sqrt(rho_n * b.ef0 / b.m),
        "discretization_cubic": 0.2 * eta**3 * math.sqrt(b.kappa * b.p / b.m),
        "discretization": 10.0 * eta**1.5 * math.sqrt(b.p / b.m),
    }
    return _report(terms, [("gamma>=5M", gamma >= 5.0 * b.M),
                           ("gamma*h<=0.1*kappa^(-1/6)", eta <= 0.1 * b.kappa ** (-1.0 / 6.0))])


_BOUNDS = {Kind.LMC: lmc_bound, Kind.RLMC: rlmc_bound, Kind.KLMC: klmc_bound, Kind.RKLMC: rklmc_bound}


def bound_for(kind, b: BoundInputs) -> BoundReport:
    return _BOUNDS[Kind.parse(kind)](b)


@dataclass(frozen=True)
class Plan:
    """Step size, friction and iteration count chosen for a target accuracy.

    ``n`` is the ceiling of ``n_exact``; the guarantee is
    ``W2 <= target_eps * sqrt(p / m)``.
    """

    kind: Kind
    h: float
    n: int
    target_eps: float
    kappa: float
    M: float
    gamma: Optional[float] = None
    n_exact: float = field(default=float("nan"), compare=False)

    @property
    def m(self) -> float:
        return self.M / self.kappa

    @property
    def eta(self) -> Optional[float]:
        return None if self.gamma is None else self.gamma * self.h

    def inputs(self, p: int, w2_init: float = 0.0, ef0: float = 0.0, n: Optional[int] = None):
        return BoundInputs(self.m, self.M, p, self.h, self.n if n is None else n, w2_init, ef0,
                           self.gamma)


def _log_factor(eps, kappa, M, w2_init, p):
    out = math.log(20.0 / eps)
    if w2_init is not None:
        if p is None:
            raise ValueError("p is needed with w2_init")
        m = M / kappa
        # zero initial distance: the correction is -inf, keep at least one step
        if w2_init > 0:
            out += 0.5 * math.log(m * w2_init**2 / p)
        else:
            out = -math.inf
    return out


def _ceil(x):
    return max(1, math.ceil(x)) if math.isfinite(x) else 1


def _check_eps(eps, upper=1.0):
    if not (0 < eps < upper):
        raise ValueError(f"eps must lie in (0, {upper}), got {eps}")


def plan_lmc(eps, kappa, M=1.0, w2_init=None, p=None) -> Plan:
    """``Mh = 0.5 (19/20)^2 eps^2``, ``n = 2.22 kappa / eps^2 * log(20/eps)``."""
    _check_eps(eps)
    h = 0.5 * (19.0 / 20.0) ** 2 * eps**2 / M
    n_exact = 2.22 * kappa / eps**2 * _log_factor(eps, kappa, M, w2_init, p)
    return Plan(Kind.LMC, h, _ceil(n_exact), eps, kappa, M, None, n_exact)


def plan_rlmc(eps, kappa, M=1.0, w2_init=None, p=None) -> Plan:
    """``Mh = eps / (1.5 + (6.5 kappa eps)^{1/3})``."""
    _check_eps(eps)
    h = eps / (1.5 + (6.5 * kappa * eps) ** (1.0 / 3.0)) / M
    n_exact = (3.0 * kappa / eps + 3.8 * kappa ** (4.0 / 3.0) / eps ** (2.0 / 3.0)) * _log_factor(
        eps, kappa, M, w2_init, p)
    return Plan(Kind.RLMC, h, _ceil(n_exact), eps, kappa, M, None, n_exact)


def plan_klmc(eps, kappa, M=1.0, w2_init=None, p=None) -> Plan:
    """``gamma = 5M``, ``gamma h = eps / sqrt(kappa)``, ``n = 5 kappa^1.5 / eps * log(20/eps)``."""
    _check_eps(eps)
    gamma = 5.0 * M
    h = eps / math.sqrt(kappa) / gamma
    n_exact = 5.0 * kappa**1.5 / eps * _log_factor(eps, kappa, M, w2_init, p)
    return Plan(Kind.KLMC, h, _ceil(n_exact), eps, kappa, M, gamma, n_exact)


def plan_rklmc(eps, kappa, M=1.0, w2_init=None, p=None) -> Plan:
    """``gamma = 5M``, ``gamma h = eps^{2/3} / (5 + 0.6 (eps^2 kappa)^{1/6})``."""
    _check_eps(eps)
    gamma = 5.0 * M
    r = (eps**2 * kappa) ** (1.0 / 6.0)
    h = eps ** (2.0 / 3.0) / (5.0 + 0.6 * r) / gamma
    n_exact = kappa * eps ** (-2.0 / 3.0) * (25.0 + 3.0 * r) * _log_factor(eps, kappa, M, w2_init, p)
    return Plan(Kind.RKLMC, h, _ceil(n_exact), eps, kappa, M, gamma, n_exact)


_PLANS = {Kind.LMC: plan_lmc, Kind.RLMC: plan_rlmc, Kind.KLMC: plan_klmc, Kind.RKLMC: plan_rklmc}


def plan_for(kind, eps, kappa, M=1.0, w2_init=None, p=None) -> Plan:
    return _PLANS[Kind.parse(kind)](eps, kappa, M, w2_init, p)


def round_2sf(x: float) -> float:
    """Round to two significant figures (as printed in ``"%.1e"``)."""
    return float(f"{x:.1e}")


@dataclass(frozen=True)
class TableCell:
    algorithm: str
    eps: float
    kappa: float
    n_exact: int

    @property
    def n_2sf(self) -> float:
        return round_2sf(self.n_exact)


def table1(eps_list=TABLE1_EPS, kappa_list=TABLE1_KAPPA):
    """Iteration counts of the four planners on an ``eps x kappa`` grid."""
    cells = []
    for eps in eps_list:
        for kind in (Kind.LMC, Kind.RLMC, Kind.KLMC, Kind.RKLMC):
            for kappa in kappa_list:
                cells.append(TableCell(kind.name, eps, kappa, plan_for(kind, eps, kappa).n))
    return cells


def table1_csv(cells) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", "eps", "kappa", "n_exact", "n_2sf"])
    for c in cells:
        w.writerow([c.algorithm, f"{c.eps:g}", f"{c.kappa:g}", c.n_exact, f"{c.n_2sf:.1e}"])
    return buf.getvalue()


def table1_text(cells, marks=None) -> str:
    """Fixed-width layout: one block per ``eps``, one row per algorithm.

    ``marks`` optionally maps ``(algorithm, eps, kappa)`` to a suffix string
    appended to the cell (used to flag cells that differ from a reference).
    """
    marks = marks or {}
    eps_vals = sorted({c.eps for c in cells}, reverse=True)
    kappas = sorted({c.kappa for c in cells})
    lookup = {(c.algorithm, c.eps, c.kappa): c for c in cells}
    algs = [k.name for k in (Kind.LMC, Kind.RLMC, Kind.KLMC, Kind.RKLMC)]
    width = 11
    lines = []
    for eps in eps_vals:
        head = f"{'eps=' + format(eps, 'g'):<8}" + "".join(
            f"{'k=' + format(k, '.0e'):>{width}}" for k in kappas)
        lines.append(head)
        lines.append("-" * len(head))
        for a in algs:
            row = f"{a:<8}"
            for k in kappas:
                c = lookup.get((a, eps, k))
                txt = "" if c is None else f"{c.n_2sf:.1e}" + marks.get((a, eps, k), "")
                row += f"{txt:>{width}}"
            lines.append(row)
        lines.append("")
    return "\n".join(lines)


def bound_curve(kind, plan: Plan, p: int, ns, w2_init: float, ef0: float = 0.0) -> np.ndarray:
    """Bound totals at each iteration count in ``ns``."""
    base = plan.inputs(p, w2_init, ef0)
    return np.array([bound_for(kind, base.with_n(int(n))).total for n in ns])

