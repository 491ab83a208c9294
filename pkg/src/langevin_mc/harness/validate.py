"""``validate`` command: named suites of numerical checks with JSON detail."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .. import coeffs, oracles
from ..coupling import contraction_check, one_step_error_report
from ..metrics import GaussianLaw, klmc_gaussian_recursion, lmc_gaussian_recursion
from ..potentials import make_gaussian
from ..rng import stream
from ..samplers import Kind
from ..theory import bound_curve, bound_for, plan_klmc, plan_lmc

__all__ = ["Check", "SuiteResult", "SUITES", "run_suite", "cmd_validate", "UnknownSuite",
           "klmc_velocity_slope", "domination_target", "sigma_tilde2_verdict"]


class UnknownSuite(KeyError):
    pass


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass
class SuiteResult:
    suite: str
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_json(self) -> str:
        return json.dumps(dict(suite=self.suite, passed=self.passed,
                               checks=[asdict(c) for c in self.checks]),
                          indent=2, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _le(name, value, threshold, **detail):
    value = float(value)
    return Check(name, value, float(threshold), bool(value <= threshold), detail)


# coeffs-stability -------------------------------------------------------

COEFF_GRID = np.geomspace(1e-12, 10.0, 50)


def _coeffs_stability():
    checks = []
    worst = dict(alpha=0.0, beta=0.0, sigma2=0.0, sigma_tilde2=0.0, psi=0.0)
    ident1 = ident2 = 0.0
    for eta in COEFF_GRID:
        c = coeffs.klmc_coeffs(eta)
        ref = oracles.mp_coeffs(eta)
        for key, val, r in zip(("alpha", "beta", "sigma2", "sigma_tilde2"),
                               (c.alpha, c.beta, c.sigma2, c.sigma_tilde2), ref):
            worst[key] = max(worst[key], abs(val / r - 1.0))
        worst["psi"] = max(worst["psi"], abs(float(coeffs.psi(eta)) / oracles.mp_psi(eta) - 1.0))
        # absolute: e^{-eta} is itself only representable to ~1 ulp of 1
        ident1 = max(ident1, abs(1.0 - c.alpha * eta - math.exp(-eta)))
        ident2 = max(ident2, abs(eta * c.alpha - float(coeffs.one_minus_exp(eta))))
    for key, err in worst.items():
        checks.append(_le(f"{key} relative error vs mpmath", err, 1e-12, grid="logspace(1e-12,10,50)"))
    checks.append(_le("|1 - alpha*eta - exp(-eta)|", ident1, 1e-15))
    checks.append(_le("|eta*alpha - (1 - exp(-eta))|", ident2, 1e-15))
    return checks


# noise-covariance ------------------------------------------------------

COV_GAMMAS = (2.0, 5.0, 20.0)
COV_ETAS = (1e-6, 1e-3, 0.05, 0.2)
COV_US = (0.1, 0.5, 0.9, 1.0)


def _mc_check(name, cov, draws, seed):
    """Sample covariance of ``draws`` scalar-coordinate samples vs ``cov.entries``."""
    rng = stream(seed, 3)
    z = np.stack(coeffs.sample_noise(cov, 1, rng, batch_shape=(draws,)), axis=-1)[:, 0, :]
    d = cov.dim
    worst = 0.0
    for i in range(d):
        for j in range(i, d):
            prod = z[:, i] * z[:, j]
            se = prod.std(ddof=1) / math.sqrt(draws)
            worst = max(worst, abs(prod.mean() - cov.entries[i, j]) / se)
    return _le(name, worst, 3.0, unit="standard errors", draws=draws)


def sigma_tilde2_verdict(etas=(0.01, 0.1, 0.5, 1.0, 2.0), gamma=5.0):
    """Compare the two printed position-noise normalizers with quadrature."""
    out = {}
    for label, fn in (("final", coeffs.sigma_tilde2_printed_final),
                      ("draft", coeffs.sigma_tilde2_printed_draft),
                      ("shipped", coeffs.sigma_tilde2)):
        errs = []
        for eta in etas:
            var_t = oracles.quad_klmc_cov(eta, gamma)[1, 1]
            errs.append(abs(float(fn(eta)) - gamma * var_t / (2 * eta**3)))
        out[label] = max(errs)
    matches = [k for k in ("final", "draft") if out[k] < 1e-10]
    out["verdict"] = (f"printed {matches[0]} formula matches quadrature" if matches else
                      "neither printed formula matches quadrature; shipping "
                      "(2eta-3+4e^-eta-e^-2eta)/(2eta^3)")
    return out


def _noise_covariance(mc_draws=10**6):
    checks = []
    w2 = w3 = wu = 0.0
    for g in COV_GAMMAS:
        for eta in COV_ETAS:
            K = oracles.quad_klmc_cov(eta, g)
            w2 = max(w2, np.abs(K - coeffs.klmc_noise_cov(eta, g).entries).max() / np.trace(K))
            for u in COV_US:
                Q = oracles.quad_rklmc_cov(eta, g, u)
                B = oracles.unit_time_rklmc_cov(eta, g, u)
                C = coeffs.rklmc_noise_cov(eta, g, u).entries
                w3 = max(w3, np.abs(Q - C).max() / np.trace(Q))
                wu = max(wu, np.abs(B - C).max() / np.trace(Q))
    checks.append(_le("2x2 closed form vs quadrature (abs/trace)", w2, 1e-12))
    checks.append(_le("3x3 closed form vs quadrature (abs/trace)", w3, 1e-12))
    checks.append(_le("3x3 closed form vs unit-time B,G formulation (abs/trace)", wu, 1e-12))
    checks.append(_mc_check("2x2 Monte Carlo, gamma=5 eta=0.2",
                            coeffs.klmc_noise_cov(0.2, 5.0), mc_draws, 1))
    checks.append(_mc_check("3x3 Monte Carlo, gamma=5 eta=0.2 u=0.5",
                            coeffs.rklmc_noise_cov(0.2, 5.0, 0.5), mc_draws, 2))
    verdict = sigma_tilde2_verdict()
    checks.append(_le("shipped sigma_tilde2 vs quadrature", verdict["shipped"], 1e-12,
                      printed_final_error=verdict["final"], printed_draft_error=verdict["draft"],
                      verdict=verdict["verdict"]))
    return checks


# one-step-error --------------------------------------------------------

ONE_STEP_ETAS = (0.05, 0.1, 0.2)
ONE_STEP_GAMMA_FACTORS = (5.0, 10.0)
ONE_STEP_DIMS = (1, 4, 16)


def one_step_target(p):
    """Gaussian with M = 1 and spread eigenvalues (``A = 1`` when ``p = 1``)."""
    return make_gaussian(np.geomspace(0.1, 1.0, p) if p > 1 else np.ones(1))


def klmc_velocity_slope(etas, errors):
    """Least-squares slope of ``log(error)`` against ``log(eta)``."""
    return float(np.polyfit(np.log(etas), np.log(errors), 1)[0])


def _one_step_error(replicas=10_000, substeps=512):
    checks = []
    for p in ONE_STEP_DIMS:
        pot = one_step_target(p)
        for gf in ONE_STEP_GAMMA_FACTORS:
            gamma = gf * pot.M
            vel = []
            for eta in ONE_STEP_ETAS:
                rep = one_step_error_report(pot, gamma, eta / gamma, replicas=replicas,
                                            substeps=substeps, seed=0)
                for r in rep.rows:
                    if not r.valid:
                        continue
                    checks.append(Check(f"{r.name} p={p} gamma={gamma:g}M eta={eta:g}",
                                        r.ratio, 1.0, bool(r.ratio >= 1.0),
                                        dict(measured=r.measured, stderr=r.stderr, bound=r.bound,
                                             comparison="bound/measured >= 1")))
                vel.append(rep.row("klmc_v").measured)
            slope = klmc_velocity_slope(ONE_STEP_ETAS, vel)
            checks.append(Check(f"klmc_v log-log slope p={p} gamma={gamma:g}M", slope, 2.0,
                                bool(abs(slope - 2.0) <= 0.1),
                                dict(etas=list(ONE_STEP_ETAS), errors=vel, tolerance=0.1)))
    return checks


# contraction -----------------------------------------------------------

def contraction_targets():
    return [make_gaussian(np.ones(1)), make_gaussian(np.array([1.0, 10.0])),
            make_gaussian(np.geomspace(1.0, 100.0, 8))]


def _contraction(replicas=1000):
    checks = []
    for pot in contraction_targets():
        gamma = pot.m + pot.M + 1.0
        res = contraction_check(pot, gamma, t_end=1.0, substeps=1000, replicas=replicas, seed=0)
        env = math.exp(-res.rate) * 1.05
        tag = f"p={pot.dim} kappa={pot.kappa:g} gamma={gamma:g}"
        checks.append(_le(f"C-norm L2 ratio at t=1, {tag}", res.ratio_l2[-1], env,
                          rate=res.rate, ratio_max=res.ratio_max[-1]))
        pathwise = float(np.max(res.ratio_max / res.envelope(0.0)))
        checks.append(_le(f"pathwise ratio over envelope on [0,1], {tag}", pathwise, 1.05))
    return checks


# bound-domination ------------------------------------------------------

DOMINATION_DIMS = (1, 2, 8)
DOMINATION_KAPPAS = (1.0, 10.0, 100.0)
DOMINATION_EPS = (0.3, 0.1)


def domination_target(p, kappa):
    """Precision with ``m = 1`` and the stated ``kappa``.

    For ``p = 1`` the precision is ``1`` and ``M = kappa`` is used as a
    (loose but valid) smoothness constant for planning and bounds.
    """
    if p == 1:
        return np.ones(1), kappa
    return np.geomspace(1.0, kappa, p), kappa


def domination_trace(kind: Kind, p, kappa, eps):
    diag, M = domination_target(p, kappa)
    A = np.diag(diag)
    mean = np.zeros(p)
    w2_init = math.sqrt(float(np.sum(1.0 / diag)))
    if kind is Kind.KLMC:
        plan = plan_klmc(eps, kappa, M)
        trace = klmc_gaussian_recursion(A, mean, plan.gamma, plan.h, None, plan.n)
    else:
        plan = plan_lmc(eps, kappa, M)
        trace = lmc_gaussian_recursion(A, mean, plan.h, GaussianLaw.point(mean), plan.n)
    bounds = bound_curve(kind, plan, p, trace.n, w2_init, 0.0)
    return plan, trace, bounds


def _bound_domination():
    checks = []
    for kind in (Kind.KLMC, Kind.LMC):
        for p in DOMINATION_DIMS:
            for kappa in DOMINATION_KAPPAS:
                for eps in DOMINATION_EPS:
                    plan, trace, bounds = domination_trace(kind, p, kappa, eps)
                    rep = bound_for(kind, plan.inputs(p, 0.0, 0.0))
                    tag = f"{kind.name} p={p} kappa={kappa:g} eps={eps:g}"
                    slack = float(np.max(trace.w2_exact - bounds))
                    checks.append(Check(f"trace below bound at every n, {tag}", slack, 0.0,
                                        bool(slack <= 0.0),
                                        dict(n=plan.n, h=plan.h, gamma=plan.gamma,
                                             preconditions_valid=rep.valid,
                                             violated=list(rep.violated),
                                             comparison="max_n (w2 - bound) <= 0")))
                    checks.append(_le(f"final W2 <= eps*sqrt(p/m), {tag}", trace.w2_exact[-1],
                                      eps * math.sqrt(p)))
    return checks


SUITES: dict[str, Callable[[], list]] = {
    "coeffs-stability": _coeffs_stability,
    "noise-covariance": _noise_covariance,
    "one-step-error": _one_step_error,
    "contraction": _contraction,
    "bound-domination": _bound_domination,
}


def run_suite(name: str) -> SuiteResult:
    try:
        fn = SUITES[name]
    except KeyError:
        raise UnknownSuite(f"unknown suite {name!r}; choose from {', '.join(SUITES)}") from None
    return SuiteResult(name, fn())


def cmd_validate(name: str, json_path: Optional[str] = None, out=print) -> SuiteResult:
    res = run_suite(name)
    for c in res.checks:
        out(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.6g} (threshold {c.threshold:g})")
    out(f"{name}: {len(res.checks) - len(res.failures)}/{len(res.checks)} checks passed")
    if json_path is not None:
        Path(json_path).write_text(res.to_json())
    return res
