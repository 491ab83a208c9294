"""``run`` command: execute one configured experiment and write its artifacts."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..metrics import (
    GaussianLaw,
    bootstrap_w2_product,
    empirical_w2_product,
    klmc_gaussian_recursion,
    lmc_gaussian_recursion,
    moment_diagnostics,
)
from ..potentials import GaussianPotential
from ..rng import stream
from ..samplers import Kind, KernelConfig, RecordPolicy, run_chain
from ..theory import Plan, bound_for, plan_for
from .config import ExperimentConfig, build_potential, load_config

__all__ = ["RunReport", "cmd_run", "execute", "CSV_COLUMNS"]

log = logging.getLogger(__name__)

#: Header of the per-iteration CSV trace.
CSV_COLUMNS = ("n", "w2_exact", "w2_empirical", "bound_total", "valid")


@dataclass
class RunReport:
    config: dict
    plan: dict
    rows: list
    bound: dict
    final: dict
    wall_clock_s: float = 0.0
    steps_per_s: float = 0.0
    warnings: list = field(default_factory=list)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            dict(config=self.config, plan=self.plan, bound=self.bound, final=self.final,
                 wall_clock_s=self.wall_clock_s, steps_per_s=self.steps_per_s,
                 warnings=self.warnings),
            indent=2, sort_keys=True, default=_json_default)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _resolve_plan(cfg: ExperimentConfig, pot) -> Plan:
    kind = cfg.algorithm
    if cfg.eps is not None:
        return plan_for(kind, float(cfg.eps), pot.kappa, pot.M)
    gamma = cfg.plan.get("gamma")
    return Plan(kind, float(cfg.plan["h"]), int(cfg.plan["n"]), float("nan"), pot.kappa, pot.M,
                None if gamma is None else float(gamma))


def _record_steps(policy: RecordPolicy, n: int):
    if policy.kind == "final":
        return np.array([n])
    stride = policy.every if policy.kind == "every" else 1
    ks = np.arange(0, n + 1, stride)
    return ks if ks[-1] == n else np.append(ks, n)


def execute(cfg: ExperimentConfig, threads: Optional[int] = None) -> RunReport:
    """Run the configured experiment and assemble the report (no file output)."""
    t0 = time.perf_counter()
    pot = build_potential(cfg)
    plan = _resolve_plan(cfg, pot)
    kind, p = cfg.algorithm, pot.dim
    warnings = []
    kernel = KernelConfig(kind, plan.h, plan.gamma)
    policy = RecordPolicy.parse(cfg.record)
    ks = _record_steps(policy, plan.n)

    gaussian = isinstance(pot, GaussianPotential)
    # initialization at the minimizer: W2(delta, pi) is exact for Gaussians, <= sqrt(p/m) otherwise
    w2_init = math.sqrt(float(np.trace(pot.target_cov))) if gaussian else math.sqrt(p / pot.m)
    base = plan.inputs(p, w2_init, 0.0)
    bounds = [bound_for(kind, base.with_n(int(k))) for k in ks]
    valid = bounds[-1].valid
    if not valid:
        msg = f"plan violates preconditions: {', '.join(bounds[-1].violated)}"
        log.warning(msg)
        warnings.append(msg)

    exact = [None] * len(ks)
    if gaussian and kind in (Kind.LMC, Kind.KLMC):
        if kind is Kind.LMC:
            trace = lmc_gaussian_recursion(pot.precision, pot.mean, plan.h, GaussianLaw.point(pot.mean), plan.n)
        else:
            trace = klmc_gaussian_recursion(pot.precision, pot.mean, plan.gamma, plan.h, None, plan.n)
        exact = list(trace.w2_exact[ks])

    run_policy = policy if policy.kind in ("final", "every") else RecordPolicy("every", 1)
    run = run_chain(kernel, pot, plan.n, replicas=cfg.replicas, record=run_policy, seed=cfg.seed,
                    threads=threads)
    product = gaussian and pot.is_diagonal
    target = GaussianLaw(pot.mean, pot.target_cov) if product else None
    empirical = [None] * len(ks)
    if product and cfg.replicas >= 2:
        if policy.kind == "final":
            snaps = [run.final.theta]
        else:
            idx = {int(s): i for i, s in enumerate(run.steps)}
            snaps = [run.final.theta if int(k) == plan.n else run.thetas[idx[int(k)]] for k in ks]
        empirical = [empirical_w2_product(s, target) for s in snaps]

    final = {"n": int(plan.n)}
    mean, cov, ef = moment_diagnostics(run.final.theta, pot)
    final.update(mean=mean, cov=cov if cfg.replicas > 1 else None, ef=ef,
                 w2_exact=exact[-1], w2_empirical=empirical[-1])
    if product and cfg.replicas >= 2 and cfg.bootstrap > 0:
        est, se, reps = bootstrap_w2_product(run.final.theta, target, cfg.bootstrap,
                                             stream(cfg.seed, 2**32))
        lo, hi = np.quantile(reps, [0.025, 0.975])
        final.update(w2_empirical_se=se, w2_empirical_ci95=[float(lo), float(hi)])
    rows = [dict(n=int(k), w2_exact=e, w2_empirical=w, bound_total=b.total, valid=b.valid)
            for k, e, w, b in zip(ks, exact, empirical, bounds)]
    elapsed = time.perf_counter() - t0
    return RunReport(
        config=cfg.echo(),
        plan=dict(kind=kind.value, h=plan.h, gamma=plan.gamma, n=plan.n,
                  eps=None if math.isnan(plan.target_eps) else plan.target_eps,
                  kappa=plan.kappa, M=plan.M),
        rows=rows,
        bound=dict(total=bounds[-1].total, terms=bounds[-1].terms, valid=valid,
                   violated=list(bounds[-1].violated), w2_init=w2_init),
        final=final,
        wall_clock_s=elapsed,
        steps_per_s=plan.n * cfg.replicas / elapsed if elapsed > 0 else float("inf"),
        warnings=warnings,
    )


def cmd_run(config_path, seed: Optional[int] = None, threads: Optional[int] = None) -> RunReport:
    """Load ``config_path``, run it and write the CSV trace and JSON report."""
    cfg = load_config(config_path, seed=seed)
    report = execute(cfg, threads=threads)
    csv_path = cfg.output_path("csv")
    if csv_path is not None:
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(report.csv_text())
    json_path = cfg.output_path("json")
    if json_path is not None:
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(report.to_json())
    return report
