import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from langevin_mc.samplers import Kind
from langevin_mc.theory import (
    TABLE1_EPS,
    TABLE1_KAPPA,
    BoundInputs,
    bound_curve,
    bound_for,
    klmc_bound,
    lmc_bound,
    plan_for,
    plan_klmc,
    plan_lmc,
    plan_rklmc,
    plan_rlmc,
    rklmc_bound,
    rlmc_bound,
    round_2sf,
    table1,
    table1_csv,
    table1_text,
)


# --- bound evaluators: direct-formula oracles --------------------------

def test_rlmc_bound_value():
    r = rlmc_bound(BoundInputs(1, 1, 1, 0.1, 100, w2_init=1))
    ref = 1.11 * math.exp(-5) + (2.4 * math.sqrt(0.1) + 1.77) * 0.1
    assert r.total == pytest.approx(ref, rel=1e-15)
    assert r.total == pytest.approx(0.26037, abs=5e-6)


def test_rlmc_zero_init():
    b = BoundInputs(0.5, 2.0, 3, 0.01, 7)
    r = rlmc_bound(b)
    assert r.total == pytest.approx((2.4 * math.sqrt(4 * 0.02) + 1.77) * 0.02 * math.sqrt(6), rel=1e-14)


def test_rklmc_bound_value():
    r = rklmc_bound(BoundInputs(1, 1, 1, 0.02, 0, w2_init=1, ef0=0.5, gamma=5))
    ref = 1.6 + 0.1 * math.sqrt(0.5) + 0.2e-3 + 10 * 0.1**1.5
    assert r.total == pytest.approx(ref, rel=1e-14)
    # 1.6 + 0.0707107 + 0.0002 + 0.3162278
    assert r.total == pytest.approx(1.987138, abs=1e-6)


def test_klmc_bound_value():
    r = klmc_bound(BoundInputs(1, 1, 1, 0.02, 0, w2_init=1, ef0=0.5, gamma=5))
    assert r.total == pytest.approx(2 + 0.05 * math.sqrt(0.5) + 0.09, rel=1e-14)
    assert r.total == pytest.approx(2.12536, abs=5e-6)


def test_klmc_long_run_limit():
    r = klmc_bound(BoundInputs(1, 4, 2, 0.001, 10**9, w2_init=3, gamma=20))
    assert r.total == pytest.approx(0.9 * 0.02 * math.sqrt(4 * 2), rel=1e-12)


def test_klmc_dimension_scaling():
    a = klmc_bound(BoundInputs(1, 4, 3, 0.001, 5, gamma=20)).terms["discretization"]
    b = klmc_bound(BoundInputs(1, 4, 6, 0.001, 5, gamma=20)).terms["discretization"]
    assert b / a == pytest.approx(math.sqrt(2), rel=1e-15)


def test_lmc_bound_value():
    r = lmc_bound(BoundInputs(1, 1, 1, 0.005, 2000, w2_init=1))
    assert r.total == pytest.approx(0.995**2000 + 0.1, rel=1e-13)
    assert r.total == pytest.approx(0.1000443, abs=5e-8)
    assert lmc_bound(BoundInputs(1, 1, 1, 0.005, 2000)).total == pytest.approx(0.1, rel=1e-15)


def test_lmc_contraction_below_machine_epsilon():
    # m h = 1e-20 still contracts over 1e20 steps
    r = lmc_bound(BoundInputs(1e-10, 1.0, 1, 1e-10, 10**20, w2_init=1.0))
    assert r.terms["initial"] == pytest.approx(math.exp(-1), rel=1e-9)


def test_joint_limits_go_to_zero():
    for fn, g in ((lmc_bound, None), (rlmc_bound, None)):
        assert fn(BoundInputs(1, 2, 1, 1e-8, 10**10, w2_init=1)).total < 1e-3
    assert rklmc_bound(BoundInputs(1, 1, 1, 1e-9, 10**11, w2_init=1, gamma=5)).total < 1e-5


def test_rklmc_no_discretization_limit():
    r = rklmc_bound(BoundInputs(1, 1, 1, 1e-300, 0, w2_init=2, ef0=0.5, gamma=5))
    assert r.total == pytest.approx(1.6 * 2 + 0.1 * math.sqrt(0.5), rel=1e-12)


def test_rklmc_stationary_start_discretization_only():
    b = BoundInputs(1, 1, 2, 0.02, 10**6, w2_init=0, ef0=1.0, gamma=5)
    r = rklmc_bound(b)
    assert r.total == pytest.approx(r.terms["discretization"] + r.terms["discretization_cubic"], rel=1e-12)


def test_preconditions_flag_but_evaluate():
    r = klmc_bound(BoundInputs(1, 10, 1, 0.1, 3, gamma=1.0))
    assert not r.valid
    assert set(r.violated) == {"gamma>=5M", "sqrt(kappa)*gamma*h<=0.1"}
    assert math.isfinite(r.total)
    assert not lmc_bound(BoundInputs(1, 1, 1, 2.0, 3)).valid
    assert "Mh+sqrt(kappa)(Mh)^1.5<=1/4" in rlmc_bound(BoundInputs(1, 1, 1, 0.3, 3)).violated
    assert "gamma*h<=0.1*kappa^(-1/6)" in rklmc_bound(BoundInputs(1, 1, 1, 0.3, 3, gamma=5)).violated


def test_bound_inputs_validation():
    with pytest.raises(ValueError):
        BoundInputs(2, 1, 1, 0.1, 1)
    with pytest.raises(ValueError):
        klmc_bound(BoundInputs(1, 1, 1, 0.1, 1))


# --- planners ------------------------------------------------------------

@pytest.mark.parametrize("eps,kappa,expected", [(0.1, 10, 1.2e4), (1e-3, 10, 2.2e8), (1e-5, 1e11, 3.2e22)])
def test_plan_lmc_table(eps, kappa, expected):
    assert round_2sf(plan_lmc(eps, kappa).n) == expected


@pytest.mark.parametrize("eps,kappa,expected", [(0.1, 10, 3.6e3), (1e-3, 10, 3.8e5), (1e-5, 1e5, 9.9e11)])
def test_plan_rlmc_table(eps, kappa, expected):
    assert round_2sf(plan_rlmc(eps, kappa).n) == expected


@pytest.mark.parametrize("eps,kappa,expected", [(0.1, 10, 8.4e3), (0.1, 1e3, 8.4e6), (1e-3, 10, 1.6e6)])
def test_plan_klmc_table(eps, kappa, expected):
    assert round_2sf(plan_klmc(eps, kappa).n) == expected


def test_plan_rklmc_formula_values():
    assert round_2sf(plan_rklmc(0.1, 10).n) == 6.7e3
    assert round_2sf(plan_rklmc(1e-3, 1e3).n) == 2.6e7


def test_plan_rklmc_asymptotics():
    kappa = 10.0
    ratios = [plan_rklmc(e, kappa).n_exact / (25 * kappa * e ** (-2 / 3) * math.log(20 / e))
              for e in (1e-6, 1e-9, 1e-12)]
    assert ratios[0] > ratios[1] > ratios[2] > 1
    assert ratios[-1] == pytest.approx(1, abs=2e-3)


def test_plan_step_sizes_and_gamma():
    p = plan_klmc(0.05, 100.0, M=2.0)
    assert p.gamma == 10.0 and p.eta == pytest.approx(0.005)
    p = plan_lmc(0.2, 3.0, M=4.0)
    assert 4.0 * p.h == pytest.approx(0.5 * 0.95**2 * 0.04)
    assert p.m == pytest.approx(4.0 / 3.0)


def test_log_term_included_with_w2_init():
    base = plan_klmc(0.05, 10.0)
    # W2 = sqrt(p/m) makes the extra term vanish; smaller W2 shortens the run
    same = plan_klmc(0.05, 10.0, w2_init=math.sqrt(30.0), p=3)  # m = 0.1
    short = plan_klmc(0.05, 10.0, w2_init=0.1, p=3)
    assert same.n == base.n and short.n < base.n
    assert plan_klmc(0.05, 10.0, w2_init=0.0, p=3).n == 1
    with pytest.raises(ValueError):
        plan_klmc(0.05, 10.0, w2_init=1.0)


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.1])
def test_plan_eps_domain(eps):
    with pytest.raises(ValueError):
        plan_lmc(eps, 10.0)


@pytest.mark.parametrize("kind", list(Kind))
def test_plans_satisfy_preconditions(kind):
    bad = []
    for eps in np.geomspace(1e-6, 0.099, 12):
        for kappa in np.geomspace(1.0, 1e12, 13):
            plan = plan_for(kind, eps, kappa, M=3.0)
            rep = bound_for(kind, plan.inputs(2, 1.0))
            assert plan.n >= 1
            if not rep.valid:
                bad.append((float(eps), float(kappa), rep.violated))
    assert not bad, f"{len(bad)} plans violate preconditions, e.g. {bad[0]}"


@pytest.mark.parametrize("kind", [Kind.LMC, Kind.KLMC, Kind.RLMC])
def test_plan_sufficiency(kind):
    worst = 0.0
    for eps in (0.099, 0.05, 1e-3, 1e-5):
        for kappa in (1.0, 10.0, 1e3, 1e7, 1e11):
            for p in (1, 10):
                plan = plan_for(kind, eps, kappa, M=2.0)
                target = eps * math.sqrt(p / plan.m)
                rep = bound_for(kind, plan.inputs(p, math.sqrt(p / plan.m), 0.0))
                worst = max(worst, rep.total / target)
    assert worst <= 1 + 1e-9


# --- invariants ------------------------------------------------------

def _disc(rep):
    return sum(v for k, v in rep.terms.items() if k.startswith("discretization"))


@pytest.mark.parametrize("kind", list(Kind))
def test_monotone_in_n(kind):
    plan = plan_for(kind, 0.05, 10.0)
    ns = np.unique(np.geomspace(1, 10 * plan.n, 60).astype(int))
    curve = bound_curve(kind, plan, 3, ns, 2.0, 0.7)
    assert np.all(np.diff(curve) <= 1e-15)


@pytest.mark.parametrize("kind", list(Kind))
def test_discretization_monotone_in_h(kind):
    gamma = 5.0 if kind.kinetic else None
    hs = np.geomspace(1e-6, 1e-2, 40)
    vals = [_disc(bound_for(kind, BoundInputs(1.0, 1.0, 2, h, 10, 1.0, 0.0, gamma))) for h in hs]
    assert np.all(np.diff(vals) > 0)


@pytest.mark.parametrize("kind", list(Kind))
@given(c=st.floats(0.01, 100.0))
def test_scale_free(kind, c):
    gamma = 5.0 if kind.kinetic else None
    b = BoundInputs(0.5, 2.0, 3, 0.004, 50, w2_init=1.3, ef0=0.4, gamma=gamma)
    s = BoundInputs(0.5 * c, 2.0 * c, 3, 0.004 / c, 50, w2_init=1.3 / math.sqrt(c), ef0=0.4,
                    gamma=None if gamma is None else gamma * c)
    r, rs = bound_for(kind, b), bound_for(kind, s)
    # every term is a distance, so the total scales like 1/sqrt(c)
    assert rs.total == pytest.approx(r.total / math.sqrt(c), rel=1e-12)
    assert rs.valid == r.valid


# --- table ---------------------------------------------------------------

def test_table1_grid_and_csv():
    cells = table1(TABLE1_EPS, TABLE1_KAPPA)
    assert len(cells) == 72
    csv = table1_csv(cells).splitlines()
    assert csv[0] == "algorithm,eps,kappa,n_exact,n_2sf"
    assert len(csv) == 73
    txt = table1_text(cells)
    assert "RKLMC" in txt and "eps=1e-05" in txt


def test_round_2sf():
    assert round_2sf(11763) == 1.2e4
    assert round_2sf(93610870277920) == 9.4e13
    assert round_2sf(1.25e3) in (1.2e3, 1.3e3)
