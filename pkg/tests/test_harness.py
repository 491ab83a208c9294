import json
import math

import numpy as np
import pytest

from langevin_mc.harness.cli import main
from langevin_mc.harness.config import ConfigError, load_config
from langevin_mc.harness.run import CSV_COLUMNS, cmd_run, execute
from langevin_mc.harness.table1 import PRINTED_TABLE1, compare_table1
from langevin_mc.harness.validate import SUITES, UnknownSuite, run_suite


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


BASE = {"potential": {"kind": "gaussian", "diag": [1, 10]}, "algorithm": "klmc", "plan": {"eps": 0.3}}


@pytest.mark.parametrize("patch,field", [
    ({"algorithm": "hmc"}, "algorithm"),
    ({"plan": {"eps": 0.3, "h": 0.1, "n": 3}}, "plan"),
    ({"plan": {"h": 0.1, "n": 3}}, "plan.gamma"),
    ({"plan": {"eps": 1.5}}, "plan.eps"),
    ({"replicas": 0}, "replicas"),
    ({"seed": -1}, "seed"),
    ({"record": "sometimes"}, "record"),
    ({"potential": {"kind": "gaussian"}}, "potential"),
    ({"potential": {"kind": "student"}}, "potential.kind"),
    ({"potential": {"kind": "logistic", "X": "x.csv", "ridge": 1}}, "potential.y"),
    ({"colour": "blue"}, "colour"),
])
def test_config_errors_name_field(tmp_path, patch, field):
    with pytest.raises(ConfigError, match=f"'{field}"):
        load_config(_write(tmp_path, {**BASE, **patch}))


def test_config_missing_and_bad_json(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(tmp_path / "bad.json")


def test_non_spd_potential_is_config_error(tmp_path):
    cfg = {**BASE, "potential": {"kind": "gaussian", "precision": [[1, 2], [2, 1]]}}
    with pytest.raises(ConfigError, match="eigenvalue"):
        execute(load_config(_write(tmp_path, cfg)))


def test_klmc_oracle_run(tmp_path):
    rep = execute(load_config(_write(tmp_path, BASE)))
    assert rep.final["w2_exact"] <= 0.3 * math.sqrt(2 / 1)
    assert rep.rows[-1]["n"] == rep.plan["n"]
    # eps = 0.3 lies outside the planner's valid range, so the plan is flagged
    assert rep.bound["valid"] is False and rep.warnings


def test_run_writes_artifacts_and_is_deterministic(tmp_path):
    cfg = {**BASE, "algorithm": "lmc", "replicas": 300, "record": "every:500", "bootstrap": 20,
           "outputs": {"csv": "out/t.csv", "json": "out/r.json"}}
    path = _write(tmp_path, cfg)
    cmd_run(path, threads=1)
    first = (tmp_path / "out/t.csv").read_bytes()
    cmd_run(path, threads=3)
    assert (tmp_path / "out/t.csv").read_bytes() == first
    lines = first.decode().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert all(len(l.split(",")) == 5 for l in lines)
    rep = json.loads((tmp_path / "out/r.json").read_text())
    assert rep["config"]["algorithm"] == "lmc" and rep["steps_per_s"] > 0
    assert "w2_empirical_ci95" in rep["final"]
    assert load_config(path).echo() == rep["config"]


def test_seed_override_changes_empirical(tmp_path):
    cfg = {**BASE, "algorithm": "rlmc", "replicas": 200, "bootstrap": 0}
    a = execute(load_config(_write(tmp_path, cfg), seed=1))
    b = execute(load_config(_write(tmp_path, cfg), seed=2))
    assert a.final["w2_empirical"] != b.final["w2_empirical"]
    assert a.config["seed"] == 1


def test_rklmc_empirical_report(tmp_path):
    cfg = {**BASE, "algorithm": "rklmc", "plan": {"h": 0.005, "gamma": 50, "n": 300}, "replicas": 10_000,
           "bootstrap": 50}
    rep = execute(load_config(_write(tmp_path, cfg)))
    lo, hi = rep.final["w2_empirical_ci95"]
    assert lo <= rep.final["w2_empirical"] <= hi
    assert rep.final["w2_empirical_se"] > 0
    assert rep.final["w2_exact"] is None


def test_logistic_run(tmp_path):
    r = np.random.default_rng(0)
    X = r.standard_normal((30, 2))
    y = (r.uniform(size=30) < 0.5).astype(float)
    np.savetxt(tmp_path / "X.csv", X, delimiter=",")
    np.savetxt(tmp_path / "y.csv", y, delimiter=",")
    cfg = {"potential": {"kind": "logistic", "X": "X.csv", "y": "y.csv", "ridge": 1.0},
           "algorithm": "klmc", "plan": {"h": 0.01, "gamma": 50, "n": 100}, "replicas": 50}
    rep = execute(load_config(_write(tmp_path, cfg)))
    assert rep.final["w2_exact"] is None and rep.final["w2_empirical"] is None
    assert np.all(np.isfinite(rep.final["mean"])) and rep.final["ef"] >= 0


def test_table1_fixture_and_comparison():
    assert len(PRINTED_TABLE1) == 72
    assert PRINTED_TABLE1[("KLMC", 0.1, 1e3)] == 8.4e6
    _, comps = compare_table1()
    rk = [c.ratio for c in comps if c.algorithm == "RKLMC"]
    assert len(rk) == 18 and 1.0 <= min(rk) and max(rk) <= 2.2


def test_validate_unknown_suite():
    assert set(SUITES) == {"coeffs-stability", "noise-covariance", "one-step-error", "contraction",
                           "bound-domination"}
    with pytest.raises(UnknownSuite):
        run_suite("nope")


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["validate", "nope"]) == 1
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 1
    out = tmp_path / "v.json"
    assert main(["validate", "coeffs-stability", "--json", str(out)]) == 0
    assert json.loads(out.read_text())["passed"] is True
    assert main(["run", str(tmp_path / "missing.json")]) == 1
    csv = tmp_path / "t.csv"
    assert main(["table1", "--csv", str(csv)]) == 0
    assert len(csv.read_text().splitlines()) == 73
    assert "RKLMC" in capsys.readouterr().out


def test_cli_failure_exit_code(monkeypatch):
    from langevin_mc.harness import validate
    from langevin_mc.harness.validate import Check
    monkeypatch.setitem(validate.SUITES, "coeffs-stability", lambda: [Check("x", 1.0, 0.0, False)])
    assert main(["validate", "coeffs-stability"]) == 2


def test_cli_run_seed_and_threads(tmp_path):
    cfg = {**BASE, "algorithm": "rlmc", "replicas": 64, "bootstrap": 0, "outputs": {"csv": "a.csv"}}
    path = _write(tmp_path, cfg)
    assert main(["--seed", "5", "run", str(path), "--threads", "2"]) == 0
    a = (tmp_path / "a.csv").read_text()
    assert main(["run", str(path), "--seed", "5"]) == 0
    assert (tmp_path / "a.csv").read_text() == a
