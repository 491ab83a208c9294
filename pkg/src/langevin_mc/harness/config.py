"""JSON experiment configuration.

Schema (all keys except ``potential``, ``algorithm`` and ``plan`` optional)::

    {
      "potential": {"kind": "gaussian", "diag": [1, 10], "mean": [0, 0]}
                 | {"kind": "gaussian", "precision": [[2, 1], [1, 2]]}
                 | {"kind": "logistic", "X": "X.csv", "y": "y.csv", "ridge": 0.1},
      "algorithm": "lmc" | "rlmc" | "klmc" | "rklmc",
      "plan": {"eps": 0.3} | {"h": 0.01, "gamma": 5.0, "n": 1000},
      "replicas": 1,
      "seed": 0,
      "record": "final" | "full" | "every:K" | K,
      "bootstrap": 200,
      "outputs": {"csv": "trace.csv", "json": "report.json"}
    }

Relative paths are resolved against the directory holding the config file.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..potentials import PotentialSpec, make_gaussian, make_logistic
from ..samplers import Kind, RecordPolicy

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "build_potential"]


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass
class ExperimentConfig:
    potential: dict
    algorithm: Kind
    plan: dict
    replicas: int = 1
    seed: int = 0
    record: str = "final"
    bootstrap: int = 200
    outputs: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd, compare=False)

    @property
    def eps(self) -> Optional[float]:
        return self.plan.get("eps")

    def echo(self) -> dict:
        d = asdict(self)
        d["algorithm"] = self.algorithm.value
        d.pop("base_dir")
        return d

    def output_path(self, key) -> Optional[Path]:
        p = self.outputs.get(key)
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def _need(d, key, where):
    if key not in d:
        raise ConfigError(f"missing field '{where}{key}'")
    return d[key]


def _validate(raw: dict, base_dir: Path) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    pot = _need(raw, "potential", "")
    if not isinstance(pot, dict) or pot.get("kind") not in ("gaussian", "logistic"):
        raise ConfigError("field 'potential.kind' must be 'gaussian' or 'logistic'")
    if pot["kind"] == "gaussian" and ("precision" in pot) == ("diag" in pot):
        raise ConfigError("field 'potential' needs exactly one of 'precision' or 'diag'")
    if pot["kind"] == "logistic":
        for k in ("X", "y", "ridge"):
            _need(pot, k, "potential.")
    try:
        kind = Kind.parse(_need(raw, "algorithm", ""))
    except ValueError as e:
        raise ConfigError(f"field 'algorithm': {e}") from None
    plan = _need(raw, "plan", "")
    if not isinstance(plan, dict):
        raise ConfigError("field 'plan' must be an object")
    explicit = {"h", "n"} <= plan.keys()
    if ("eps" in plan) == explicit:
        raise ConfigError("field 'plan' needs exactly one of 'eps' or explicit 'h' and 'n'")
    if explicit and kind.kinetic and "gamma" not in plan:
        raise ConfigError("field 'plan.gamma' is required for kinetic algorithms")
    if "eps" in plan and not (0 < float(plan["eps"]) < 1):
        raise ConfigError("field 'plan.eps' must lie in (0, 1)")
    if explicit and (float(plan["h"]) <= 0 or int(plan["n"]) < 0):
        raise ConfigError("fields 'plan.h' > 0 and 'plan.n' >= 0 are required")
    replicas = raw.get("replicas", 1)
    if not isinstance(replicas, int) or replicas < 1:
        raise ConfigError("field 'replicas' must be an integer >= 1")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or not (0 <= seed < 2**64):
        raise ConfigError("field 'seed' must be an integer in [0, 2^64)")
    record = raw.get("record", "final")
    try:
        RecordPolicy.parse(record)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"field 'record': {e}") from None
    boot = raw.get("bootstrap", 200)
    if not isinstance(boot, int) or boot < 0:
        raise ConfigError("field 'bootstrap' must be an integer >= 0")
    outputs = raw.get("outputs", {})
    if not isinstance(outputs, dict):
        raise ConfigError("field 'outputs' must be an object")
    unknown = set(raw) - {"potential", "algorithm", "plan", "replicas", "seed", "record",
                          "bootstrap", "outputs"}
    if unknown:
        raise ConfigError(f"unknown field '{sorted(unknown)[0]}'")
    return ExperimentConfig(pot, kind, plan, replicas, seed, record, boot, outputs, base_dir)


def load_config(path, seed: Optional[int] = None) -> ExperimentConfig:
    """Parse and validate a config file; ``seed`` overrides the file's seed."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    if seed is not None:
        raw["seed"] = seed
    return _validate(raw, path.resolve().parent)


def _read_csv(path: Path):
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None


def build_potential(cfg: ExperimentConfig) -> PotentialSpec:
    d = cfg.potential
    try:
        if d["kind"] == "gaussian":
            A = np.diag(np.asarray(d["diag"], dtype=float)) if "diag" in d else np.asarray(
                d["precision"], dtype=float)
            return make_gaussian(A, d.get("mean"))
        X = _read_csv(cfg.base_dir / d["X"])
        y = _read_csv(cfg.base_dir / d["y"]).reshape(-1)
        return make_logistic(X, y, float(d["ridge"]))
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(f"field 'potential': {e}") from None
