"""Experiment configuration, the ``run``/``table1``/``validate`` commands and the CLI."""

from .config import ConfigError, ExperimentConfig, build_potential, load_config
from .run import CSV_COLUMNS, RunReport, cmd_run, execute
from .table1 import PRINTED_TABLE1, cmd_table1, compare_table1
from .validate import SUITES, cmd_validate, run_suite

__all__ = [
    "ConfigError", "ExperimentConfig", "build_potential", "load_config",
    "CSV_COLUMNS", "RunReport", "cmd_run", "execute",
    "PRINTED_TABLE1", "cmd_table1", "compare_table1",
    "SUITES", "cmd_validate", "run_suite",
]
