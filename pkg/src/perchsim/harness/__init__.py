"""Scenario configuration, trial/batch execution, logging, reports, and the CLI."""

from .scenario import ConfigError, ScenarioConfig, load_scenario, save_scenario  # noqa: F401
from .trial import Outcome, TrialResult, classify_outcome, run_trial  # noqa: F401
from .batch import MonteCarloSummary, run_batch  # noqa: F401
from .logs import write_logs  # noqa: F401
