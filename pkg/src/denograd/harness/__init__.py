"""Scenario matrix runner, report emission and the command line interface."""

from .report import emit_report, load_results
from .scenarios import (DENOISERS, DenoiserOutcome, MatrixRun, RunConfig, ScenarioError, ScenarioResult,
                        ScenarioSpec, compare_denoisers, derive_seed, filter_verdicts, run_matrix, run_repeated)

__all__ = [
    "DENOISERS",
    "DenoiserOutcome",
    "MatrixRun",
    "RunConfig",
    "ScenarioError",
    "ScenarioResult",
    "ScenarioSpec",
    "compare_denoisers",
    "derive_seed",
    "emit_report",
    "filter_verdicts",
    "load_results",
    "run_matrix",
    "run_repeated",
]
