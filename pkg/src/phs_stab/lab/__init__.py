"""Experiment harness: config ingestion, runners, reports and the CLI."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config, read_document
from .experiments import (
    EXPERIMENTS,
    run_certify,
    run_contraction,
    run_experiment,
    run_invariant,
    run_simulate,
    run_w2_selftest,
)
from .report import ReportRecord, Verdict, emit_report

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "read_document",
    "EXPERIMENTS",
    "run_certify",
    "run_contraction",
    "run_experiment",
    "run_invariant",
    "run_simulate",
    "run_w2_selftest",
    "ReportRecord",
    "Verdict",
    "emit_report",
]
