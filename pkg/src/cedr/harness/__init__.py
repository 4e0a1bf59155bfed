"""Experiment harness: cost-model profiling, workload injection, metrics and reports."""

from .metrics import MetricsReport, compute_metrics, trial_summary
from .profile import ProfileSpec, build_cost_model, profile_cost_model
from .report import emit_report
from .workload import WorkloadEntry, WorkloadSpec, injection_period, run_trial, run_workload

__all__ = [
    "MetricsReport", "ProfileSpec", "WorkloadEntry", "WorkloadSpec", "build_cost_model", "compute_metrics",
    "emit_report", "injection_period", "profile_cost_model", "run_trial", "run_workload", "trial_summary",
]
