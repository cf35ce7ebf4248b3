"""Streaming drift detection for categorical API call streams.

Build a baseline call-frequency distribution from logs, monitor a live
stream with a sequential Bayes-factor test whose false-positive guarantee
survives continuous checking, simulate controlled drift to validate the
detector, and attribute any alarm to the specific API categories that
drove it.
"""

from .attribution import (
    AttributionReport,
    aggregate_parent_child,
    delta_scores,
    expected_counts,
    report_from_history,
    rho_scores,
    top_k_report,
)
from .chi2 import Chi2Result, chi2_sf, pearson_gof, sequential_chi2_monitor
from .detector import (
    DetectorConfig,
    DriftDetector,
    StepResult,
    log_alarm_threshold,
    log_bf_closed_form,
    log_bf_trajectory,
)
from .errors import ParseError, SnapshotError, UnknownCategoryError, ValidationError
from .ingest import (
    CallRecord,
    FrequencyTable,
    WindowedHistogram,
    accumulate,
    parse_log,
    to_observations,
    window_histograms,
)
from .prior import PriorSpec, build_prior
from .simulate import (
    Constant,
    DelayedRamp,
    DetectionRateTable,
    Distribution,
    ExperimentConfig,
    mix,
    mix64,
    pi_at,
    run_experiment,
    sample_stream,
    scheduled_source,
)
from .space import PAIR, SINGLE, CategorySpace, Observation, build_space

__all__ = [
    "AttributionReport",
    "CallRecord",
    "CategorySpace",
    "Chi2Result",
    "Constant",
    "DelayedRamp",
    "DetectionRateTable",
    "DetectorConfig",
    "Distribution",
    "DriftDetector",
    "ExperimentConfig",
    "FrequencyTable",
    "Observation",
    "PAIR",
    "ParseError",
    "PriorSpec",
    "SINGLE",
    "SnapshotError",
    "StepResult",
    "UnknownCategoryError",
    "ValidationError",
    "WindowedHistogram",
    "accumulate",
    "aggregate_parent_child",
    "build_prior",
    "build_space",
    "chi2_sf",
    "delta_scores",
    "expected_counts",
    "log_alarm_threshold",
    "log_bf_closed_form",
    "log_bf_trajectory",
    "mix",
    "mix64",
    "parse_log",
    "pearson_gof",
    "pi_at",
    "report_from_history",
    "rho_scores",
    "run_experiment",
    "sample_stream",
    "scheduled_source",
    "sequential_chi2_monitor",
    "to_observations",
    "top_k_report",
    "window_histograms",
]
