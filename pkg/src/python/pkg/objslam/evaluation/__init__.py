"""End-to-end runs, metrics against ground truth, reports and plots."""

from objslam.evaluation.metrics import (  # noqa: F401
    LocalizationError,
    correspondence_by_vote,
    endpoint_drift,
    loop_closes,
    object_localization_error,
    trajectory_rmse,
)
from objslam.evaluation.pipeline import (  # noqa: F401
    MODES,
    PipelineConfig,
    PipelineResult,
    dead_reckon,
    run_pipeline,
)
from objslam.evaluation.report import (  # noqa: F401
    RunReport,
    build_report,
    evaluate_estimate,
    read_estimate,
    read_report,
    write_estimate,
    write_report,
)
