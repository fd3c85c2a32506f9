//! Experiment orchestration: configuration, strong-error studies, slope
//! fits and output files.

pub mod config;
pub mod study;

pub use config::{CheckConfig, ErrorMetric, ExperimentConfig, InstanceConfig, NonlinearityConfig, Reference, StudyConfig};
pub use study::{
    bootstrap_slope_ci, evaluate_checks, fit_slope, run_strong_error_study, run_trajectory_demo, strong_error,
    write_errors_by_metric_csv, write_errors_csv, write_slopes_csv, write_study_outputs, write_trajectories,
    CheckOutcome, ClampEvent, ErrorRow, ErrorTable, SlopeFit, StudyResult,
};
