//! Experiment orchestration: configuration, data loading, model fitting,
//! cross-validation and result files.

pub mod artifacts;
pub mod config;
pub mod data;
pub mod emit;
pub mod experiments;
pub mod models;
pub mod synthetic;

pub use crate::timing::capture_timing;
pub use artifacts::{load_model, save_model, ModelArtifact};
pub use config::{ExperimentConfig, HoldoutFilter, ModelKind, SyntheticKind};
pub use data::{load_experiment_data, ExperimentData};
pub use emit::{emit_calibration, emit_k_sweep, emit_results, load_results_csv, summarize, SummaryRow};
pub use experiments::{
    run_calibration, run_cv_learning_curve, run_extrapolation, run_k_sweep, run_tune_k, AuditEntry, ExperimentRecord,
    KSweepCell, RunReport, TuneKReport,
};
pub use models::{fit_model, FittedModel, StageLog, TrainedModel};
