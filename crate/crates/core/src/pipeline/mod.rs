//! End-to-end orchestration: configuration, data preparation, stage
//! training, per-question inference with a trace, evaluation and the
//! experiment grid.

mod config;
mod corpus;
mod eval;
mod run;
mod train;

use std::path::Path;

use thiserror::Error;

pub use config::{HarnessMode, NerAblation, PipelineConfig};
pub use corpus::{check_gold_execution, ingest_squall, Dataset, Example, GoldExecution, IngestReport, PrepareStats};
pub use eval::{evaluate, run_experiment_grid, Accuracy, Diagnostics, EvalReport, GridReport, GridSpec, Verdict};
pub use run::{run_pipeline, LinkTrace, Prediction, Trace};
pub use train::{
    gold_encode_input, induce_from, link_groups, ner_instances, nsp_examples, train_all, train_ner_stage,
    train_nel_stage, train_nsp_stage, Artifacts, NelStageReport, NspStageReport, TrainReport,
};

use crate::data::DataError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("ACC_EXE {acc_exe} < ACC_LF {acc_lf} on consistent records (first offender {record})")]
    Containment { acc_lf: f64, acc_exe: f64, record: String },
}

impl PipelineError {
    pub fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage { stage, message: e.to_string() }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    /// Whether the error is malformed input data (the CLI exits nonzero).
    pub fn is_schema_violation(&self) -> bool {
        matches!(self, PipelineError::Data(DataError::SchemaViolation { .. }))
    }
}
