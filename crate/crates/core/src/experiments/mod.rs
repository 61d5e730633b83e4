//! Config-driven experiment runs over the three protocols, run artifacts,
//! and results tables.

mod config;
mod run;
mod table;

pub use config::{ExperimentConfig, KnowledgeConfig, ProtocolConfig};
pub use run::{
    column_name, evaluate_run, evaluate_test, method_name, prepare, run_experiment, table_cells, Prepared, RunOptions,
    RunOutcome, CHECKPOINT_DIR, CONFIG_SNAPSHOT, METRICS, PROVENANCE, REPORT_JSON, REPORT_TXT, SPLIT_MANIFEST,
};
pub use table::{emit_table, round1, AvgPlacement, Table, TableCell, AVG_LABEL};

use std::fmt;

/// Pipeline stage named in errors and exit messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Dataset,
    Split,
    Knowledge,
    Encoding,
    Model,
    Training,
    Evaluation,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Dataset => "dataset",
            Stage::Split => "split",
            Stage::Knowledge => "knowledge",
            Stage::Encoding => "encoding",
            Stage::Model => "model",
            Stage::Training => "training",
            Stage::Evaluation => "evaluation",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config invalid: {0}")]
    ConfigInvalid(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("inconsistent reports: {0}")]
    InconsistentReports(String),
}

impl ExperimentError {
    /// Stage name for exit messages.
    pub fn stage_name(&self) -> String {
        match self {
            ExperimentError::ConfigInvalid(_) => "config".into(),
            ExperimentError::Stage { stage, .. } => stage.to_string(),
            ExperimentError::InconsistentReports(_) => "table".into(),
        }
    }
}
