//! Stance datasets: labels, examples, delimited-file loading and the split
//! construction for the target-specific, cross-target and zero/few-shot
//! protocols.

mod load;
mod split;
mod types;

use std::path::PathBuf;

pub use load::{load_dataset, IssueKind, LoadReport, RowIssue};
pub use split::{
    build_split, partition_from_flags, partition_zero_few, target_train_counts, Protocol, ResolvedSplits, SplitPlan,
    ZeroFewPartition,
};
pub use types::{ColumnMap, DatasetName, DatasetSpec, IngestFormat, LabelArity, Split, SplitFiles, StanceExample, StanceLabel};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(LoadReport),
    #[error("reading {path}: {source}", path = .0.display(), source = .1)]
    Csv(PathBuf, #[source] csv::Error),
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("unknown target {0:?}")]
    UnknownTarget(String),
    #[error("invalid target pair: {0}")]
    InvalidPair(String),
    #[error("split plan refers to unknown example {0:?}")]
    UnknownExample(String),
    #[error("{0} split is empty")]
    EmptySplit(Split),
}
