//! Dataset loading, the evaluation procedures, and their reports.

pub mod data;
pub mod eval;
pub mod report;
pub mod synthetic;

use std::path::PathBuf;

use thiserror::Error;

use crate::backend::BackendError;
use crate::clustering::ClusteringError;
use crate::metrics::MetricsError;
use crate::prompting::PromptError;

pub use data::{filter_split, label_set, load_cluster_corpus, load_csts, ClusterRecord, CstsRecord, DataFormat, Split};
pub use eval::{cluster_eval, condition_search, csts_eval, template_search, ClusterSettings, Session};
pub use report::{
    ClusterReport, ConditionSearchReport, CstsReport, EvalReport, Summarize, Task, TemplateSearchReport, ToTsv,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: missing required column {column:?}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}, row {row}: {message}")]
    Parse { path: PathBuf, row: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    UnknownFormat(String),
    #[error("need at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("zero variance: {0}")]
    ZeroVariance(String),
    #[error("no {0} to search")]
    NothingToSearch(&'static str),
    #[error("record {row}: {source}")]
    Record {
        row: usize,
        #[source]
        source: PromptError,
    },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("malformed report: {0}")]
    Report(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
}
