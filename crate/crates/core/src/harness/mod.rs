//! Dataset loading and filtering, run storage, scoring and reports, plus a
//! synthetic benchmark generator for offline runs.

mod dataset;
mod report;
mod results;
mod score;
mod synth;

use std::path::PathBuf;

pub use dataset::{apply_cutoff_filter, load_dataset, CutoffOutcome, DatasetError, DatasetIssue, DatasetManifest};
pub use report::{emit_report, ReportFormat};
pub use results::{QueryResult, ResultsDir, RunManifest, TaskFailure, TaskResult, MANIFEST_FILE, REPORT_FILE};
pub use score::{component_means, score_run};
pub use synth::{generate_fixtures, synthetic_page, SyntheticFixtures, SyntheticWeb};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("run {0} already exists")]
    RunExists(String),
    #[error("no run with id {0}")]
    RunNotFound(String),
    #[error("result for query {0} has no matching dataset record")]
    UnknownQuery(String),
    #[error(transparent)]
    Imaging(#[from] crate::imaging::ImagingError),
    #[error(transparent)]
    Web(#[from] crate::webio::WebError),
}
