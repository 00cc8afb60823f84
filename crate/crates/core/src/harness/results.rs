use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::{PipelineConfig, ScoreReport, SessionTranscript, Stage, TaskKind};
use crate::pipeline::{PipelineError, TtcConfig, TtcOutcome};
use crate::webio::FixtureMode;

/// Immutable description of one run, written before any query executes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub dataset: PathBuf,
    pub endpoint: String,
    pub config: PipelineConfig,
    pub tasks: Vec<TaskKind>,
    pub created_at: DateTime<Utc>,
    pub fixture_mode: FixtureMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttc: Option<TtcConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub stage: Option<Stage>,
    pub message: String,
    pub transport: bool,
}

impl From<&PipelineError> for TaskFailure {
    fn from(e: &PipelineError) -> Self {
        TaskFailure { stage: e.stage(), message: e.to_string(), transport: e.is_transport() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<SessionTranscript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TaskFailure>,
}

impl TaskResult {
    pub fn from_outcome(outcome: Result<SessionTranscript, PipelineError>) -> Self {
        match outcome {
            Ok(transcript) => TaskResult { transcript: Some(transcript), error: None },
            Err(e) => TaskResult { transcript: None, error: Some(TaskFailure::from(&e)) },
        }
    }
}

/// Everything produced for one query in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    #[serde(default)]
    pub tasks: BTreeMap<TaskKind, TaskResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttc: Option<TtcOutcome>,
}

impl QueryResult {
    pub fn new(query_id: impl Into<String>) -> Self {
        QueryResult { query_id: query_id.into(), tasks: BTreeMap::new(), ttc: None }
    }

    pub fn transcript(&self, kind: TaskKind) -> Option<&SessionTranscript> {
        self.tasks.get(&kind).and_then(|t| t.transcript.as_ref())
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";

/// `<root>/<run_id>/{manifest.json, <query_id>.json, report.json}`.
#[derive(Debug, Clone)]
pub struct ResultsDir {
    root: PathBuf,
}

fn file_stem(query_id: &str) -> String {
    query_id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("result types serialize");
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Json { path: path.to_path_buf(), message: e.to_string() })
}

impl ResultsDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResultsDir { root: root.into() }
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    pub fn create_run(&self, manifest: &RunManifest) -> Result<PathBuf, HarnessError> {
        let dir = self.run_dir(&manifest.run_id);
        if dir.join(MANIFEST_FILE).exists() {
            return Err(HarnessError::RunExists(manifest.run_id.clone()));
        }
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_json(&dir.join(MANIFEST_FILE), manifest)?;
        Ok(dir)
    }

    pub fn write_query_result(&self, run_id: &str, result: &QueryResult) -> Result<(), HarnessError> {
        write_json(&self.run_dir(run_id).join(format!("{}.json", file_stem(&result.query_id))), result)
    }

    pub fn load_manifest(&self, run_id: &str) -> Result<RunManifest, HarnessError> {
        let path = self.run_dir(run_id).join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(HarnessError::RunNotFound(run_id.to_string()));
        }
        read_json(&path)
    }

    /// Per-query results sorted by query id.
    pub fn load_results(&self, run_id: &str) -> Result<Vec<QueryResult>, HarnessError> {
        let dir = self.run_dir(run_id);
        if !dir.join(MANIFEST_FILE).is_file() {
            return Err(HarnessError::RunNotFound(run_id.to_string()));
        }
        let mut results = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name.ends_with(".json") && name != MANIFEST_FILE && name != REPORT_FILE {
                results.push(read_json::<QueryResult>(&path)?);
            }
        }
        results.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        Ok(results)
    }

    pub fn write_report(&self, run_id: &str, report: &ScoreReport) -> Result<PathBuf, HarnessError> {
        let path = self.run_dir(run_id).join(REPORT_FILE);
        write_json(&path, report)?;
        Ok(path)
    }

    pub fn load_report(&self, run_id: &str) -> Result<ScoreReport, HarnessError> {
        let path = self.run_dir(run_id).join(REPORT_FILE);
        if !self.run_dir(run_id).join(MANIFEST_FILE).is_file() {
            return Err(HarnessError::RunNotFound(run_id.to_string()));
        }
        read_json(&path)
    }
}
