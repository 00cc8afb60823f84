use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::model::{validate_query_record, Area, QueryRecord, Subfield};

/// A dataset manifest: record files relative to the manifest's directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default)]
    pub name: String,
    pub records: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIssue {
    pub file: PathBuf,
    pub message: String,
}

impl fmt::Display for DatasetIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.file.display(), self.message)
    }
}

/// Every problem found while loading, not just the first.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct DatasetError {
    pub issues: Vec<DatasetIssue>,
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dataset has {} problem(s)", self.issues.len())?;
        for issue in &self.issues {
            write!(f, "\n  {issue}")?;
        }
        Ok(())
    }
}

fn record_files(path: &Path, issues: &mut Vec<DatasetIssue>) -> Vec<PathBuf> {
    let issue = |message: String| DatasetIssue { file: path.to_path_buf(), message };
    if path.is_dir() {
        let manifest = path.join("manifest.json");
        if manifest.is_file() {
            return record_files(&manifest, issues);
        }
        let entries = match std::fs::read_dir(path) {
            Ok(entries) => entries,
            Err(e) => {
                issues.push(issue(e.to_string()));
                return Vec::new();
            }
        };
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        files.sort();
        return files;
    }
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) => {
            issues.push(issue(e.to_string()));
            return Vec::new();
        }
    };
    match serde_json::from_str::<DatasetManifest>(&text) {
        Ok(manifest) => {
            let base = path.parent().unwrap_or(Path::new("."));
            manifest.records.iter().map(|r| base.join(r)).collect()
        }
        Err(e) => {
            issues.push(issue(format!("not a dataset manifest: {e}")));
            Vec::new()
        }
    }
}

/// Loads and validates a dataset from a manifest file or a directory of
/// record files (a directory's own `manifest.json` wins when present).
/// Image paths are resolved against each record file's directory.
pub fn load_dataset(path: &Path) -> Result<Vec<QueryRecord>, DatasetError> {
    let mut issues = Vec::new();
    let files = record_files(path, &mut issues);
    let mut records = Vec::new();
    let mut seen: HashMap<String, PathBuf> = HashMap::new();
    for file in files {
        let issue = |message: String| DatasetIssue { file: file.clone(), message };
        let text = match std::fs::read_to_string(&file) {
            Ok(text) => text,
            Err(e) => {
                issues.push(issue(e.to_string()));
                continue;
            }
        };
        let mut record = match QueryRecord::from_json(&text) {
            Ok(record) => record,
            Err(e) => {
                issues.push(issue(format!("parse error: {e}")));
                continue;
            }
        };
        if let Some(dir) = file.parent() {
            for image in record.images_mut() {
                image.resolve_against(dir);
            }
        }
        for v in validate_query_record(&record) {
            issues.push(issue(format!("record {:?}: {v}", record.id)));
        }
        if let Some(first) = seen.get(&record.id) {
            issues.push(issue(format!("duplicate id {:?}, first defined in {}", record.id, first.display())));
            continue;
        }
        seen.insert(record.id.clone(), file.clone());
        records.push(record);
    }
    if issues.is_empty() {
        Ok(records)
    } else {
        Err(DatasetError { issues })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CutoffOutcome {
    pub kept: Vec<QueryRecord>,
    pub excluded: Vec<String>,
    pub warnings: Vec<String>,
}

/// Drops News queries dated on or before `cutoff`. Knowledge queries are
/// always kept; undated News queries (false premise) are kept with a warning.
pub fn apply_cutoff_filter(records: &[QueryRecord], cutoff: NaiveDate) -> CutoffOutcome {
    let mut out = CutoffOutcome::default();
    for record in records {
        match (record.area, record.timestamp) {
            (Area::Knowledge, _) => out.kept.push(record.clone()),
            (Area::News, Some(date)) if date <= cutoff => out.excluded.push(record.id.clone()),
            (Area::News, Some(_)) => out.kept.push(record.clone()),
            (Area::News, None) => {
                let why = if record.subfield == Subfield::FalsePremise { "false-premise query" } else { "query" };
                out.warnings.push(format!("{} kept: undated News {why}, cutoff cannot apply", record.id));
                out.kept.push(record.clone());
            }
        }
    }
    out
}
