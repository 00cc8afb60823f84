use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::WebError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureMode {
    /// Call live backends, store nothing.
    Live,
    /// Call live backends and store every response before returning it.
    Record,
    /// Serve stored responses only; never touch the network.
    Replay,
}

impl std::str::FromStr for FixtureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(FixtureMode::Live),
            "record" => Ok(FixtureMode::Record),
            "replay" => Ok(FixtureMode::Replay),
            other => Err(format!("unknown fixture mode {other:?} (expected live, record or replay)")),
        }
    }
}

/// SHA-256 over the operation name and the canonical JSON of its arguments.
/// `serde_json` maps are key-sorted, so the encoding is stable.
pub fn fixture_key(op: &str, args: &Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(op.as_bytes());
    hasher.update([0u8]);
    hasher.update(serde_json::to_vec(args).expect("json value serializes"));
    hex::encode(hasher.finalize())
}

/// Content-addressed response store laid out as `<root>/<op>/<key>.<ext>`.
#[derive(Debug, Clone)]
pub struct FixtureStore {
    root: PathBuf,
}

impl FixtureStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FixtureStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, op: &str, key: &str, ext: &str) -> PathBuf {
        self.root.join(op).join(format!("{key}.{ext}"))
    }

    pub fn read_bytes(&self, op: &str, key: &str, ext: &str) -> Result<Vec<u8>, WebError> {
        let path = self.path(op, key, ext);
        match std::fs::read(&path) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(WebError::FixtureMiss { op: op.to_string(), key: key.to_string() })
            }
            Err(e) => Err(WebError::Fixture { path: path.display().to_string(), message: e.to_string() }),
        }
    }

    pub fn read_json<T: DeserializeOwned>(&self, op: &str, key: &str) -> Result<T, WebError> {
        let bytes = self.read_bytes(op, key, "json")?;
        serde_json::from_slice(&bytes).map_err(|e| WebError::Fixture {
            path: self.path(op, key, "json").display().to_string(),
            message: e.to_string(),
        })
    }

    /// Atomic write: temp file in the target directory, then rename.
    pub fn write_bytes(&self, op: &str, key: &str, ext: &str, bytes: &[u8]) -> Result<(), WebError> {
        let path = self.path(op, key, ext);
        let fail =
            |e: &dyn std::fmt::Display| WebError::Fixture { path: path.display().to_string(), message: e.to_string() };
        let dir = path.parent().expect("fixture path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| fail(&e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
        tmp.write_all(bytes).map_err(|e| fail(&e))?;
        tmp.persist(&path).map_err(|e| fail(&e.error))?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, op: &str, key: &str, value: &T) -> Result<(), WebError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("fixture serializes");
        bytes.push(b'\n');
        self.write_bytes(op, key, "json", &bytes)
    }
}
