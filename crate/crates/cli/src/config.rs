//! `--config` files: TOML whose keys mirror the command-line flags, plus
//! `[workload]`, `[cost]` and `[drive]` tables layered over the defaults.
//! Flags win over the file, the file wins over built-in defaults.

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A configuration or usage mistake. Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub algorithm: Option<String>,
    pub algorithms: Option<Vec<String>>,
    pub shards: Option<u32>,
    pub shard_counts: Option<Vec<u32>>,
    pub feedback: Option<bool>,
    pub window: Option<usize>,
    pub taint_threshold: Option<f64>,
    pub fail_fraction: Option<f64>,
    pub workload: Option<toml::Table>,
    pub cost: Option<toml::Table>,
    pub drive: Option<toml::Table>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return usage(format!("cannot read config {}: {e}", path.display())),
        };
        Self::parse(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

fn merge(base: &mut toml::Table, patch: &toml::Table) {
    for (k, v) in patch {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) => merge(b, p),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// `base` with the keys of `patch` laid over it. Unknown keys are rejected
/// by the target type.
pub fn overlay<T: Serialize + DeserializeOwned>(base: &T, patch: Option<&toml::Table>, what: &str) -> anyhow::Result<T> {
    let Some(patch) = patch else {
        let table = toml::Table::try_from(base)?;
        return Ok(table.try_into()?);
    };
    let mut table = toml::Table::try_from(base)?;
    merge(&mut table, patch);
    match table.try_into() {
        Ok(v) => Ok(v),
        Err(e) => usage(format!("[{what}]: {e}")),
    }
}
