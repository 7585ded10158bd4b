//! CSV tables with a JSON metadata sidecar. Wall-clock times go to a
//! separate timing file so that the tables themselves are reproducible
//! byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::Result;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub table: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub rows: usize,
    pub failures: Vec<String>,
    pub config: ExperimentConfig,
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn timing_path(csv: &Path) -> PathBuf {
    csv.with_extension("timing.json")
}

/// Writes `rows` to `path` plus `<stem>.json` with the metadata.
pub fn write_table<R: Serialize>(
    path: &Path,
    rows: &[R],
    command: &str,
    cfg: &ExperimentConfig,
    failures: &[String],
) -> Result<()> {
    write_csv(path, rows)?;
    let meta = Sidecar {
        table: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        command: command.to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        code_version: CODE_VERSION.to_string(),
        rows: rows.len(),
        failures: failures.to_vec(),
        config: cfg.clone(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn write_timing<T: Serialize>(path: &Path, timing: &T) -> Result<()> {
    fs::write(timing_path(path), serde_json::to_string_pretty(timing)? + "\n")?;
    Ok(())
}
