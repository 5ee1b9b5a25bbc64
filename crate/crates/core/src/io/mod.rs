//! Configuration, checkpoints, CSV series and JSON summaries.

mod checkpoint;
mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diagnostics::{DiagnosticsRecord, COLUMNS};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC, VERSION,
};
pub use config::{
    parse_config, parse_config_as, ConfigError, ExperimentKind, ModelKind, RunConfig,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corrupt magic: not an RNLS checkpoint")]
    Magic,
    #[error("version mismatch: file has {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("truncated header")]
    TruncatedHeader,
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("bad header: {0}")]
    Header(String),
    #[error("no data rows")]
    Empty,
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Header plus one row per record, every value with 17 significant digits.
pub fn series_csv(records: &[DiagnosticsRecord]) -> Result<String, IoError> {
    if records.is_empty() {
        return Err(IoError::Empty);
    }
    let mut s = COLUMNS.join(",");
    s.push('\n');
    for r in records {
        let row = r.to_row();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v:.16e}");
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_series(records: &[DiagnosticsRecord], path: &Path) -> Result<(), IoError> {
    fs::write(path, series_csv(records)?)?;
    Ok(())
}

pub fn parse_series(text: &str) -> Result<Vec<DiagnosticsRecord>, IoError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(IoError::Empty)?;
    if header.split(',').map(str::trim).ne(COLUMNS.iter().copied()) {
        return Err(IoError::Csv {
            line: 1,
            message: format!("header must be {}", COLUMNS.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != COLUMNS.len() {
            return Err(IoError::Csv {
                line: i + 2,
                message: format!("expected 15 columns, got {}", fields.len()),
            });
        }
        let mut row = [0.0; 15];
        for (k, f) in fields.iter().enumerate() {
            row[k] = f.trim().parse().map_err(|_| IoError::Csv {
                line: i + 2,
                message: format!("column {}: cannot parse '{f}'", COLUMNS[k]),
            })?;
        }
        out.push(DiagnosticsRecord::from_row(&row));
    }
    if out.is_empty() {
        return Err(IoError::Empty);
    }
    Ok(out)
}

pub fn read_series(path: &Path) -> Result<Vec<DiagnosticsRecord>, IoError> {
    parse_series(&fs::read_to_string(path)?)
}

/// Hex SHA-256 of the effective config text.
pub fn config_hash(config: &RunConfig) -> String {
    let digest = Sha256::digest(config.echo().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    experiment: &'a str,
    version: &'a str,
    config_hash: String,
    exit_code: i32,
    result: &'a T,
}

/// Writes summary.json (deterministic) and timing.json (wall time).
pub fn write_summary<T: Serialize>(
    dir: &Path,
    config: &RunConfig,
    exit_code: i32,
    result: &T,
    wall_time: f64,
) -> Result<(), IoError> {
    let summary = Summary {
        experiment: config.experiment.name(),
        version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(config),
        exit_code,
        result,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(dir.join("summary.json"), text)?;
    let timing = serde_json::json!({ "wall_time_s": wall_time });
    fs::write(
        dir.join("timing.json"),
        serde_json::to_string_pretty(&timing)? + "\n",
    )?;
    Ok(())
}
