//! On-disk formats: trajectory CSV, JSON summaries and monitor JSONL.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::solver::TrajectoryRow;

/// Scientific notation with 17 significant digits, which round-trips `f64`.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TrajectoryRow::COLUMNS)?;
    for row in rows {
        let mut record = Vec::with_capacity(TrajectoryRow::COLUMNS.len());
        record.push(row.t.to_string());
        record.extend(row.values().iter().map(|v| fmt_float(*v)));
        w.write_record(&record)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Writes a table of floats under the given header.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_float(*v)))?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}
