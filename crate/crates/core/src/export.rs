//! Long-format CSV writers shared by the result types.

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Io { path: path.display().to_string(), source: std::io::Error::other(format!("{other:?}")) },
    }
}

pub(crate) fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

/// Writes `values[entity][period]` as rows `(entity, period, value)`.
pub(crate) fn write_series(
    path: &Path,
    entity_col: &str,
    period_col: &str,
    ids: &[String],
    values: &[Vec<f64>],
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([entity_col, period_col, "value"]).map_err(|e| csv_err(path, e))?;
    for (id, row) in ids.iter().zip(values) {
        for (t, v) in row.iter().enumerate() {
            w.write_record([id.as_str(), &t.to_string(), &v.to_string()]).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report types serialise");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
