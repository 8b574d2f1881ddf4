use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::{CaseData, PowerSystem};
use crate::error::{Error, Result};

/// Reads and validates a JSON case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<PowerSystem> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let case = parse_case(&text, &path.display().to_string())?;
    PowerSystem::new(case)
}

pub(crate) fn parse_case(text: &str, origin: &str) -> Result<CaseData> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })
}

pub fn save_case(sys: &PowerSystem, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(sys.case()).expect("case data is always serialisable");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryKind {
    Load,
    Wind,
}

impl HistoryKind {
    pub fn name(self) -> &'static str {
        match self {
            HistoryKind::Load => "load",
            HistoryKind::Wind => "wind",
        }
    }
}

/// Past observations, one row per timestamp, columns in system order.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryMatrix {
    ids: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl HistoryMatrix {
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if let Some((r, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != ids.len()) {
            return Err(Error::Dimension(format!(
                "history row {r} has {} values, header has {}",
                row.len(),
                ids.len()
            )));
        }
        if rows.len() < 2 {
            return Err(Error::Dimension(format!(
                "history needs at least 2 observations for a covariance, found {}",
                rows.len()
            )));
        }
        Ok(Self { ids, rows })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.ids.len()
    }

    /// Parses CSV text and reorders columns to match `expected` ids.
    pub fn from_csv<R: Read>(reader: R, origin: &str, expected: &[String]) -> Result<Self> {
        let hist_err = |msg: String| Error::History { path: origin.to_string(), msg };
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| hist_err(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.len() != expected.len() {
            return Err(Error::Dimension(format!(
                "{origin}: {} columns, system has {}",
                header.len(),
                expected.len()
            )));
        }
        let order: Vec<usize> = expected
            .iter()
            .map(|id| {
                header
                    .iter()
                    .position(|h| h == id)
                    .ok_or_else(|| Error::Dimension(format!("{origin}: no column for `{id}`")))
            })
            .collect::<Result<_>>()?;

        let mut rows = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| hist_err(e.to_string()))?;
            let line = rec.position().map_or(r + 2, |p| p.line() as usize);
            if rec.len() != header.len() {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line,
                    column: rec.len() + 1,
                    msg: format!("expected {} cells, found {}", header.len(), rec.len()),
                });
            }
            let mut row = vec![0.0; expected.len()];
            for (dst, &src) in order.iter().enumerate() {
                let cell = &rec[src];
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    path: origin.to_string(),
                    line,
                    column: src + 1,
                    msg: if cell.is_empty() { "missing value".into() } else { format!("non-numeric cell `{cell}`") },
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        path: origin.to_string(),
                        line,
                        column: src + 1,
                        msg: format!("non-finite value `{cell}`"),
                    });
                }
                row[dst] = v;
            }
            rows.push(row);
        }
        HistoryMatrix::new(expected.to_vec(), rows).map_err(|e| match e {
            Error::Dimension(msg) => Error::Dimension(format!("{origin}: {msg}")),
            other => other,
        })
    }
}

/// Reads a history CSV whose header names the system's buses or wind farms.
pub fn load_history(path: impl AsRef<Path>, kind: HistoryKind, sys: &PowerSystem) -> Result<HistoryMatrix> {
    let path = path.as_ref();
    let ids: Vec<String> = match kind {
        HistoryKind::Load => sys.buses().iter().map(|b| b.id.clone()).collect(),
        HistoryKind::Wind => sys.wind().iter().map(|w| w.id.clone()).collect(),
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    HistoryMatrix::from_csv(file, &path.display().to_string(), &ids)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::ramp_example;
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn month_of_hourly_rows_accepted() {
        let mut text = String::from("a,b\n");
        for h in 0..720 {
            text.push_str(&format!("{},{}\n", h % 24, 2 * (h % 7)));
        }
        let m = HistoryMatrix::from_csv(text.as_bytes(), "mem", &ids(&["a", "b"])).unwrap();
        assert_eq!((m.n_obs(), m.n_cols()), (720, 2));
    }

    #[test]
    fn columns_reordered_to_system_order() {
        let text = "b,a\n1,2\n3,4\n";
        let m = HistoryMatrix::from_csv(text.as_bytes(), "mem", &ids(&["a", "b"])).unwrap();
        assert_eq!(m.rows(), &[vec![2.0, 1.0], vec![4.0, 3.0]]);
    }

    #[test]
    fn single_row_rejected() {
        let err = HistoryMatrix::from_csv("a\n1\n".as_bytes(), "mem", &ids(&["a"])).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)), "{err}");
    }

    #[test]
    fn missing_cell_is_parse_error() {
        let err = HistoryMatrix::from_csv("a,b\n1,2\n3,\n".as_bytes(), "mem", &ids(&["a", "b"])).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (3, 2)),
            e => panic!("unexpected {e}"),
        }
        let err = HistoryMatrix::from_csv("a,b\n1,2\n3\n".as_bytes(), "mem", &ids(&["a", "b"])).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn non_numeric_cell_is_parse_error() {
        let err = HistoryMatrix::from_csv("a\n1\nx\n".as_bytes(), "mem", &ids(&["a"])).unwrap_err();
        assert!(err.to_string().contains("non-numeric"));
    }

    #[test]
    fn column_count_mismatch() {
        let err = HistoryMatrix::from_csv("a,b\n1,2\n3,4\n".as_bytes(), "mem", &ids(&["a"])).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn case_parse_error_reports_position() {
        let err = parse_case("{\n  \"buses\": [\n    oops\n", "case.json").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unbounded_sentinel_round_trips() {
        let sys = PowerSystem::new(ramp_example()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("case.json");
        save_case(&sys, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"unbounded\""));
        assert_eq!(load_case(&path).unwrap(), sys);
    }

    #[test]
    fn bad_ramp_string_rejected() {
        let text = serde_json::to_string(&ramp_example()).unwrap().replacen("\"unbounded\"", "\"infinite\"", 1);
        assert!(parse_case(&text, "x").is_err());
    }
}
