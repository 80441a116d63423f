//! File formats: box CSV, road GeoJSON, count/toll/milepost CSV, model JSON
//! and report CSVs.
//!
//! Readers collect every problem they find as a [`Diagnostic`] instead of
//! stopping at the first one, so `validate` and the loaders share one code
//! path.

mod boxes;
mod counts;
mod model;
mod reports;
mod roads;

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};

pub use boxes::{read_boxes, write_boxes, BOX_HEADER};
pub use counts::{
    read_counts, read_mileposts, read_trips, write_counts, write_trips, COUNT_HEADER, MILEPOST_HEADER,
    TOLL_HEADER,
};
pub use model::{read_model, write_model, MODEL_FORMAT, MODEL_VERSION};
pub use reports::{
    estimate_header, estimate_row, write_crossval, write_estimate, write_samples, write_selection,
    write_sweep, SWEEP_HEADER,
};
pub use roads::{read_roads, roads_to_geojson, write_roads};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based line, or feature index for GeoJSON.
    pub line: Option<u64>,
    pub column: Option<String>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: Option<u64>, column: Option<&str>, message: impl Into<String>) -> Self {
        Diagnostic {
            line,
            column: column.map(str::to_string),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column `{c}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(c)) => write!(f, "column `{c}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {} problem(s), first: {}", diagnostics.len(), diagnostics[0])]
    Invalid {
        path: PathBuf,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("{path}: {message}")]
    Write { path: PathBuf, message: String },
}

impl IoError {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            IoError::Invalid { diagnostics, .. } => diagnostics.clone(),
            other => vec![Diagnostic::new(None, None, other.to_string())],
        }
    }
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path).map(BufReader::new).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn read_to_string(path: &Path) -> Result<String, IoError> {
    let mut s = String::new();
    open(path)?
        .read_to_string(&mut s)
        .map_err(|source| IoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(s)
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn invalid(path: &Path, diagnostics: Vec<Diagnostic>) -> IoError {
    IoError::Invalid {
        path: path.to_path_buf(),
        diagnostics,
    }
}

pub(crate) fn write_err(path: &Path, e: impl fmt::Display) -> IoError {
    IoError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads a CSV with an exact header. Yields `(line, record)` pairs and
/// reports a header mismatch as a diagnostic.
pub(crate) fn csv_records<R: Read>(
    reader: R,
    expected: &[&str],
    diags: &mut Vec<Diagnostic>,
) -> Vec<(u64, csv::StringRecord)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    match rdr.headers() {
        Ok(h) => {
            let got: Vec<&str> = h.iter().collect();
            if got != expected {
                diags.push(Diagnostic::new(
                    Some(1),
                    None,
                    format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
                ));
                return Vec::new();
            }
        }
        Err(e) => {
            diags.push(Diagnostic::new(Some(1), None, format!("unreadable header: {e}")));
            return Vec::new();
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        match rec {
            Ok(r) => {
                let line = r.position().map_or(0, |p| p.line());
                if r.len() != expected.len() {
                    let missing: Vec<&str> = expected.iter().skip(r.len()).copied().collect();
                    let column = missing.first().copied();
                    let detail = if missing.is_empty() {
                        format!("{} extra field(s)", r.len() - expected.len())
                    } else {
                        format!("missing {}", missing.join(", "))
                    };
                    diags.push(Diagnostic::new(
                        Some(line),
                        column,
                        format!("expected {} fields, found {} ({detail})", expected.len(), r.len()),
                    ));
                    continue;
                }
                out.push((line, r));
            }
            Err(e) => {
                let line = e.position().map(|p| p.line());
                diags.push(Diagnostic::new(line, None, e.to_string()));
            }
        }
    }
    out
}

/// Parses a float field, recording a diagnostic on failure.
pub(crate) fn parse_f64(
    rec: &csv::StringRecord,
    idx: usize,
    name: &str,
    line: u64,
    diags: &mut Vec<Diagnostic>,
) -> Option<f64> {
    let raw = &rec[idx];
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(v),
        _ => {
            diags.push(Diagnostic::new(Some(line), Some(name), format!("`{raw}` is not a finite number")));
            None
        }
    }
}

pub(crate) const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// ISO 8601 local timestamp, with or without seconds.
pub fn parse_timestamp(s: &str) -> Result<chrono::NaiveDateTime, String> {
    let s = s.trim();
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = chrono::NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t);
        }
    }
    let hour = s
        .split(['T', ' '])
        .nth(1)
        .and_then(|t| t.split(':').next())
        .and_then(|h| h.parse::<u32>().ok());
    match hour {
        Some(h) if h > 23 => Err(format!("hour {h} out of range 0-23 in `{s}`")),
        _ => Err(format!("`{s}` is not an ISO 8601 timestamp (YYYY-MM-DDTHH:MM[:SS])")),
    }
}
