//! Schema checks for every input file type, reporting all problems at once.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::geo::DEFAULT_FILTER_RADIUS_M;
use crate::io::{read_boxes, read_counts, read_mileposts, read_model, read_roads, read_trips, Diagnostic};
use crate::pipeline::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FileKind {
    Boxes,
    Roads,
    Counts,
    Trips,
    Mileposts,
    Model,
    Config,
}

impl FileKind {
    pub const ALL: [FileKind; 7] = [
        FileKind::Boxes,
        FileKind::Roads,
        FileKind::Counts,
        FileKind::Trips,
        FileKind::Mileposts,
        FileKind::Model,
        FileKind::Config,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FileKind::Boxes => "boxes",
            FileKind::Roads => "roads",
            FileKind::Counts => "counts",
            FileKind::Trips => "trips",
            FileKind::Mileposts => "mileposts",
            FileKind::Model => "model",
            FileKind::Config => "config",
        }
    }
}

impl fmt::Display for FileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FileKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FileKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown file kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileReport {
    pub path: PathBuf,
    pub kind: FileKind,
    /// Number of records (boxes, roads, rows, plazas); 1 for a model or config.
    pub records: usize,
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<String>,
}

impl FileReport {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

impl fmt::Display for FileReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            write!(f, "{} ({}): ok, {} record(s)", self.path.display(), self.kind, self.records)?;
        } else {
            write!(f, "{} ({}): {} error(s)", self.path.display(), self.kind, self.errors.len())?;
            for d in &self.errors {
                write!(f, "\n  {d}")?;
            }
        }
        for w in &self.warnings {
            write!(f, "\n  warning: {w}")?;
        }
        Ok(())
    }
}

pub fn validate_file(path: &Path, kind: FileKind) -> FileReport {
    let mut warnings = Vec::new();
    let result: Result<usize, Vec<Diagnostic>> = match kind {
        FileKind::Boxes => read_boxes(path).map(|b| {
            if b.iter().any(|b| b.score.is_none()) && b.iter().any(|b| b.score.is_some()) {
                warnings.push("some boxes have a score and some do not".to_string());
            }
            b.len()
        }),
        FileKind::Roads => read_roads(path, DEFAULT_FILTER_RADIUS_M).map(|r| r.len()),
        FileKind::Counts => read_counts(path).map(|c| c.len()),
        FileKind::Trips => read_trips(path).map(|t| t.len()),
        FileKind::Mileposts => read_mileposts(path).map(|m| m.len()),
        FileKind::Model => read_model(path).map(|m| {
            if !m.feasible {
                warnings.push(format!("model {} predicts a nonpositive factor somewhere on the grid", m.spec));
            }
            1
        }),
        FileKind::Config => {
            return match PipelineConfig::load(path) {
                Ok(_) => report(path, kind, Ok(1), warnings),
                Err(e) => report(path, kind, Err(vec![Diagnostic::new(None, None, e.to_string())]), warnings),
            }
        }
    }
    .map_err(|e| e.diagnostics());
    report(path, kind, result, warnings)
}

fn report(path: &Path, kind: FileKind, result: Result<usize, Vec<Diagnostic>>, warnings: Vec<String>) -> FileReport {
    let (records, errors) = match result {
        Ok(n) => (n, Vec::new()),
        Err(d) => (0, d),
    };
    FileReport {
        path: path.to_path_buf(),
        kind,
        records,
        errors,
        warnings,
    }
}

pub fn validate_inputs(files: &[(PathBuf, FileKind)]) -> Vec<FileReport> {
    files.iter().map(|(p, k)| validate_file(p, *k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reports_every_bad_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        std::fs::write(
            &p,
            "station_id,region,timestamp_iso8601,count,vehicle_class\n\
             s,NY,2017-01-01T24:00:00,4,\n\
             s,NY,2017-01-01T01:00:00,x,\n\
             s,NY,2017-01-01T02:00:00,3,\n",
        )
        .unwrap();
        let r = validate_file(&p, FileKind::Counts);
        assert_eq!(r.errors.len(), 2);
        assert_eq!(r.errors[0].line, Some(2));
        assert_eq!(r.errors[1].column.as_deref(), Some("count"));

        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "threshold = 0.4\n").unwrap();
        assert!(validate_file(&cfg, FileKind::Config).ok());
        std::fs::write(&cfg, "treshold = 0.4\n").unwrap();
        assert!(!validate_file(&cfg, FileKind::Config).ok());

        let missing = validate_file(&dir.path().join("nope.csv"), FileKind::Boxes);
        assert!(!missing.ok());
    }

    #[test]
    fn kinds_parse() {
        for k in FileKind::ALL {
            assert_eq!(k.name().parse::<FileKind>().unwrap(), k);
        }
        assert!("x".parse::<FileKind>().is_err());
    }
}
