//! File writers. Every file starts with a stamp carrying the config hash
//! and seed.
//!
//! * CSV: `# mtsfm <kind> config_hash=<hex> seed=<n>`, then a header row,
//!   independent variable first.
//! * JSON: objects whose first two keys are `config_hash` and `seed`.
//! * Matrix text: one header line (stamp plus axis description), then one
//!   whitespace-separated row per row-axis value.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    fn line(&self, kind: &str) -> String {
        format!(
            "# mtsfm {kind} config_hash={} seed={}",
            self.config_hash, self.seed
        )
    }
}

/// I/O failure tagged with the file it concerns.
#[derive(Debug)]
pub struct IoError {
    pub path: PathBuf,
    pub source: io::Error,
}

impl std::fmt::Display for IoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.source)
    }
}

impl std::error::Error for IoError {}

pub type IoResult<T> = std::result::Result<T, IoError>;

/// Output directory plus the stamp, and the list of files written so far.
#[derive(Debug)]
pub struct Writer {
    dir: PathBuf,
    stamp: Stamp,
    floor_db: f64,
    written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, stamp: Stamp, floor_db: f64) -> IoResult<Self> {
        fs::create_dir_all(dir).map_err(|source| IoError {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            stamp,
            floor_db,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// `10 log10(x)` clamped to the export floor.
    pub fn db(&self, x: f64) -> f64 {
        mtsfm::analysis::metrics::power_db_floored(x, self.floor_db)
    }

    fn put(&mut self, name: &str, text: String) -> IoResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|source| IoError {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv<S: AsRef<str>>(
        &mut self,
        name: &str,
        kind: &str,
        header: &[S],
        rows: &[Vec<f64>],
    ) -> IoResult<()> {
        let mut text = self.stamp.line(kind);
        text.push('\n');
        let names: Vec<&str> = header.iter().map(|h| h.as_ref()).collect();
        text.push_str(&names.join(","));
        text.push('\n');
        for row in rows {
            let mut first = true;
            for v in row {
                if !first {
                    text.push(',');
                }
                first = false;
                push_num(&mut text, *v);
            }
            text.push('\n');
        }
        self.put(name, text)
    }

    /// `matrix[r][c]` with uniform axes described by `(start, step, count)`.
    pub fn matrix(
        &mut self,
        name: &str,
        kind: &str,
        rows: (&str, &[f64]),
        cols: (&str, &[f64]),
        matrix: &[Vec<f64>],
    ) -> IoResult<()> {
        let mut text = self.stamp.line(kind);
        for (tag, (label, axis)) in [("rows", rows), ("cols", cols)] {
            let start = axis.first().copied().unwrap_or(0.0);
            let step = if axis.len() > 1 {
                (axis[axis.len() - 1] - start) / (axis.len() - 1) as f64
            } else {
                0.0
            };
            let _ = write!(text, " {tag}={label}:{start}:{step}:{}", axis.len());
        }
        text.push('\n');
        for row in matrix {
            let mut first = true;
            for v in row {
                if !first {
                    text.push(' ');
                }
                first = false;
                push_num(&mut text, *v);
            }
            text.push('\n');
        }
        self.put(name, text)
    }

    /// Pretty JSON with the stamp fields first.
    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> IoResult<()> {
        #[derive(Serialize)]
        struct Stamped<'a, T> {
            config_hash: &'a str,
            seed: u64,
            #[serde(flatten)]
            body: &'a T,
        }
        let doc = Stamped {
            config_hash: &self.stamp.config_hash,
            seed: self.stamp.seed,
            body,
        };
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| IoError {
            path: self.dir.join(name),
            source: io::Error::new(io::ErrorKind::InvalidData, e),
        })?;
        text.push('\n');
        self.put(name, text)
    }
}

// Shortest round-trip form, exponent notation for very small or large
// magnitudes.
fn push_num(out: &mut String, v: f64) {
    if v == 0.0 || (v.is_finite() && (1e-5..1e16).contains(&v.abs())) {
        let _ = write!(out, "{v}");
    } else if v.is_finite() {
        let _ = write!(out, "{v:e}");
    } else if v.is_nan() {
        out.push_str("nan");
    } else if v > 0.0 {
        out.push_str("inf");
    } else {
        out.push_str("-inf");
    }
}
