//! CSV and JSON writers. CSV is comma-separated with a mandatory header and
//! LF line endings; JSON is pretty-printed UTF-8 with a trailing newline and
//! keys in struct-field order. Nothing time-dependent is ever written.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};

/// Output directory of one command run.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::io(p, e))
    }

    /// Writes `rows` under `header`; every row must match the header width.
    pub fn csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let p = self.path(name);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&p)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| CliError::io(p, e))
    }
}

/// Shortest round-trip form, with an exponent for very small or large
/// magnitudes; `NaN` and infinities are spelled out.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        serde_json::to_string(&v).expect("finite floats serialize")
    } else {
        format!("{v}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}
