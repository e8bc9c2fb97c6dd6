//! Output files. Every file carries the scenario that produced it.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::scenario::EMBED_PREFIX;

/// Output directory plus the overwrite policy.
pub struct OutDir {
    pub dir: PathBuf,
    pub overwrite: bool,
}

impl OutDir {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Refuses up front if any of `names` exists and overwriting is off.
    pub fn check(&self, names: &[String]) -> CliResult<()> {
        if self.overwrite {
            return Ok(());
        }
        let existing: Vec<String> = names
            .iter()
            .map(|n| self.path(n))
            .filter(|p| p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if existing.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!(
                "refusing to overwrite {} (pass --overwrite)",
                existing.join(", ")
            )))
        }
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path(name);
        let mut opts = OpenOptions::new();
        opts.write(true);
        if self.overwrite {
            opts.create(true).truncate(true);
        } else {
            opts.create_new(true);
        }
        let mut f = opts.open(&path).map_err(|e| io_error(&path, e))?;
        f.write_all(contents.as_bytes()).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    /// CSV with the scenario as leading `#@ ` lines, then a header.
    pub fn write_csv(&self, name: &str, scenario: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<PathBuf> {
        let mut s = String::new();
        for line in scenario.lines() {
            let _ = writeln!(s, "{EMBED_PREFIX}{line}");
        }
        s.push_str(&header.join(","));
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        self.write(name, &s)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Usage(format!("cannot encode {name}: {e}")))?;
        text.push('\n');
        self.write(name, &text)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

/// Shortest representation that reads back to the same `f64`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}
