use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

/// Writes artifacts into one output directory.
pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(OutputDir { dir: dir.to_path_buf() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json(&self, name: &str, value: &impl Serialize) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path(name), text).with_context(|| format!("writing {name}"))
    }

    pub fn csv<R, S>(&self, name: &str, header: &[&str], rows: R) -> anyhow::Result<()>
    where
        R: IntoIterator<Item = Vec<S>>,
        S: AsRef<str>,
    {
        let mut w = csv::Writer::from_path(self.path(name)).with_context(|| format!("writing {name}"))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(AsRef::as_ref))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Whitespace-separated two-column text, readable by gnuplot.
    pub fn two_column(&self, name: &str, comment: &str, rows: &[(f64, f64)]) -> anyhow::Result<()> {
        let mut f = fs::File::create(self.path(name)).with_context(|| format!("writing {name}"))?;
        writeln!(f, "# {comment}")?;
        for (x, y) in rows {
            writeln!(f, "{x} {y}")?;
        }
        Ok(())
    }
}

pub fn num(x: f64) -> String {
    x.to_string()
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}
