//! Run directories: everything is written into a hidden sibling and renamed
//! into place once the run succeeded.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

pub const MANIFEST_VERSION: &str = "sfwm-run/1";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub manifest_version: &'static str,
    pub tool_version: &'static str,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub scenario: serde_json::Value,
    pub scenario_hash: String,
    pub seed: Option<u64>,
    pub threads: usize,
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
    pub elapsed_s: f64,
}

pub struct RunDir {
    target: PathBuf,
    staging: PathBuf,
    files: Vec<String>,
    sealed: bool,
}

impl RunDir {
    pub fn create(target: &Path, force: bool) -> Result<Self> {
        if target.exists() && !force {
            bail!("output directory {} already exists (use --force to replace it)", target.display());
        }
        let name = target
            .file_name()
            .with_context(|| format!("output path {} has no final component", target.display()))?;
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
        let staging = parent.join(format!(".{}.partial-{}", name.to_string_lossy(), std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir(&staging).with_context(|| format!("creating {}", staging.display()))?;
        Ok(Self {
            target: target.to_path_buf(),
            staging,
            files: Vec::new(),
            sealed: false,
        })
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    pub fn file(&mut self, name: &str) -> Result<BufWriter<fs::File>> {
        self.files.push(name.to_string());
        let path = self.staging.join(name);
        let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Writes the manifest and moves the directory into place.
    pub fn seal(mut self, manifest: &RunManifest) -> Result<PathBuf> {
        let path = self.staging.join("manifest.json");
        let mut w = BufWriter::new(fs::File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, manifest)?;
        writeln!(w)?;
        w.flush()?;
        drop(w);
        if self.target.exists() {
            fs::remove_dir_all(&self.target)
                .with_context(|| format!("removing previous {}", self.target.display()))?;
        }
        fs::rename(&self.staging, &self.target)
            .with_context(|| format!("moving results into {}", self.target.display()))?;
        self.sealed = true;
        Ok(self.target.clone())
    }
}

impl Drop for RunDir {
    // failed runs leave nothing behind
    fn drop(&mut self) {
        if !self.sealed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

/// Writes rows of floats under a header, full round-trip precision.
pub fn write_csv<W: Write>(mut w: W, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b",")?;
            }
            first = false;
            write!(w, "{v:e}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
