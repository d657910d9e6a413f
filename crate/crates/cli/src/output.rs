//! Run directories: a copy of the effective configuration, a manifest for
//! reproduction, and the result files of the command.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::CliResult;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub jobs: usize,
    /// `git rev-parse HEAD` of the working directory, when available.
    pub git_hash: Option<String>,
    pub timestamp_unix: u64,
}

/// Output sink for one command run. Without a directory every write is a
/// no-op and only the summary reaches stdout.
#[derive(Debug, Default)]
pub struct RunDir {
    root: Option<PathBuf>,
}

impl RunDir {
    /// A sink that discards every file.
    pub fn none() -> Self {
        Self { root: None }
    }

    pub fn create<C: Serialize>(out: Option<&Path>, command: &str, seed: u64, config: &C) -> CliResult<Self> {
        let Some(root) = out else { return Ok(Self::none()) };
        fs::create_dir_all(root)?;
        let dir = Self { root: Some(root.to_path_buf()) };
        dir.write_json("config.json", config)?;
        let manifest = Manifest {
            tool: "lowrank",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            jobs: rayon::current_num_threads(),
            git_hash: git_hash(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        dir.write_json("manifest.json", &manifest)?;
        Ok(dir)
    }

    pub fn path(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Stream a file into the run directory.
    pub fn write_with<F>(&self, name: &str, body: F) -> CliResult<()>
    where
        F: FnOnce(&mut dyn Write) -> CliResult<()>,
    {
        let Some(root) = &self.root else { return Ok(()) };
        let mut out = BufWriter::new(File::create(root.join(name))?);
        body(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> CliResult<()> {
        self.write_with(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value)?;
            writeln!(out)?;
            Ok(())
        })
    }

    /// One JSON document per line.
    pub fn write_jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> CliResult<()> {
        self.write_with(name, |out| {
            for row in rows {
                serde_json::to_writer(&mut *out, row)?;
                writeln!(out)?;
            }
            Ok(())
        })
    }
}

fn git_hash() -> Option<String> {
    let out = Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status.success().then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
}

/// Format an optional float for CSV: empty when absent.
pub fn csv_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.17e}")).unwrap_or_default()
}
