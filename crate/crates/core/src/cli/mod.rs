//! File-driven runs: `project`, `fit`, `score`, `eval` and `synth`.
//!
//! Each command reads a [`RunConfig`] and writes its artifacts under the
//! output directory. Files are processed in sorted name order and every
//! cross-file aggregate is order-independent, so outputs do not depend on
//! the worker count.

pub mod config;
mod eval;
mod fit;
mod project;
mod score;
mod synth_cmd;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{split_overrides, ClassMap, LabelRole, Override, RunConfig};
pub use eval::{cmd_eval, EvalSummary};
pub use fit::{cmd_fit, FitReport};
pub use project::{cmd_project, ProjectManifest, ScanEntry};
pub use score::{cmd_score, ScoreManifest};
pub use synth_cmd::cmd_synth;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Project,
    Fit,
    Score,
    Eval,
    Synth,
}

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Success,
    /// Some input files failed; the rest were processed.
    PartialFailure,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::PartialFailure => 1,
        }
    }
}

/// Exit code for a command that returned an error.
pub const EXIT_PRECONDITION: i32 = 2;

/// Runs `command` on a pool of `jobs` workers (0 = one per core).
pub fn run(command: Command, config: &RunConfig, jobs: usize) -> Result<RunStatus> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| match command {
        Command::Project => cmd_project(config).map(|m| m.status()),
        Command::Fit => cmd_fit(config).map(|_| RunStatus::Success),
        Command::Score => cmd_score(config).map(|_| RunStatus::Success),
        Command::Eval => cmd_eval(config).map(|s| {
            print!("{}", s.table());
            RunStatus::Success
        }),
        Command::Synth => cmd_synth(config).map(|_| RunStatus::Success),
    })
}

fn require_dir<'a>(dir: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let dir = dir
        .as_deref()
        .ok_or_else(|| Error::Config(format!("[paths] {key} is not set")))?;
    if !dir.is_dir() {
        return Err(Error::Config(format!("[paths] {key} = {} is not a directory", dir.display())));
    }
    Ok(dir)
}

/// `(stem, path)` for files in `dir` named `<stem><suffix>`, sorted by name.
fn list_files(dir: &Path, suffix: &str, exclude: &[&str]) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if exclude.iter().any(|x| name.ends_with(x)) || !entry.path().is_file() {
            continue;
        }
        if let Some(stem) = name.strip_suffix(suffix) {
            if !stem.is_empty() {
                out.push((stem.to_string(), entry.path()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Raw label grid file written by `project` for scan `stem`.
pub fn label_grid_path(grid_dir: &Path, stem: &str) -> PathBuf {
    grid_dir.join(format!("{stem}.labels.fmap"))
}

/// Raw labels of a label grid; `None` where no point landed.
fn read_label_grid(path: &Path) -> Result<crate::FeatureMap> {
    let grid = crate::FeatureMap::read(path)?;
    if grid.dim() != 1 {
        return Err(Error::shape(format!("{}: label grid has D = {}", path.display(), grid.dim())));
    }
    Ok(grid)
}
