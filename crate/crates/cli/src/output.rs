//! Atomic file output and the shared report layout.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::BadInput(format!("cannot write {}: {e}", path.display()))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| io_err(path, e))?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut buf)?;
        buf.flush().map_err(|e| io_err(path, e))?;
    }
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| io_err(path, e))?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))
    })
}

/// Adapts a library writer to the atomic sink.
pub fn write_with(path: &Path, f: impl FnOnce(&mut dyn Write) -> crowdkit::Result<()>) -> Result<(), CliError> {
    write_atomic(path, |w| f(w).map_err(CliError::from))
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub method: String,
    pub config: Value,
    pub metrics: Value,
    /// Relative to the directory holding the report.
    pub params_path: Option<String>,
    pub wall_time_ms: Option<u64>,
}

/// Wall-clock timer whose reading can be suppressed for reproducible output.
pub struct Timer {
    start: Instant,
    enabled: bool,
}

impl Timer {
    pub fn start(enabled: bool) -> Self {
        Self { start: Instant::now(), enabled }
    }

    pub fn elapsed_ms(&self) -> Option<u64> {
        self.enabled.then(|| self.start.elapsed().as_millis() as u64)
    }
}
