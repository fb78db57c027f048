use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{LogRecord, LogValue, Logger, Phase};
use crate::error::{Error, Result};
use crate::events::MetricState;

pub const METRICS_FILE: &str = "metrics.jsonl";

/// Pending bytes that force a flush before the next task boundary.
const FLUSH_THRESHOLD: usize = 1 << 16;

/// Appends one JSON object per line to `<run_dir>/metrics.jsonl`.
///
/// Lines are buffered whole and written at task boundaries, so the file only
/// ever holds complete lines.
pub struct LocalLogger {
    path: PathBuf,
    file: File,
    pending: Vec<u8>,
}

impl LocalLogger {
    /// Creates the run directory and truncates the metrics file.
    pub fn create(run_dir: &Path) -> Result<Self> {
        fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let path = run_dir.join(METRICS_FILE);
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            file,
            pending: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Logger for LocalLogger {
    fn name(&self) -> &str {
        "local"
    }

    fn log(&mut self, record: &LogRecord) -> Result<()> {
        let mut line = serde_json::to_vec(record).map_err(|e| Error::Serialization(e.to_string()))?;
        line.push(b'\n');
        self.pending.extend_from_slice(&line);
        if self.pending.len() >= FLUSH_THRESHOLD {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if !self.pending.is_empty() {
            self.file
                .write_all(&self.pending)
                .and_then(|_| self.file.flush())
                .map_err(|e| Error::io(&self.path, e))?;
            self.pending.clear();
        }
        Ok(())
    }
}

impl Drop for LocalLogger {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

pub fn read_records(path: &Path) -> Result<Vec<LogRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Serialization(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Rebuilds the accuracy matrix from the `val_acc_task_<j>` records.
pub fn read_accuracy_matrix(path: &Path) -> Result<MetricState> {
    let mut state = MetricState::new();
    for rec in read_records(path)? {
        let (Phase::Val, LogValue::Number(v)) = (rec.phase, &rec.value) else {
            continue;
        };
        if let Some(j) = rec.metric.strip_prefix("val_acc_task_") {
            let j: usize = j
                .parse()
                .map_err(|_| Error::Serialization(format!("bad metric name `{}`", rec.metric)))?;
            state.set(rec.task, j, *v)?;
        }
    }
    Ok(state)
}
