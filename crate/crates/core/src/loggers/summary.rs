use std::path::{Path, PathBuf};

use super::Logger;
use crate::error::{ensure, Error, Result};
use crate::events::MetricState;

pub const SUMMARY_FILE: &str = "summary.csv";

/// Writes the accuracy matrix as CSV: header
/// `after_task,task_1..task_T,avg_acc,forgetting`, one row per trained task
/// (blank above the diagonal), then a `best` row holding each task's best
/// accuracy with the final averages.
pub fn write_summary_csv(state: &MetricState, path: &Path) -> Result<()> {
    ensure!(!state.is_empty(), Validation, "no accuracies to summarize");
    let t = state.num_rows();
    let csv_err = |e: csv::Error| Error::Serialization(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["after_task".to_string()];
    header.extend((1..=t).map(|j| format!("task_{j}")));
    header.extend(["avg_acc".to_string(), "forgetting".to_string()]);
    w.write_record(&header).map_err(csv_err)?;
    let fmt = |v: f64| format!("{v}");
    for l in 1..=t {
        let row = state.row(l)?;
        let mut rec = vec![l.to_string()];
        rec.extend((0..t).map(|j| row.get(j).map(|v| fmt(*v)).unwrap_or_default()));
        rec.push(fmt(state.average_accuracy(l)?));
        rec.push(if l >= 2 { fmt(state.forgetting(l)?) } else { String::new() });
        w.write_record(&rec).map_err(csv_err)?;
    }
    let mut best = vec!["best".to_string()];
    for j in 1..=t {
        let b = (j..=t)
            .filter_map(|l| state.accuracy(l, j))
            .fold(f64::NEG_INFINITY, f64::max);
        best.push(fmt(b));
    }
    best.push(fmt(state.average_accuracy(t)?));
    best.push(if t >= 2 { fmt(state.forgetting(t)?) } else { String::new() });
    w.write_record(&best).map_err(csv_err)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads the per-task rows of a summary file back into a matrix.
pub fn read_summary_csv(path: &Path) -> Result<MetricState> {
    let csv_err = |e: csv::Error| Error::Serialization(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.get(0) == Some("best") {
            continue;
        }
        let l = rows.len() + 1;
        let row = (1..=l)
            .map(|j| {
                rec.get(j)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Serialization(format!("{}: bad cell ({l}, {j})", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    MetricState::from_rows(rows)
}

pub struct CsvSummaryLogger {
    path: PathBuf,
}

impl CsvSummaryLogger {
    pub fn new(run_dir: &Path) -> Self {
        Self {
            path: run_dir.join(SUMMARY_FILE),
        }
    }
}

impl Logger for CsvSummaryLogger {
    fn name(&self) -> &str {
        "csv"
    }

    fn finish(&mut self, state: &MetricState) -> Result<()> {
        write_summary_csv(state, &self.path)
    }
}
