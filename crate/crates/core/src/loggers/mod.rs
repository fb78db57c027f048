//! Metric sinks. Loggers only observe; they never touch model state.

mod console;
mod local;
mod summary;

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use console::ConsoleLogger;
pub use local::{read_accuracy_matrix, read_records, LocalLogger, METRICS_FILE};
pub use summary::{read_summary_csv, write_summary_csv, CsvSummaryLogger, SUMMARY_FILE};

use crate::error::{ensure, Result};
use crate::events::MetricState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Val,
    Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogValue {
    Number(f64),
    Text(String),
}

impl From<f64> for LogValue {
    fn from(v: f64) -> Self {
        LogValue::Number(v)
    }
}

impl From<&str> for LogValue {
    fn from(v: &str) -> Self {
        LogValue::Text(v.to_string())
    }
}

impl From<String> for LogValue {
    fn from(v: String) -> Self {
        LogValue::Text(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    /// Seconds since the Unix epoch.
    pub wall_time: f64,
    pub run_id: String,
    pub task: usize,
    pub epoch: usize,
    pub step: usize,
    pub metric: String,
    pub value: LogValue,
    pub phase: Phase,
}

impl LogRecord {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.metric.is_empty(), Validation, "log record without a metric name");
        if let LogValue::Number(v) = self.value {
            ensure!(v.is_finite(), Validation, "metric `{}` is not finite: {v}", self.metric);
        }
        Ok(())
    }
}

pub trait Logger: Send {
    fn name(&self) -> &str;

    fn log(&mut self, _record: &LogRecord) -> Result<()> {
        Ok(())
    }

    /// Called once per validation round with the updated matrix.
    fn validation_round(&mut self, _state: &MetricState) -> Result<()> {
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        Ok(())
    }

    /// End of the run.
    fn finish(&mut self, _state: &MetricState) -> Result<()> {
        self.flush()
    }
}

/// Fan-out to every registered logger, in registration order.
pub struct LoggerSet {
    run_id: String,
    loggers: Vec<Box<dyn Logger>>,
}

impl LoggerSet {
    pub fn new(run_id: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            loggers: Vec::new(),
        }
    }

    pub fn with(mut self, logger: impl Logger + 'static) -> Self {
        self.push(Box::new(logger));
        self
    }

    pub fn push(&mut self, logger: Box<dyn Logger>) {
        self.loggers.push(logger);
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn len(&self) -> usize {
        self.loggers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loggers.is_empty()
    }

    pub fn record(
        &mut self,
        phase: Phase,
        task: usize,
        epoch: usize,
        step: usize,
        metric: &str,
        value: impl Into<LogValue>,
    ) -> Result<()> {
        let record = LogRecord {
            wall_time: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            run_id: self.run_id.clone(),
            task,
            epoch,
            step,
            metric: metric.to_string(),
            value: value.into(),
            phase,
        };
        self.log(&record)
    }

    pub fn log(&mut self, record: &LogRecord) -> Result<()> {
        record.validate()?;
        self.loggers.iter_mut().try_for_each(|l| l.log(record))
    }

    pub fn validation_round(&mut self, state: &MetricState) -> Result<()> {
        self.loggers.iter_mut().try_for_each(|l| l.validation_round(state))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.loggers.iter_mut().try_for_each(|l| l.flush())
    }

    pub fn finish(&mut self, state: &MetricState) -> Result<()> {
        self.loggers.iter_mut().try_for_each(|l| l.finish(state))
    }
}
