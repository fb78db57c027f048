use std::any::Any;
use std::collections::BTreeMap;

use super::{Callback, EventContext, EventKind};
use crate::error::{ensure, Result};
use crate::loggers::{LoggerSet, Phase};

/// Lower-triangular accuracy matrix: `a[l][j]` is the accuracy on task `j`
/// measured after training task `l` (1-based, `j <= l`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricState {
    rows: Vec<Vec<f64>>,
    pub epochs: Vec<EpochSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochSummary {
    pub task: usize,
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

impl MetricState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a state from complete rows; row `l - 1` must hold `l` values.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut state = Self::new();
        for (l, row) in rows.into_iter().enumerate() {
            ensure!(
                row.len() == l + 1,
                Validation,
                "row {} has {} entries, expected {}",
                l + 1,
                row.len(),
                l + 1
            );
            for (j, acc) in row.into_iter().enumerate() {
                state.set(l + 1, j + 1, acc)?;
            }
        }
        Ok(state)
    }

    pub fn set(&mut self, after_task: usize, task: usize, accuracy: f64) -> Result<()> {
        ensure!(
            task >= 1 && task <= after_task,
            Range,
            "accuracy entry ({after_task}, {task}) outside the lower triangle"
        );
        ensure!(
            (0.0..=1.0).contains(&accuracy),
            Validation,
            "accuracy {accuracy} outside [0, 1]"
        );
        ensure!(
            after_task <= self.rows.len() + 1,
            Validation,
            "row {after_task} started before row {} was recorded",
            self.rows.len() + 1
        );
        if after_task > self.rows.len() {
            self.rows.push(vec![f64::NAN; after_task]);
        }
        self.rows[after_task - 1][task - 1] = accuracy;
        Ok(())
    }

    pub fn accuracy(&self, after_task: usize, task: usize) -> Option<f64> {
        let v = *self.rows.get(after_task.checked_sub(1)?)?.get(task.checked_sub(1)?)?;
        (!v.is_nan()).then_some(v)
    }

    /// Number of rows started so far.
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn complete_row(&self, after_task: usize) -> Result<&[f64]> {
        let row = after_task
            .checked_sub(1)
            .and_then(|i| self.rows.get(i))
            .ok_or_else(|| crate::Error::Validation(format!("no accuracies recorded after task {after_task}")))?;
        ensure!(
            row.iter().all(|v| !v.is_nan()),
            Validation,
            "accuracy row {after_task} is incomplete"
        );
        Ok(row)
    }

    pub fn row(&self, after_task: usize) -> Result<Vec<f64>> {
        self.complete_row(after_task).map(<[f64]>::to_vec)
    }

    pub fn average_accuracy(&self, after_task: usize) -> Result<f64> {
        let row = self.complete_row(after_task)?;
        Ok(row.iter().sum::<f64>() / row.len() as f64)
    }

    /// Drop from the best earlier accuracy on task `task` to its accuracy
    /// after `after_task`.
    pub fn task_forgetting(&self, after_task: usize, task: usize) -> Result<f64> {
        ensure!(
            task < after_task,
            Validation,
            "forgetting of task {task} needs a later row, got {after_task}"
        );
        let now = self.complete_row(after_task)?[task - 1];
        let mut best = f64::NEG_INFINITY;
        for k in task..after_task {
            best = best.max(self.complete_row(k)?[task - 1]);
        }
        Ok(best - now)
    }

    pub fn forgetting(&self, after_task: usize) -> Result<f64> {
        ensure!(after_task >= 2, Validation, "forgetting needs at least two tasks");
        let mut total = 0.0;
        for j in 1..after_task {
            total += self.task_forgetting(after_task, j)?;
        }
        Ok(total / (after_task - 1) as f64)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

#[derive(Default)]
struct Tally {
    correct: usize,
    total: usize,
    loss_sum: f64,
}

impl Tally {
    fn add(&mut self, predictions: &[usize], targets: &[usize], loss: Option<f64>) {
        self.correct += predictions.iter().zip(targets).filter(|(p, t)| p == t).count();
        self.total += targets.len();
        if let Some(l) = loss {
            self.loss_sum += l * targets.len() as f64;
        }
    }

    fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Accuracy bookkeeping for training epochs and validation rounds.
#[derive(Default)]
pub struct MetricCallback {
    state: MetricState,
    epoch: Tally,
    validation: BTreeMap<usize, Tally>,
}

impl MetricCallback {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> &MetricState {
        &self.state
    }
}

impl Callback for MetricCallback {
    fn name(&self) -> &str {
        "metrics"
    }

    fn on_before(&mut self, kind: EventKind, _ctx: &EventContext<'_>, _loggers: &mut LoggerSet) -> Result<()> {
        match kind {
            EventKind::TrainingEpoch => self.epoch = Tally::default(),
            EventKind::Validation => self.validation.clear(),
            _ => {}
        }
        Ok(())
    }

    fn on_after(&mut self, kind: EventKind, ctx: &EventContext<'_>, loggers: &mut LoggerSet) -> Result<()> {
        match kind {
            EventKind::TrainingStep => {
                if let (Some(p), Some(t)) = (ctx.predictions, ctx.targets) {
                    self.epoch.add(p, t, ctx.loss);
                }
            }
            EventKind::TrainingEpoch => {
                let loss = self.epoch.loss_sum / self.epoch.total.max(1) as f64;
                let acc = self.epoch.accuracy();
                loggers.record(Phase::Train, ctx.task, ctx.epoch, ctx.step, "train_loss", loss)?;
                loggers.record(Phase::Train, ctx.task, ctx.epoch, ctx.step, "train_acc", acc)?;
                self.state.epochs.push(EpochSummary {
                    task: ctx.task,
                    epoch: ctx.epoch,
                    loss,
                    accuracy: acc,
                });
            }
            EventKind::ValidationStep => {
                if let (Some(p), Some(t), Some(j)) = (ctx.predictions, ctx.targets, ctx.val_task) {
                    self.validation.entry(j).or_default().add(p, t, None);
                }
            }
            EventKind::Validation => {
                let l = ctx.task;
                for j in 1..=l {
                    let acc = self.validation.get(&j).map(Tally::accuracy).unwrap_or(0.0);
                    self.state.set(l, j, acc)?;
                    loggers.record(Phase::Val, l, ctx.epoch, ctx.step, &format!("val_acc_task_{j}"), acc)?;
                }
                loggers.record(Phase::Val, l, ctx.epoch, ctx.step, "avg_acc", self.state.average_accuracy(l)?)?;
                if l >= 2 {
                    loggers.record(Phase::Val, l, ctx.epoch, ctx.step, "forgetting", self.state.forgetting(l)?)?;
                }
                loggers.validation_round(&self.state)?;
            }
            EventKind::TaskFit => loggers.flush()?,
            EventKind::Fit => {
                if let Some(last) = (self.state.num_rows() > 0).then(|| self.state.num_rows()) {
                    loggers.record(Phase::Summary, last, 0, 0, "avg_acc", self.state.average_accuracy(last)?)?;
                    if last >= 2 {
                        loggers.record(Phase::Summary, last, 0, 0, "forgetting", self.state.forgetting(last)?)?;
                    }
                }
                loggers.finish(&self.state)?;
            }
            _ => {}
        }
        Ok(())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
