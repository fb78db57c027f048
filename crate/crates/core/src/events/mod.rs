//! Hook lifecycle around every training and validation event.
//!
//! Each event `E` runs as: the algorithm's `on_before_E`, every callback's
//! `on_before_E` in registration order, `E` itself, the algorithm's
//! `on_after_E`, then every callback's `on_after_E` in registration order.

mod metrics;
mod progress;

use std::any::Any;
use std::fmt;

pub use metrics::{EpochSummary, MetricCallback, MetricState};
pub use progress::ProgressCallback;

use crate::error::{Error, Result};
use crate::loggers::LoggerSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    Fit,
    TaskFit,
    TrainingEpoch,
    TrainingStep,
    Validation,
    ValidationStep,
    Backward,
    OptimizerStep,
}

impl EventKind {
    pub const ALL: [EventKind; 8] = [
        EventKind::Fit,
        EventKind::TaskFit,
        EventKind::TrainingEpoch,
        EventKind::TrainingStep,
        EventKind::Validation,
        EventKind::ValidationStep,
        EventKind::Backward,
        EventKind::OptimizerStep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::Fit => "fit",
            EventKind::TaskFit => "task_fit",
            EventKind::TrainingEpoch => "training_epoch",
            EventKind::TrainingStep => "training_step",
            EventKind::Validation => "validation",
            EventKind::ValidationStep => "validation_step",
            EventKind::Backward => "backward",
            EventKind::OptimizerStep => "optimizer_step",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Before,
    After,
}

impl Phase {
    pub fn hook_name(self, kind: EventKind) -> String {
        match self {
            Phase::Before => format!("on_before_{kind}"),
            Phase::After => format!("on_after_{kind}"),
        }
    }
}

/// Read-only view of the loop state handed to callbacks.
#[derive(Clone, Copy, Debug, Default)]
pub struct EventContext<'a> {
    pub task: usize,
    pub num_tasks: usize,
    pub epoch: usize,
    pub step: usize,
    /// Task whose validation set is being evaluated.
    pub val_task: Option<usize>,
    pub targets: Option<&'a [usize]>,
    pub predictions: Option<&'a [usize]>,
    pub loss: Option<f64>,
}

/// Observer hooks. Unimplemented handlers are no-ops.
pub trait Callback: Send {
    fn name(&self) -> &str;

    fn on_before(&mut self, _kind: EventKind, _ctx: &EventContext<'_>, _loggers: &mut LoggerSet) -> Result<()> {
        Ok(())
    }

    fn on_after(&mut self, _kind: EventKind, _ctx: &EventContext<'_>, _loggers: &mut LoggerSet) -> Result<()> {
        Ok(())
    }

    fn as_any(&self) -> &dyn Any;
}

/// One hook invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub seq: usize,
    pub hook: String,
    pub task: usize,
    pub epoch: usize,
    pub step: usize,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t{}\t{}", self.seq, self.hook, self.task, self.epoch, self.step)
    }
}

pub fn format_trace(entries: &[TraceEntry]) -> String {
    entries.iter().map(|e| format!("{e}\n")).collect()
}

/// The pieces [`dispatch`] drives.
pub trait HookTarget {
    fn algorithm_hook(&mut self, phase: Phase, kind: EventKind) -> Result<()>;
    fn callback_names(&self) -> Vec<String>;
    fn callback_hook(&mut self, index: usize, phase: Phase, kind: EventKind) -> Result<()>;
    /// Records a hook invocation when tracing.
    fn trace(&mut self, hook: String);
}

fn callbacks_phase<T: HookTarget>(target: &mut T, phase: Phase, kind: EventKind) -> Result<()> {
    for (i, name) in target.callback_names().into_iter().enumerate() {
        let hook = format!("{}_callbacks:{name}", phase.hook_name(kind));
        target.trace(hook.clone());
        target.callback_hook(i, phase, kind).map_err(|e| Error::Hook {
            hook,
            source: Box::new(e),
        })?;
    }
    Ok(())
}

fn algorithm_phase<T: HookTarget>(target: &mut T, phase: Phase, kind: EventKind) -> Result<()> {
    let hook = phase.hook_name(kind);
    target.trace(hook.clone());
    target.algorithm_hook(phase, kind).map_err(|e| Error::Hook {
        hook,
        source: Box::new(e),
    })
}

/// Runs `body` as event `kind`, wrapped by the algorithm and callback hooks.
pub fn dispatch<T, R>(target: &mut T, kind: EventKind, body: impl FnOnce(&mut T) -> Result<R>) -> Result<R>
where
    T: HookTarget,
{
    algorithm_phase(target, Phase::Before, kind)?;
    callbacks_phase(target, Phase::Before, kind)?;
    target.trace(kind.name().to_string());
    let out = body(target)?;
    algorithm_phase(target, Phase::After, kind)?;
    callbacks_phase(target, Phase::After, kind)?;
    Ok(out)
}
