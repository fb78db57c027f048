use std::any::Any;
use std::io::Write;

use super::{Callback, EventContext, EventKind};
use crate::error::{Error, Result};
use crate::loggers::LoggerSet;

/// Prints a running loss/accuracy line every `every` training steps.
pub struct ProgressCallback {
    every: usize,
    out: Box<dyn Write + Send>,
    correct: usize,
    seen: usize,
}

impl ProgressCallback {
    pub fn new(every: usize) -> Self {
        Self::to_writer(every, Box::new(std::io::stderr()))
    }

    pub fn to_writer(every: usize, out: Box<dyn Write + Send>) -> Self {
        Self {
            every: every.max(1),
            out,
            correct: 0,
            seen: 0,
        }
    }
}

impl Callback for ProgressCallback {
    fn name(&self) -> &str {
        "progress"
    }

    fn on_before(&mut self, kind: EventKind, _ctx: &EventContext<'_>, _loggers: &mut LoggerSet) -> Result<()> {
        if kind == EventKind::TrainingEpoch {
            self.correct = 0;
            self.seen = 0;
        }
        Ok(())
    }

    fn on_after(&mut self, kind: EventKind, ctx: &EventContext<'_>, _loggers: &mut LoggerSet) -> Result<()> {
        if kind != EventKind::TrainingStep {
            return Ok(());
        }
        if let (Some(p), Some(t)) = (ctx.predictions, ctx.targets) {
            self.correct += p.iter().zip(t).filter(|(a, b)| a == b).count();
            self.seen += t.len();
        }
        if ctx.step % self.every == 0 {
            let acc = self.correct as f64 / self.seen.max(1) as f64;
            writeln!(
                self.out,
                "task {}/{} epoch {} step {}: loss {:.4} acc {:.4}",
                ctx.task,
                ctx.num_tasks,
                ctx.epoch,
                ctx.step,
                ctx.loss.unwrap_or(f64::NAN),
                acc
            )
            .map_err(|e| Error::io("<progress>", e))?;
        }
        Ok(())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
