use std::any::Any;

use super::core::TrainerCore;
use super::memory::{memory_batch, MemoryBuffer, MemoryPolicy};
use super::objective::{cross_entropy, cross_entropy_gradient, Objective};
use super::Algorithm;
use crate::backend::{Backend, Scalar};
use crate::benchmarks::Batch;
use crate::error::Result;
use crate::events::EventKind;
use crate::nn::{Mode, ParamVector};

fn store_finished_task<B: Backend>(memory: &mut MemoryBuffer, core: &mut TrainerCore<B>) -> Result<()> {
    let ds = core.benchmark.train_set(core.task)?;
    memory.insert_task(ds, &mut core.rngs.memory)?;
    Ok(())
}

/// Experience replay: each batch is extended with stored samples of earlier
/// tasks.
pub struct Er {
    memory: MemoryBuffer,
    mem_batch_size: usize,
}

impl Er {
    pub fn new(per_task_memory_samples: usize, mem_batch_size: usize) -> Self {
        Self {
            memory: MemoryBuffer::new(MemoryPolicy::PerTask {
                per_task: per_task_memory_samples,
            }),
            mem_batch_size,
        }
    }

    pub fn memory(&self) -> &MemoryBuffer {
        &self.memory
    }

    /// The batch trained on: `batch` followed by up to `mem_batch_size`
    /// memory rows from tasks before `task`.
    pub fn replay_batch<S: Scalar>(&self, batch: &Batch<S>, task: usize, rng: &mut crate::Rng) -> Result<Batch<S>> {
        let picked = self.memory.sample(self.mem_batch_size, |t| t < task, rng);
        if picked.is_empty() {
            return Ok(batch.clone());
        }
        batch.concat(&memory_batch(&picked)?)
    }
}

impl<B: Backend> Algorithm<B> for Er {
    fn name(&self) -> &'static str {
        "er"
    }

    fn on_after(&mut self, kind: EventKind, core: &mut TrainerCore<B>) -> Result<()> {
        if kind == EventKind::TaskFit {
            store_finished_task(&mut self.memory, core)?;
        }
        Ok(())
    }

    fn loss(&mut self, core: &mut TrainerCore<B>, batch: &Batch<B::Elem>) -> Result<Objective<B::Elem>> {
        if self.memory.before(core.task).is_empty() {
            return cross_entropy(&core.model, batch, Mode::Train, &mut core.rngs.dropout);
        }
        let combined = self.replay_batch(batch, core.task, &mut core.rngs.memory)?;
        cross_entropy(&core.model, &combined, Mode::Train, &mut core.rngs.dropout)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Projects `g` onto the half-space `{v : vᵀ g_ref ≥ 0}` when it points
/// against `g_ref`.
pub fn agem_project<S: Scalar>(g: &ParamVector<S>, g_ref: &ParamVector<S>) -> Result<ParamVector<S>> {
    let dot = g.dot(g_ref)?;
    let ref_sq = g_ref.dot(g_ref)?;
    if dot >= 0.0 || ref_sq == 0.0 {
        return Ok(g.clone());
    }
    // Overshoot by a sqrt(eps) margin so the result stays on the feasible
    // side after rounding, even when g is nearly parallel to g_ref.
    let margin = 1.0 + S::EPS.sqrt();
    let mut out = g.clone();
    out.axpy(S::of(-margin * dot / ref_sq), g_ref)?;
    Ok(out)
}

/// Averaged gradient episodic memory.
pub struct Agem {
    memory: MemoryBuffer,
    mem_batch_size: usize,
    projections: usize,
}

impl Agem {
    pub fn new(per_task_memory_samples: usize, mem_batch_size: usize) -> Self {
        Self {
            memory: MemoryBuffer::new(MemoryPolicy::PerTask {
                per_task: per_task_memory_samples,
            }),
            mem_batch_size,
            projections: 0,
        }
    }

    pub fn memory(&self) -> &MemoryBuffer {
        &self.memory
    }

    /// Steps whose gradient was projected so far.
    pub fn projections(&self) -> usize {
        self.projections
    }
}

impl<B: Backend> Algorithm<B> for Agem {
    fn name(&self) -> &'static str {
        "agem"
    }

    fn on_after(&mut self, kind: EventKind, core: &mut TrainerCore<B>) -> Result<()> {
        match kind {
            EventKind::TaskFit => store_finished_task(&mut self.memory, core),
            EventKind::Backward => {
                let picked = self.memory.sample(self.mem_batch_size, |t| t < core.task, &mut core.rngs.memory);
                let Some(g) = core.grads.as_ref().filter(|_| !picked.is_empty()) else {
                    return Ok(());
                };
                let reference = memory_batch::<B::Elem>(&picked)?;
                let (_, g_ref) = cross_entropy_gradient(&core.model, &reference, Mode::Eval, &mut crate::Rng::new(0, 0))?;
                if g.dot(&g_ref)? < 0.0 {
                    self.projections += 1;
                }
                core.grads = Some(agem_project(g, &g_ref)?);
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
