use std::any::Any;

use super::core::TrainerCore;
use super::memory::{memory_batch, MemoryBuffer, MemoryItem, MemoryPolicy};
use super::objective::cross_entropy_gradient;
use super::Algorithm;
use crate::backend::{Backend, Rng, Scalar};
use crate::error::{ensure, Result};
use crate::events::EventKind;
use crate::nn::{Mode, ParamVector, Sgd};

#[derive(Clone, Debug, PartialEq)]
pub struct LineConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub line_samples: usize,
    /// Starting point as a fraction of the way from the previous solution to
    /// the current one.
    pub init_position: f64,
}

impl LineConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.line_samples >= 2, Validation, "lmc_line_samples must be at least 2");
        ensure!(self.epochs >= 1, Validation, "lmc_epochs must be at least 1");
        ensure!(self.batch_size >= 1, Validation, "lmc_batch_size must be at least 1");
        ensure!(
            (0.0..=1.0).contains(&self.init_position),
            Validation,
            "lmc_init_position {} outside [0, 1]",
            self.init_position
        );
        Ok(())
    }

    /// Interpolation coefficients `i / (n - 1)`, endpoints included.
    pub fn line_points(&self) -> Vec<f64> {
        let n = self.line_samples;
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }
}

/// Which solution a line starts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Anchor {
    /// Previous consolidated solution; evaluated on memory of earlier tasks.
    Previous,
    /// Solution of the task just trained; evaluated on its own memory.
    Current,
}

fn lerp<S: Scalar>(from: &ParamVector<S>, to: &ParamVector<S>, alpha: f64) -> Result<ParamVector<S>> {
    let mut out = from.clone();
    out.axpy(S::of(alpha), &to.sub(from)?)?;
    Ok(out)
}

/// Finds a point `w` connected by low-loss lines to both `w_prev` and
/// `w_current`.
///
/// `w` starts `init_position` of the way along the segment. Each update
/// evaluates `grad(anchor, step, point)` at `line_samples` points on the
/// lines from each anchor to `w`, averages them per anchor, sums the two
/// averages and applies SGD to `w`. There are `steps_per_epoch` updates per
/// epoch. Equal endpoints return `w_current` unchanged.
pub fn mcsgd_consolidate<S: Scalar>(
    w_prev: &ParamVector<S>,
    w_current: &ParamVector<S>,
    cfg: &LineConfig,
    steps_per_epoch: usize,
    mut grad: impl FnMut(Anchor, usize, &ParamVector<S>) -> Result<ParamVector<S>>,
) -> Result<ParamVector<S>> {
    cfg.validate()?;
    w_prev.check_len(w_current, "mode connectivity endpoints")?;
    if w_prev.bit_eq(w_current) {
        return Ok(w_current.clone());
    }
    let mut w = lerp(w_prev, w_current, cfg.init_position)?;
    let mut opt = Sgd::<S>::new(cfg.lr, cfg.momentum, 1.0)?;
    let alphas = cfg.line_points();
    let inv_n = S::of(1.0 / alphas.len() as f64);
    for _ in 0..cfg.epochs {
        for step in 0..steps_per_epoch {
            let mut total = ParamVector::zeros(w.len());
            for (anchor, start) in [(Anchor::Previous, w_prev), (Anchor::Current, w_current)] {
                for &a in &alphas {
                    let point = lerp(start, &w, a)?;
                    total.axpy(inv_n, &grad(anchor, step, &point)?)?;
                }
            }
            opt.step(&mut w, &total)?;
        }
    }
    Ok(w)
}

/// Mode-connectivity SGD: after each task, replaces the weights by a point
/// linearly connected to both the previous solution and the new one.
pub struct McSgd<S> {
    memory: MemoryBuffer,
    line: LineConfig,
    previous: Option<ParamVector<S>>,
}

impl<S: Scalar> McSgd<S> {
    pub fn new(per_task_memory_samples: usize, line: LineConfig) -> Result<Self> {
        line.validate()?;
        Ok(Self {
            memory: MemoryBuffer::new(MemoryPolicy::PerTask {
                per_task: per_task_memory_samples,
            }),
            line,
            previous: None,
        })
    }

    pub fn memory(&self) -> &MemoryBuffer {
        &self.memory
    }

    pub fn line_config(&self) -> &LineConfig {
        &self.line
    }

    fn consolidate<B: Backend<Elem = S>>(&mut self, core: &mut TrainerCore<B>) -> Result<()> {
        let ds = core.benchmark.train_set(core.task)?;
        self.memory.insert_task(ds, &mut core.rngs.memory)?;
        let w_current = core.model.snapshot();
        let Some(w_prev) = self.previous.take() else {
            self.previous = Some(w_current);
            return Ok(());
        };
        let old = self.memory.before(core.task);
        let new = self.memory.of_task(core.task);
        ensure!(
            !old.is_empty() && !new.is_empty(),
            Validation,
            "mode connectivity needs memory of earlier tasks and of task {}",
            core.task
        );
        let bs = self.line.batch_size;
        let old_batches = shuffled_batches::<S>(&old, bs, &mut core.rngs.memory)?;
        let new_batches = shuffled_batches::<S>(&new, bs, &mut core.rngs.memory)?;
        let steps = old_batches.len().max(new_batches.len());
        let mut probe = core.model.clone();
        let mut unused = Rng::new(0, 0);
        let w_mc = mcsgd_consolidate(&w_prev, &w_current, &self.line, steps, |anchor, step, point| {
            probe.restore(point)?;
            let batch = match anchor {
                Anchor::Previous => &old_batches[step % old_batches.len()],
                Anchor::Current => &new_batches[step % new_batches.len()],
            };
            Ok(cross_entropy_gradient(&probe, batch, Mode::Eval, &mut unused)?.1)
        })?;
        core.model.restore(&w_mc)?;
        self.previous = Some(w_mc);
        Ok(())
    }
}

fn shuffled_batches<S: Scalar>(
    items: &[&MemoryItem],
    size: usize,
    rng: &mut Rng,
) -> Result<Vec<crate::benchmarks::Batch<S>>> {
    let order = rng.permutation(items.len());
    order
        .chunks(size)
        .map(|chunk| memory_batch(&chunk.iter().map(|&i| items[i]).collect::<Vec<_>>()))
        .collect()
}

impl<B: Backend> Algorithm<B> for McSgd<B::Elem> {
    fn name(&self) -> &'static str {
        "mcsgd"
    }

    fn on_before(&mut self, kind: EventKind, core: &mut TrainerCore<B>) -> Result<()> {
        if kind == EventKind::Validation {
            self.consolidate(core)?;
        }
        Ok(())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
