use std::any::Any;

use super::core::TrainerCore;
use super::memory::{memory_batch, MemoryBuffer, MemoryItem, MemoryPolicy};
use super::objective::{cross_entropy, forward_groups, group_values, BackpropTerm, Objective};
use super::Algorithm;
use crate::backend::{Backend, Scalar, Tensor};
use crate::benchmarks::Batch;
use crate::error::{Error, Result};
use crate::events::EventKind;
use crate::nn::Mode;

/// Dark experience replay. Stores `(x, logits)` pairs by reservoir sampling
/// and distills the stored logits with a mean squared error weighted by
/// `alpha`; the `++` variant also replays stored labels weighted by `beta`.
#[derive(Debug)]
pub struct Der {
    memory: MemoryBuffer,
    alpha: f64,
    beta: f64,
    plus: bool,
    mem_batch_size: usize,
}

impl Der {
    pub fn der(mem_size: usize, alpha: f64, mem_batch_size: usize) -> Result<Self> {
        Self::build(mem_size, alpha, 0.0, false, mem_batch_size)
    }

    pub fn derpp(mem_size: usize, alpha: f64, beta: f64, mem_batch_size: usize) -> Result<Self> {
        Self::build(mem_size, alpha, beta, true, mem_batch_size)
    }

    fn build(mem_size: usize, alpha: f64, beta: f64, plus: bool, mem_batch_size: usize) -> Result<Self> {
        for (key, v) in [("algo.alpha", alpha), ("algo.beta", beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be finite and non-negative, got {v}")));
            }
        }
        Ok(Self {
            memory: MemoryBuffer::new(MemoryPolicy::Reservoir { capacity: mem_size }),
            alpha,
            beta,
            plus,
            mem_batch_size,
        })
    }

    pub fn memory(&self) -> &MemoryBuffer {
        &self.memory
    }

    fn distillation<B: Backend>(&self, core: &mut TrainerCore<B>) -> Result<Option<Objective<B::Elem>>> {
        let picked = self.memory.sample(self.mem_batch_size, |_| true, &mut core.rngs.memory);
        if picked.is_empty() {
            return Ok(None);
        }
        let batch = memory_batch::<B::Elem>(&picked)?;
        let stored: Vec<&Vec<f64>> = picked
            .iter()
            .map(|i| i.logits.as_ref().ok_or_else(|| Error::Validation("memory item without logits".into())))
            .collect::<Result<_>>()?;
        let groups = forward_groups(&core.model, &batch, Mode::Train, &mut core.rngs.dropout)?;
        let width = groups[0].logits.shape()[1];
        let scale = self.alpha / (batch.len() * width) as f64;
        let mut loss = 0.0;
        let mut terms = Vec::with_capacity(groups.len());
        for group in groups {
            let targets = group_values(&group.rows, &stored);
            let mut grad = Vec::with_capacity(group.logits.len());
            for (r, z) in targets.iter().enumerate() {
                for (f, zv) in group.logits.row(r).iter().zip(z.iter()) {
                    let d = f.as_f64() - zv;
                    loss += scale * d * d;
                    grad.push(B::Elem::of(2.0 * scale * d));
                }
            }
            terms.push(BackpropTerm {
                grad_logits: Tensor::new(group.logits.shape().to_vec(), grad)?,
                cache: group.cache,
                grad_features: None,
                rows: group.rows,
            });
        }
        Ok(Some(Objective {
            loss,
            terms,
            param_grad: None,
            predictions: Vec::new(),
        }))
    }

    fn insert_batch<B: Backend>(&mut self, core: &mut TrainerCore<B>) -> Result<()> {
        let Some(batch) = core.batch.as_ref() else {
            return Ok(());
        };
        let logits = core.model.predict(&batch.x, &batch.t)?;
        let ds = core.benchmark.train_set(core.task)?;
        for row in 0..batch.len() {
            if let Some(slot) = self.memory.reservoir_slot(&mut core.rngs.memory)? {
                let mut item = MemoryItem::from_dataset(ds, batch.idx[row]);
                item.logits = Some(logits.row(row).iter().map(|v| v.as_f64()).collect());
                self.memory.place(slot, item)?;
            }
        }
        Ok(())
    }
}

impl<B: Backend> Algorithm<B> for Der {
    fn name(&self) -> &'static str {
        if self.plus {
            "derpp"
        } else {
            "der"
        }
    }

    fn on_after(&mut self, kind: EventKind, core: &mut TrainerCore<B>) -> Result<()> {
        if kind == EventKind::TrainingStep {
            self.insert_batch(core)?;
        }
        Ok(())
    }

    fn loss(&mut self, core: &mut TrainerCore<B>, batch: &Batch<B::Elem>) -> Result<Objective<B::Elem>> {
        let mut obj = cross_entropy(&core.model, batch, Mode::Train, &mut core.rngs.dropout)?;
        if self.alpha != 0.0 {
            if let Some(d) = self.distillation(core)? {
                obj.absorb(d)?;
            }
        }
        if self.plus && self.beta != 0.0 {
            let picked = self.memory.sample(self.mem_batch_size, |_| true, &mut core.rngs.memory);
            if !picked.is_empty() {
                let replay = memory_batch::<B::Elem>(&picked)?;
                let ce = cross_entropy(&core.model, &replay, Mode::Train, &mut core.rngs.dropout)?;
                let mut ce = ce.scaled(self.beta);
                ce.predictions.clear();
                obj.absorb(ce)?;
            }
        }
        Ok(obj)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_coefficients_are_config_errors() {
        assert!(Der::der(10, -1.0, 4).unwrap_err().is_config_error());
        assert!(Der::derpp(10, 0.5, -0.1, 4).unwrap_err().is_config_error());
        assert!(Der::derpp(10, 0.0, 0.0, 4).is_ok());
    }
}
