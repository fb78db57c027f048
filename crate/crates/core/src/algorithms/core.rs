use std::sync::Arc;

use super::objective::{objective_gradient, BackpropTerm};
use crate::backend::{streams, Backend, Rng};
use crate::benchmarks::{Batch, Benchmark};
use crate::error::Result;
use crate::nn::{Mlp, ParamVector, Sgd};

/// Independent random streams of one run.
#[derive(Clone, Debug)]
pub struct RunRngs {
    pub dropout: Rng,
    pub loader: Rng,
    pub memory: Rng,
    pub importance: Rng,
}

impl RunRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            dropout: Rng::new(seed, streams::DROPOUT),
            loader: Rng::new(seed, streams::LOADER),
            memory: Rng::new(seed, streams::MEMORY),
            importance: Rng::new(seed, streams::IMPORTANCE),
        }
    }
}

/// Mutable training state shared by the loop and the algorithm hooks.
pub struct TrainerCore<B: Backend> {
    pub model: Mlp<B>,
    pub optimizer: Sgd<B::Elem>,
    pub benchmark: Arc<Benchmark>,
    pub rngs: RunRngs,
    pub seed: u64,
    /// Current task, 1-based; 0 outside any task.
    pub task: usize,
    pub epoch: usize,
    pub step: usize,
    pub epochs_per_task: usize,
    pub val_task: Option<usize>,
    pub batch: Option<Batch<B::Elem>>,
    pub loss: Option<f64>,
    pub predictions: Option<Vec<usize>>,
    /// Gradient handed to the optimizer; hooks may rewrite it.
    pub grads: Option<ParamVector<B::Elem>>,
    /// Gradient of the backpropagated terms alone, without parameter-space
    /// penalties.
    pub loss_grads: Option<ParamVector<B::Elem>>,
}

impl<B: Backend> TrainerCore<B> {
    pub fn new(model: Mlp<B>, optimizer: Sgd<B::Elem>, benchmark: Arc<Benchmark>, seed: u64) -> Self {
        Self {
            model,
            optimizer,
            benchmark,
            rngs: RunRngs::new(seed),
            seed,
            task: 0,
            epoch: 0,
            step: 0,
            epochs_per_task: 1,
            val_task: None,
            batch: None,
            loss: None,
            predictions: None,
            grads: None,
            loss_grads: None,
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.benchmark.num_tasks()
    }

    pub(crate) fn backward(
        &mut self,
        terms: &[BackpropTerm<B::Elem>],
        param_grad: Option<&ParamVector<B::Elem>>,
    ) -> Result<()> {
        let loss_grads = objective_gradient(&self.model, terms, None)?;
        let mut total = loss_grads.clone();
        if let Some(pg) = param_grad {
            total.add_assign(pg)?;
        }
        self.loss_grads = Some(loss_grads);
        self.grads = Some(total);
        Ok(())
    }

    pub(crate) fn optimizer_step(&mut self) -> Result<()> {
        let g = self
            .grads
            .as_ref()
            .ok_or_else(|| crate::Error::Validation("optimizer step without gradients".into()))?;
        self.optimizer.step(self.model.params_mut(), g)
    }
}
