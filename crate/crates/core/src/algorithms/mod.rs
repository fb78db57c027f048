//! Continual-learning methods on top of a shared training loop.
//!
//! [`BaseAlgorithm`] owns the loop. A method is an [`Algorithm`]: a set of
//! hooks around loop events plus an optional custom loss. The null method
//! ([`Naive`]) overrides nothing.

mod base;
mod core;
mod der;
mod lfl;
mod mcsgd;
mod memory;
mod objective;
mod regularization;
mod replay;

use std::any::Any;

pub use self::core::{RunRngs, TrainerCore};
pub use base::BaseAlgorithm;
pub use der::Der;
pub use lfl::{feature_drift_penalty, Lfl};
pub use mcsgd::{mcsgd_consolidate, Anchor, LineConfig, McSgd};
pub use memory::{memory_batch, MemoryBuffer, MemoryItem, MemoryPolicy};
pub use objective::{
    cross_entropy, cross_entropy_gradient, forward_groups, objective_gradient, BackpropTerm, ForwardGroup, Objective,
};
pub use regularization::{
    parameter_importance, quadratic_penalty, DataImportance, Ewc, ImportanceEstimator, ImportanceMethod, Mas,
    Regularized, Si, SiImportance, SiState, IMPORTANCE_BUDGET, SI_DAMPING,
};
pub use replay::{agem_project, Agem, Er};

use crate::backend::Backend;
use crate::benchmarks::Batch;
use crate::error::{ensure, Result};
use crate::events::EventKind;
use crate::nn::Mode;

pub const ALGORITHM_NAMES: [&str; 11] = [
    "naive", "ewc", "si", "mas", "lfl", "er", "agem", "der", "derpp", "stablesgd", "mcsgd",
];

/// Names that refer to methods this crate deliberately does not provide.
pub const UNSUPPORTED_ALGORITHMS: [&str; 2] = ["kcl", "lamaml"];

pub trait Algorithm<B: Backend> {
    fn name(&self) -> &'static str;

    fn on_before(&mut self, _kind: EventKind, _core: &mut TrainerCore<B>) -> Result<()> {
        Ok(())
    }

    fn on_after(&mut self, _kind: EventKind, _core: &mut TrainerCore<B>) -> Result<()> {
        Ok(())
    }

    /// Training objective for one batch; cross-entropy by default.
    fn loss(&mut self, core: &mut TrainerCore<B>, batch: &Batch<B::Elem>) -> Result<Objective<B::Elem>> {
        cross_entropy(&core.model, batch, Mode::Train, &mut core.rngs.dropout)
    }

    fn as_any(&self) -> &dyn Any;
}

/// Plain fine-tuning.
#[derive(Clone, Copy, Debug, Default)]
pub struct Naive;

impl<B: Backend> Algorithm<B> for Naive {
    fn name(&self) -> &'static str {
        "naive"
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Fine-tuning with per-task learning-rate decay and dropout. The decay is
/// applied by the loop for every method; this only checks that the model
/// carries the configured dropout.
#[derive(Clone, Copy, Debug)]
pub struct StableSgd {
    dropout: f64,
}

impl StableSgd {
    pub fn new(dropout: f64) -> Result<Self> {
        ensure!((0.0..1.0).contains(&dropout), Validation, "dropout {dropout} outside [0, 1)");
        Ok(Self { dropout })
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }
}

impl<B: Backend> Algorithm<B> for StableSgd {
    fn name(&self) -> &'static str {
        "stablesgd"
    }

    fn on_before(&mut self, kind: EventKind, core: &mut TrainerCore<B>) -> Result<()> {
        if kind == EventKind::Fit {
            let have = core.model.config().dropout;
            ensure!(
                have == self.dropout,
                Validation,
                "stable SGD expects dropout {} but the model uses {have}",
                self.dropout
            );
        }
        Ok(())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// A fully specified method, independent of any backend.
#[derive(Clone, Debug, PartialEq)]
pub enum AlgorithmSpec {
    Naive,
    Ewc { lambda: f64, budget: usize },
    Si { lambda: f64, damping: f64 },
    Mas { lambda: f64, budget: usize },
    Lfl { lambda: f64 },
    Er { per_task_memory_samples: usize, mem_batch_size: usize },
    Agem { per_task_memory_samples: usize, mem_batch_size: usize },
    Der { mem_size: usize, alpha: f64, mem_batch_size: usize },
    Derpp { mem_size: usize, alpha: f64, beta: f64, mem_batch_size: usize },
    StableSgd { dropout: f64 },
    McSgd { per_task_memory_samples: usize, line: LineConfig },
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmSpec::Naive => "naive",
            AlgorithmSpec::Ewc { .. } => "ewc",
            AlgorithmSpec::Si { .. } => "si",
            AlgorithmSpec::Mas { .. } => "mas",
            AlgorithmSpec::Lfl { .. } => "lfl",
            AlgorithmSpec::Er { .. } => "er",
            AlgorithmSpec::Agem { .. } => "agem",
            AlgorithmSpec::Der { .. } => "der",
            AlgorithmSpec::Derpp { .. } => "derpp",
            AlgorithmSpec::StableSgd { .. } => "stablesgd",
            AlgorithmSpec::McSgd { .. } => "mcsgd",
        }
    }

    pub fn build<B: Backend>(&self) -> Result<Box<dyn Algorithm<B>>> {
        Ok(match self {
            AlgorithmSpec::Naive => Box::new(Naive),
            AlgorithmSpec::Ewc { lambda, budget } => Box::new(Ewc::<B>::ewc(*lambda)?.with_budget(*budget)?),
            AlgorithmSpec::Mas { lambda, budget } => Box::new(Mas::<B>::mas(*lambda)?.with_budget(*budget)?),
            AlgorithmSpec::Si { lambda, damping } => Box::new(Si::<B>::si(*lambda, *damping)?),
            AlgorithmSpec::Lfl { lambda } => Box::new(Lfl::<B>::new(*lambda)?),
            AlgorithmSpec::Er {
                per_task_memory_samples,
                mem_batch_size,
            } => Box::new(Er::new(*per_task_memory_samples, *mem_batch_size)),
            AlgorithmSpec::Agem {
                per_task_memory_samples,
                mem_batch_size,
            } => Box::new(Agem::new(*per_task_memory_samples, *mem_batch_size)),
            AlgorithmSpec::Der {
                mem_size,
                alpha,
                mem_batch_size,
            } => Box::new(Der::der(*mem_size, *alpha, *mem_batch_size)?),
            AlgorithmSpec::Derpp {
                mem_size,
                alpha,
                beta,
                mem_batch_size,
            } => Box::new(Der::derpp(*mem_size, *alpha, *beta, *mem_batch_size)?),
            AlgorithmSpec::StableSgd { dropout } => Box::new(StableSgd::new(*dropout)?),
            AlgorithmSpec::McSgd {
                per_task_memory_samples,
                line,
            } => Box::new(McSgd::<B::Elem>::new(*per_task_memory_samples, line.clone())?),
        })
    }
}
