use std::path::Path;
use std::sync::Arc;

use super::core::TrainerCore;
use super::Algorithm;
use crate::backend::{argmax_rows, softmax_cross_entropy, Backend, Scalar};
use crate::benchmarks::Benchmark;
use crate::error::{ensure, Error, Result};
use crate::events::{
    dispatch, format_trace, Callback, EventContext, EventKind, HookTarget, MetricCallback, MetricState, Phase,
    TraceEntry,
};
use crate::loggers::LoggerSet;
use crate::nn::{Mlp, Sgd};

/// The training loop: task-by-task fitting with every event wrapped in
/// algorithm and callback hooks.
pub struct BaseAlgorithm<B: Backend> {
    pub core: TrainerCore<B>,
    algorithm: Box<dyn Algorithm<B>>,
    callbacks: Vec<Box<dyn Callback>>,
    loggers: LoggerSet,
    trace: Option<Vec<TraceEntry>>,
}

impl<B: Backend> BaseAlgorithm<B> {
    pub fn new(
        model: Mlp<B>,
        benchmark: Arc<Benchmark>,
        optimizer: Sgd<B::Elem>,
        algorithm: Box<dyn Algorithm<B>>,
        seed: u64,
    ) -> Self {
        Self {
            core: TrainerCore::new(model, optimizer, benchmark, seed),
            algorithm,
            callbacks: Vec::new(),
            loggers: LoggerSet::new("run"),
            trace: None,
        }
    }

    pub fn with_callback(mut self, callback: impl Callback + 'static) -> Self {
        self.callbacks.push(Box::new(callback));
        self
    }

    pub fn with_callbacks(mut self, callbacks: Vec<Box<dyn Callback>>) -> Self {
        self.callbacks.extend(callbacks);
        self
    }

    pub fn with_loggers(mut self, loggers: LoggerSet) -> Self {
        self.loggers = loggers;
        self
    }

    /// Records every hook invocation.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn algorithm_name(&self) -> &'static str {
        self.algorithm.name()
    }

    pub fn algorithm(&self) -> &dyn Algorithm<B> {
        self.algorithm.as_ref()
    }

    pub fn model(&self) -> &Mlp<B> {
        &self.core.model
    }

    pub fn loggers_mut(&mut self) -> &mut LoggerSet {
        &mut self.loggers
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let text = format_trace(self.trace.as_deref().unwrap_or(&[]));
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Metric state of the first registered [`MetricCallback`].
    pub fn metrics(&self) -> Option<&MetricState> {
        self.callbacks
            .iter()
            .find_map(|c| c.as_any().downcast_ref::<MetricCallback>())
            .map(MetricCallback::state)
    }

    /// Trains on every task in order, validating tasks `1..=t` after task `t`.
    pub fn fit(&mut self, epochs_per_task: usize) -> Result<()> {
        ensure!(epochs_per_task >= 1, Validation, "epochs_per_task must be at least 1");
        self.core.epochs_per_task = epochs_per_task;
        self.core.task = 0;
        self.core.epoch = 0;
        self.core.step = 0;
        let result = dispatch(self, EventKind::Fit, |s| {
            for t in 1..=s.core.num_tasks() {
                s.core.task = t;
                s.core.epoch = 0;
                s.core.step = 0;
                s.core.optimizer.decay_for_task(t);
                s.core.optimizer.reset_state();
                dispatch(s, EventKind::TaskFit, Self::task_fit)?;
            }
            Ok(())
        });
        result.map_err(|e| Error::Run {
            task: self.core.task,
            epoch: self.core.epoch,
            step: self.core.step,
            source: Box::new(e),
        })
    }

    fn task_fit(&mut self) -> Result<()> {
        let bench = self.core.benchmark.clone();
        let task = self.core.task;
        for epoch in 1..=self.core.epochs_per_task {
            self.core.epoch = epoch;
            self.core.step = 0;
            dispatch(self, EventKind::TrainingEpoch, |s| {
                let loader = bench.train_loader::<B::Elem>(task, &mut s.core.rngs.loader)?;
                for (i, batch) in loader.enumerate() {
                    s.core.step = i + 1;
                    s.core.batch = Some(batch);
                    s.core.loss = None;
                    s.core.predictions = None;
                    s.core.grads = None;
                    s.core.loss_grads = None;
                    dispatch(s, EventKind::TrainingStep, Self::training_step)?;
                }
                s.core.step = 0;
                s.core.batch = None;
                Ok(())
            })?;
        }
        self.core.epoch = 0;
        self.core.step = 0;
        self.core.batch = None;
        self.core.loss = None;
        self.core.predictions = None;
        dispatch(self, EventKind::Validation, Self::validate)
    }

    fn training_step(&mut self) -> Result<()> {
        let batch = self
            .core
            .batch
            .take()
            .ok_or_else(|| Error::Validation("training step without a batch".into()))?;
        let objective = self.algorithm.loss(&mut self.core, &batch);
        self.core.batch = Some(batch);
        let objective = objective?;
        ensure!(
            objective.loss.is_finite(),
            Validation,
            "non-finite training loss {}",
            objective.loss
        );
        let batch_len = self.core.batch.as_ref().map_or(0, |b| b.len());
        let mut predictions = objective.predictions;
        predictions.truncate(batch_len);
        self.core.loss = Some(objective.loss);
        self.core.predictions = Some(predictions);
        let terms = objective.terms;
        let param_grad = objective.param_grad;
        dispatch(self, EventKind::Backward, |s| s.core.backward(&terms, param_grad.as_ref()))?;
        drop(terms);
        dispatch(self, EventKind::OptimizerStep, |s| s.core.optimizer_step())
    }

    fn validate(&mut self) -> Result<()> {
        let bench = self.core.benchmark.clone();
        let loaders = bench.val_loaders_up_to::<B::Elem>(self.core.task)?;
        let mut step = 0;
        for (task, loader) in loaders {
            self.core.val_task = Some(task);
            for batch in loader {
                step += 1;
                self.core.step = step;
                self.core.batch = Some(batch);
                self.core.loss = None;
                self.core.predictions = None;
                dispatch(self, EventKind::ValidationStep, |s| {
                    let core = &mut s.core;
                    let batch = core.batch.as_ref().expect("validation batch");
                    let logits = core.model.predict(&batch.x, &batch.t)?;
                    let (loss, _) = softmax_cross_entropy::<B>(&logits, &batch.y)?;
                    core.loss = Some(loss.as_f64());
                    core.predictions = Some(argmax_rows(&logits));
                    Ok(())
                })?;
            }
        }
        self.core.val_task = None;
        self.core.batch = None;
        self.core.loss = None;
        self.core.predictions = None;
        self.core.step = 0;
        Ok(())
    }

    fn context(core: &TrainerCore<B>) -> EventContext<'_> {
        EventContext {
            task: core.task,
            num_tasks: core.num_tasks(),
            epoch: core.epoch,
            step: core.step,
            val_task: core.val_task,
            targets: core.batch.as_ref().map(|b| &b.y[..]),
            predictions: core.predictions.as_deref(),
            loss: core.loss,
        }
    }
}

impl<B: Backend> HookTarget for BaseAlgorithm<B> {
    fn algorithm_hook(&mut self, phase: Phase, kind: EventKind) -> Result<()> {
        match phase {
            Phase::Before => self.algorithm.on_before(kind, &mut self.core),
            Phase::After => self.algorithm.on_after(kind, &mut self.core),
        }
    }

    fn callback_names(&self) -> Vec<String> {
        self.callbacks.iter().map(|c| c.name().to_string()).collect()
    }

    fn callback_hook(&mut self, index: usize, phase: Phase, kind: EventKind) -> Result<()> {
        let ctx = Self::context(&self.core);
        let cb = &mut self.callbacks[index];
        match phase {
            Phase::Before => cb.on_before(kind, &ctx, &mut self.loggers),
            Phase::After => cb.on_after(kind, &ctx, &mut self.loggers),
        }
    }

    fn trace(&mut self, hook: String) {
        if let Some(trace) = &mut self.trace {
            trace.push(TraceEntry {
                seq: trace.len(),
                hook,
                task: self.core.task,
                epoch: self.core.epoch,
                step: self.core.step,
            });
        }
    }
}
