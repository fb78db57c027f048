#![allow(dead_code)]

use std::any::Any;
use std::sync::Arc;

use sequel::algorithms::{Algorithm, AlgorithmSpec, BaseAlgorithm, Objective, TrainerCore};
use sequel::benchmarks::{Batch, Benchmark, BenchmarkKind, BenchmarkSpec, Scenario, SyntheticSpec};
use sequel::events::{EventKind, MetricCallback};
use sequel::nn::{HeadLayout, Mlp, MlpConfig, Sgd};
use sequel::{Backend, Result};

pub fn synthetic(num_tasks: usize, scenario: Scenario, batch_size: usize) -> Arc<Benchmark> {
    let s = SyntheticSpec {
        num_tasks,
        scenario,
        num_classes: if scenario == Scenario::NewClass { 2 * num_tasks } else { 4 },
        ..SyntheticSpec::default()
    };
    let mut spec = BenchmarkSpec::new(BenchmarkKind::Synthetic(s), num_tasks, batch_size);
    spec.eval_batch_size = 64;
    Arc::new(Benchmark::synthetic(spec).unwrap())
}

pub struct Setup {
    pub widths: Vec<usize>,
    pub dropout: f64,
    pub lr: f64,
    pub momentum: f64,
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for Setup {
    fn default() -> Self {
        Self {
            widths: vec![32],
            dropout: 0.0,
            lr: 0.05,
            momentum: 0.0,
            lr_decay: 1.0,
            seed: 7,
        }
    }
}

pub fn trainer<B: Backend>(bench: &Arc<Benchmark>, algo: &AlgorithmSpec, setup: &Setup) -> Result<BaseAlgorithm<B>> {
    let heads = match bench.scenario() {
        Scenario::NewClass => HeadLayout::PerTask {
            num_tasks: bench.num_tasks(),
        },
        Scenario::NewInstance => HeadLayout::Shared,
    };
    let cfg = MlpConfig::new(bench.input_dim(), setup.widths.clone(), bench.num_classes())
        .with_heads(heads)
        .with_dropout(setup.dropout);
    let model = Mlp::<B>::new(cfg, setup.seed)?;
    let opt = Sgd::new(setup.lr, setup.momentum, setup.lr_decay)?;
    Ok(BaseAlgorithm::new(model, bench.clone(), opt, algo.build::<B>()?, setup.seed).with_callback(MetricCallback::new()))
}

pub fn run<B: Backend>(
    bench: &Arc<Benchmark>,
    algo: &AlgorithmSpec,
    setup: &Setup,
    epochs: usize,
) -> Result<BaseAlgorithm<B>> {
    let mut t = trainer::<B>(bench, algo, setup)?;
    t.fit(epochs)?;
    Ok(t)
}

/// Observer invoked after the wrapped algorithm's own `on_after` hook.
pub type TapFn<B> = Box<dyn FnMut(EventKind, &dyn Algorithm<B>, &TrainerCore<B>)>;

/// Wraps an algorithm and calls `tap` after each of its `on_after` hooks.
pub struct Tap<B: Backend> {
    pub inner: Box<dyn Algorithm<B>>,
    pub tap: TapFn<B>,
}

impl<B: Backend> Algorithm<B> for Tap<B> {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn on_before(&mut self, kind: EventKind, core: &mut TrainerCore<B>) -> Result<()> {
        self.inner.on_before(kind, core)
    }

    fn on_after(&mut self, kind: EventKind, core: &mut TrainerCore<B>) -> Result<()> {
        self.inner.on_after(kind, core)?;
        (self.tap)(kind, self.inner.as_ref(), core);
        Ok(())
    }

    fn loss(&mut self, core: &mut TrainerCore<B>, batch: &Batch<B::Elem>) -> Result<Objective<B::Elem>> {
        self.inner.loss(core, batch)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

pub fn tapped<B: Backend>(
    bench: &Arc<Benchmark>,
    algo: &AlgorithmSpec,
    setup: &Setup,
    tap: TapFn<B>,
) -> Result<BaseAlgorithm<B>> {
    let plain = trainer::<B>(bench, &AlgorithmSpec::Naive, setup)?;
    let model = plain.model().clone();
    let opt = Sgd::new(setup.lr, setup.momentum, setup.lr_decay)?;
    let wrapped = Tap {
        inner: algo.build::<B>()?,
        tap,
    };
    Ok(BaseAlgorithm::new(model, bench.clone(), opt, Box::new(wrapped), setup.seed).with_callback(MetricCallback::new()))
}

/// One expected trace record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expected {
    pub hook: String,
    pub task: usize,
    pub epoch: usize,
    pub step: usize,
}

/// Builds the hook sequence a run must produce, straight from the rule that
/// every event `E` expands to: algorithm before-hook, callback before-hooks,
/// `E` itself (with nested events), algorithm after-hook, callback
/// after-hooks.
pub struct TraceOracle<'a> {
    pub callbacks: &'a [&'a str],
    pub out: Vec<Expected>,
}

impl TraceOracle<'_> {
    fn push(&mut self, hook: String, at: (usize, usize, usize)) {
        self.out.push(Expected {
            hook,
            task: at.0,
            epoch: at.1,
            step: at.2,
        });
    }

    pub fn event(&mut self, name: &str, at: (usize, usize, usize), inner: impl FnOnce(&mut Self)) {
        self.push(format!("on_before_{name}"), at);
        for cb in self.callbacks {
            self.push(format!("on_before_{name}_callbacks:{cb}"), at);
        }
        self.push(name.to_string(), at);
        inner(self);
        self.push(format!("on_after_{name}"), at);
        for cb in self.callbacks {
            self.push(format!("on_after_{name}_callbacks:{cb}"), at);
        }
    }

    /// A whole run: `train_steps` batches per epoch, and after task `t`
    /// validation over tasks `1..=t` with `val_steps[j-1]` batches each.
    pub fn run(callbacks: &[&str], num_tasks: usize, epochs: usize, train_steps: usize, val_steps: &[usize]) -> Vec<Expected> {
        let mut o = TraceOracle { callbacks, out: vec![] };
        o.event("fit", (0, 0, 0), |o| {
            for t in 1..=num_tasks {
                o.event("task_fit", (t, 0, 0), |o| {
                    for e in 1..=epochs {
                        o.event("training_epoch", (t, e, 0), |o| {
                            for s in 1..=train_steps {
                                o.event("training_step", (t, e, s), |o| {
                                    o.event("backward", (t, e, s), |_| {});
                                    o.event("optimizer_step", (t, e, s), |_| {});
                                });
                            }
                        });
                    }
                    o.event("validation", (t, 0, 0), |o| {
                        let total: usize = val_steps[..t].iter().sum();
                        for s in 1..=total {
                            o.event("validation_step", (t, 0, s), |_| {});
                        }
                    });
                });
            }
        });
        // the closing fit hooks see the last task
        let n = o.out.len();
        let closing = 1 + callbacks.len();
        for e in &mut o.out[n - closing..] {
            e.task = num_tasks;
        }
        o.out
    }
}
