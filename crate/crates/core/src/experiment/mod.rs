//! Declarative experiments: YAML configs, routing, single runs and sweeps.

mod config;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use config::{
    normalize, AlgoSection, BackboneSection, BackendKind, BenchmarkSection, ExperimentConfig, OptimizerSection,
    ScenarioName, SyntheticSection, TrainingSection, FRAMEWORK_VERSION,
};
pub use sweep::{parse_grid_arg, resolve_grid_path, run_sweep, Sweep, SweepPoint, SWEEP_INDEX_FILE};

use crate::algorithms::BaseAlgorithm;
use crate::backend::{Backend, Fast, Reference};
use crate::benchmarks::{resolve_data_root, Benchmark, MnistSource, Scenario};
use crate::error::{Error, Result};
use crate::events::{MetricCallback, MetricState, ProgressCallback};
use crate::loggers::{ConsoleLogger, CsvSummaryLogger, LocalLogger, LoggerSet, Phase};
use crate::nn::{write_checkpoint, HeadLayout, Mlp, MlpConfig, Sgd};

pub const CONFIG_FILE: &str = "config.yaml";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_yaml(&text)
}

/// Loads the benchmark a config names. MNIST variants read from `data_root`,
/// the config's own `benchmark.data_root`, or `$SEQUEL_DATA_DIR`, in that order.
pub fn load_benchmark(config: &ExperimentConfig, data_root: Option<&Path>) -> Result<Benchmark> {
    let spec = config.benchmark_spec()?;
    if spec.kind.is_mnist() {
        let root = resolve_data_root(data_root.or(config.benchmark.data_root.as_deref())).ok_or_else(|| {
            Error::config(
                "benchmark.data_root",
                "no MNIST directory given; set benchmark.data_root, pass --data-root or set SEQUEL_DATA_DIR",
            )
        })?;
        Benchmark::from_mnist(spec, &MnistSource::load(&root)?)
    } else {
        Benchmark::synthetic(spec)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub data_root: Option<PathBuf>,
    /// Directory receiving metrics, summary, config copy and checkpoint.
    pub run_dir: Option<PathBuf>,
    pub console: bool,
    /// Print a progress line every this many steps; 0 disables.
    pub progress_every: usize,
    pub trace: bool,
}

/// Default run identifier: `<algorithm>-<benchmark>-seed<seed>`.
pub fn run_id(config: &ExperimentConfig) -> String {
    format!("{}-{}-seed{}", config.algo.name, config.benchmark.name, config.seed)
}

fn build_trainer<B: Backend>(
    config: &ExperimentConfig,
    benchmark: Arc<Benchmark>,
    options: &RunOptions,
    run_id: &str,
) -> Result<BaseAlgorithm<B>> {
    let algorithm = config.algorithm_spec()?.build::<B>()?;
    let num_classes = benchmark.num_classes();
    if let Some(n) = config.backbone.num_classes {
        if n != num_classes {
            return Err(Error::config(
                "backbone.num_classes",
                format!("{n} does not match the benchmark's {num_classes} classes"),
            ));
        }
    }
    let heads = match benchmark.scenario() {
        Scenario::NewClass => HeadLayout::PerTask {
            num_tasks: benchmark.num_tasks(),
        },
        Scenario::NewInstance => HeadLayout::Shared,
    };
    let widths = vec![config.backbone.width; config.backbone.n_hidden_layers];
    let mlp = MlpConfig::new(benchmark.input_dim(), widths, num_classes)
        .with_heads(heads)
        .with_dropout(config.dropout()?);
    let model = Mlp::<B>::new(mlp, config.seed)?;
    let optimizer = Sgd::new(config.optimizer.lr, config.optimizer.momentum, config.lr_decay()?)?;

    let mut loggers = LoggerSet::new(run_id);
    if let Some(dir) = &options.run_dir {
        loggers.push(Box::new(LocalLogger::create(dir)?));
        loggers.push(Box::new(CsvSummaryLogger::new(dir)));
    }
    if options.console {
        loggers.push(Box::new(ConsoleLogger::stdout()));
    }
    let mut trainer = BaseAlgorithm::new(model, benchmark, optimizer, algorithm, config.seed)
        .with_callback(MetricCallback::new())
        .with_loggers(loggers);
    if options.progress_every > 0 {
        trainer = trainer.with_callback(ProgressCallback::new(options.progress_every));
    }
    if options.trace {
        trainer = trainer.with_trace();
    }
    Ok(trainer)
}

/// A trainer bound to the backend a config selects.
pub enum Experiment {
    Reference(BaseAlgorithm<Reference>),
    Fast(BaseAlgorithm<Fast>),
}

impl Experiment {
    /// Validates, routes and wires everything without training.
    pub fn build(config: &ExperimentConfig, options: &RunOptions) -> Result<Self> {
        config.validate()?;
        let benchmark = Arc::new(load_benchmark(config, options.data_root.as_deref())?);
        let id = run_id(config);
        Ok(match config.backend {
            BackendKind::Reference => Self::Reference(build_trainer(config, benchmark, options, &id)?),
            BackendKind::Fast => Self::Fast(build_trainer(config, benchmark, options, &id)?),
        })
    }

    pub fn fit(&mut self, epochs_per_task: usize) -> Result<()> {
        match self {
            Self::Reference(t) => t.fit(epochs_per_task),
            Self::Fast(t) => t.fit(epochs_per_task),
        }
    }

    pub fn metrics(&self) -> Option<&MetricState> {
        match self {
            Self::Reference(t) => t.metrics(),
            Self::Fast(t) => t.metrics(),
        }
    }

    pub fn loggers_mut(&mut self) -> &mut LoggerSet {
        match self {
            Self::Reference(t) => t.loggers_mut(),
            Self::Fast(t) => t.loggers_mut(),
        }
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        match self {
            Self::Reference(t) => write_checkpoint(path, t.model().params()),
            Self::Fast(t) => write_checkpoint(path, t.model().params()),
        }
    }

    pub fn write_trace(&self, path: &Path) -> Result<()> {
        match self {
            Self::Reference(t) => t.write_trace(path),
            Self::Fast(t) => t.write_trace(path),
        }
    }
}

/// Final numbers of a finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub run_dir: Option<PathBuf>,
    pub accuracy: MetricState,
    pub avg_acc: f64,
    /// `None` for single-task runs.
    pub forgetting: Option<f64>,
    /// Reference average accuracy from the config, in percent.
    pub expected_avg_acc: Option<f64>,
}

impl RunSummary {
    /// Measured minus expected average accuracy, in percentage points.
    pub fn expected_delta(&self) -> Option<f64> {
        self.expected_avg_acc.map(|e| 100.0 * self.avg_acc - e)
    }
}

/// Trains a config end to end. With a run directory, writes the effective
/// config, metrics, summary table and final checkpoint there.
pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<RunSummary> {
    let mut experiment = Experiment::build(config, options)?;
    if let Some(dir) = &options.run_dir {
        let path = dir.join(CONFIG_FILE);
        fs::write(&path, config.to_yaml()?).map_err(|e| Error::io(&path, e))?;
    }
    experiment.fit(config.training.epochs_per_task)?;
    let accuracy = experiment
        .metrics()
        .cloned()
        .ok_or_else(|| Error::Validation("metric callback missing".into()))?;
    let last = accuracy.num_rows();
    let avg_acc = accuracy.average_accuracy(last)?;
    let forgetting = if last >= 2 { Some(accuracy.forgetting(last)?) } else { None };
    let summary = RunSummary {
        run_id: run_id(config),
        run_dir: options.run_dir.clone(),
        accuracy,
        avg_acc,
        forgetting,
        expected_avg_acc: config.expected_avg_acc(),
    };
    if let Some(delta) = summary.expected_delta() {
        let loggers = experiment.loggers_mut();
        loggers.record(Phase::Summary, last, 0, 0, "expected_avg_acc", summary.expected_avg_acc.unwrap_or(0.0))?;
        loggers.record(Phase::Summary, last, 0, 0, "expected_avg_acc_delta", delta)?;
        loggers.flush()?;
    }
    if let Some(dir) = &options.run_dir {
        experiment.write_checkpoint(&dir.join(CHECKPOINT_FILE))?;
        if options.trace {
            experiment.write_trace(&dir.join("trace.tsv"))?;
        }
    }
    Ok(summary)
}
