use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_yaml::{Mapping, Value};

use crate::algorithms::{AlgorithmSpec, LineConfig, ALGORITHM_NAMES, IMPORTANCE_BUDGET, SI_DAMPING, UNSUPPORTED_ALGORITHMS};
use crate::benchmarks::{BenchmarkKind, BenchmarkSpec, Scenario, SyntheticSpec, BENCHMARK_NAMES};
use crate::error::{Error, Result};

pub const FRAMEWORK_VERSION: &str = "0.0.1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Reference,
    #[default]
    Fast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: String,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub seed: u64,
    pub algo: AlgoSection,
    pub benchmark: BenchmarkSection,
    pub backbone: BackboneSection,
    pub optimizer: OptimizerSection,
    pub training: TrainingSection,
    /// Reference results; echoed, never interpreted beyond reporting a delta.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Remote tracking settings; accepted and ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wandb: Option<Value>,
}

/// Method name plus its keyword options, validated when routed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoSection {
    pub name: String,
    #[serde(flatten)]
    pub options: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub name: String,
    pub batch_size: usize,
    #[serde(default = "default_eval_batch_size")]
    pub eval_batch_size: usize,
    pub num_tasks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_task_rotation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_root: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSection>,
}

fn default_eval_batch_size() -> usize {
    1024
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Ni,
    Nc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    #[serde(default = "defaults::input_dim")]
    pub input_dim: usize,
    #[serde(default = "defaults::num_classes")]
    pub num_classes: usize,
    #[serde(default = "defaults::train_per_class")]
    pub train_per_class: usize,
    #[serde(default = "defaults::val_per_class")]
    pub val_per_class: usize,
    #[serde(default = "defaults::scenario")]
    pub scenario: ScenarioName,
    #[serde(default = "defaults::separation")]
    pub separation: f64,
    #[serde(default = "defaults::noise")]
    pub noise: f64,
}

mod defaults {
    use super::*;

    pub fn input_dim() -> usize {
        SyntheticSpec::default().input_dim
    }
    pub fn num_classes() -> usize {
        SyntheticSpec::default().num_classes
    }
    pub fn train_per_class() -> usize {
        SyntheticSpec::default().train_per_class
    }
    pub fn val_per_class() -> usize {
        SyntheticSpec::default().val_per_class
    }
    pub fn scenario() -> ScenarioName {
        ScenarioName::Ni
    }
    pub fn separation() -> f64 {
        SyntheticSpec::default().separation
    }
    pub fn noise() -> f64 {
        SyntheticSpec::default().noise
    }
}

impl Default for SyntheticSection {
    fn default() -> Self {
        serde_yaml::from_value(Value::Mapping(Mapping::new())).expect("all synthetic keys have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneSection {
    #[serde(rename = "type")]
    pub kind: String,
    pub n_hidden_layers: usize,
    pub width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(default)]
    pub dropout: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(rename = "type")]
    pub kind: String,
    pub lr: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_decay: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs_per_task: usize,
}

fn yaml_error(e: serde_yaml::Error) -> Error {
    let path = e
        .location()
        .map(|l| format!("<line {} column {}>", l.line(), l.column()))
        .unwrap_or_else(|| "<document>".to_string());
    Error::config(path, e.to_string())
}

fn path_error<E: std::fmt::Display>(prefix: &str, e: serde_path_to_error::Error<E>) -> Error {
    let path = e.path().to_string();
    let message = e.inner().to_string();
    let full = match (prefix.is_empty(), path.as_str()) {
        (true, _) => path,
        (false, ".") => prefix.to_string(),
        (false, p) => format!("{prefix}.{p}"),
    };
    Error::config(full, message)
}

/// Rewrites accepted legacy spellings in place.
pub fn normalize(value: &mut Value) -> Result<()> {
    let Value::Mapping(root) = value else {
        return Err(Error::config("<document>", "top level must be a mapping"));
    };
    if let Some(mode) = root.remove("mode") {
        if root.contains_key("backend") {
            return Err(Error::config("mode", "give either `mode` or `backend`, not both"));
        }
        let backend = match mode.as_str() {
            Some("pytorch") => "reference",
            Some("jax") => "fast",
            _ => return Err(Error::config("mode", format!("expected pytorch or jax, got {mode:?}"))),
        };
        log::warn!("`mode: {}` is a legacy key; using `backend: {backend}`", mode.as_str().unwrap_or(""));
        root.insert("backend".into(), backend.into());
    }
    if let Some(Value::Mapping(training)) = root.get_mut("training") {
        if let Some(v) = training.remove("epoch_per_task") {
            if training.contains_key("epochs_per_task") {
                return Err(Error::config(
                    "training.epoch_per_task",
                    "give either `epoch_per_task` or `epochs_per_task`, not both",
                ));
            }
            training.insert("epochs_per_task".into(), v);
        }
    }
    if let Some(v) = root.get("version") {
        // `0.0.1` is not a YAML number, but a bare `1.0` would be
        if let Value::Number(n) = v {
            let s = n.to_string();
            root.insert("version".into(), s.into());
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_yaml(text: &str) -> Result<Self> {
        let value: Value = serde_yaml::from_str(text).map_err(yaml_error)?;
        Self::from_value(value)
    }

    pub fn from_value(mut value: Value) -> Result<Self> {
        normalize(&mut value)?;
        let config: Self = serde_path_to_error::deserialize(value).map_err(|e| path_error("", e))?;
        if config.version != FRAMEWORK_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported version {}, expected {FRAMEWORK_VERSION}", config.version),
            ));
        }
        if config.wandb.is_some() {
            log::info!("remote tracking settings under `wandb` are ignored");
        }
        Ok(config)
    }

    pub fn to_yaml(&self) -> Result<String> {
        serde_yaml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn to_value(&self) -> Result<Value> {
        serde_yaml::to_value(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// `expected.avg_acc`, when present and numeric.
    pub fn expected_avg_acc(&self) -> Option<f64> {
        self.expected.as_ref()?.get("avg_acc")?.as_f64()
    }

    /// Learning-rate decay: the algorithm-level key wins over the optimizer's.
    pub fn lr_decay(&self) -> Result<f64> {
        let algo = match self.algo.options.get("lr_decay") {
            Some(v) => Some(
                v.as_f64()
                    .ok_or_else(|| Error::config("algo.lr_decay", "expected a number"))?,
            ),
            None => None,
        };
        Ok(algo.or(self.optimizer.lr_decay).unwrap_or(1.0))
    }

    /// Dropout applied to the backbone; a stable SGD `dropout` key overrides it.
    pub fn dropout(&self) -> Result<f64> {
        if self.algo.name == "stablesgd" {
            if let Some(v) = self.algo.options.get("dropout") {
                return v
                    .as_f64()
                    .ok_or_else(|| Error::config("algo.dropout", "expected a number"));
            }
        }
        Ok(self.backbone.dropout)
    }

    /// Resolves the algorithm section into a typed method.
    pub fn algorithm_spec(&self) -> Result<AlgorithmSpec> {
        let name = self.algo.name.as_str();
        if UNSUPPORTED_ALGORITHMS.contains(&name) {
            return Err(Error::UnsupportedAlgorithm(name.to_string()));
        }
        if !ALGORITHM_NAMES.contains(&name) {
            return Err(Error::Router {
                kind: "algorithm",
                name: name.to_string(),
                valid: ALGORITHM_NAMES.to_vec(),
            });
        }
        let mut options: Mapping = self
            .algo
            .options
            .iter()
            .filter(|(k, _)| k.as_str() != "lr_decay")
            .map(|(k, v)| (Value::from(k.as_str()), v.clone()))
            .collect();
        if name == "stablesgd" {
            options.remove("dropout");
        }
        let value = Value::Mapping(options);
        let batch = self.benchmark.batch_size;
        Ok(match name {
            "naive" | "stablesgd" => {
                let _: NoOptions = typed(value)?;
                if name == "naive" {
                    AlgorithmSpec::Naive
                } else {
                    AlgorithmSpec::StableSgd { dropout: self.dropout()? }
                }
            }
            "ewc" => {
                let o: EwcOptions = typed(value)?;
                AlgorithmSpec::Ewc {
                    lambda: o.ewc_lambda,
                    budget: o.importance_samples,
                }
            }
            "mas" => {
                let o: MasOptions = typed(value)?;
                AlgorithmSpec::Mas {
                    lambda: o.mas_lambda,
                    budget: o.importance_samples,
                }
            }
            "si" => {
                let o: SiOptions = typed(value)?;
                AlgorithmSpec::Si {
                    lambda: o.si_lambda,
                    damping: o.si_damping,
                }
            }
            "lfl" => {
                let o: LflOptions = typed(value)?;
                AlgorithmSpec::Lfl { lambda: o.lfl_lambda }
            }
            "er" | "agem" => {
                let o: EpisodicOptions = typed(value)?;
                let per_task_memory_samples = o.per_task_memory_samples;
                let mem_batch_size = o.mem_batch_size.unwrap_or(batch);
                if name == "er" {
                    AlgorithmSpec::Er {
                        per_task_memory_samples,
                        mem_batch_size,
                    }
                } else {
                    AlgorithmSpec::Agem {
                        per_task_memory_samples,
                        mem_batch_size,
                    }
                }
            }
            "der" => {
                let o: DerOptions = typed(value)?;
                check_non_negative("algo.alpha", o.alpha)?;
                AlgorithmSpec::Der {
                    mem_size: o.mem_size,
                    alpha: o.alpha,
                    mem_batch_size: o.mem_batch_size.unwrap_or(batch),
                }
            }
            "derpp" => {
                let o: DerppOptions = typed(value)?;
                check_non_negative("algo.alpha", o.alpha)?;
                check_non_negative("algo.beta", o.beta)?;
                AlgorithmSpec::Derpp {
                    mem_size: o.mem_size,
                    alpha: o.alpha,
                    beta: o.beta,
                    mem_batch_size: o.mem_batch_size.unwrap_or(batch),
                }
            }
            "mcsgd" => {
                let o: McSgdOptions = typed(value)?;
                if o.lmc_policy != "offline" {
                    return Err(Error::config("algo.lmc_policy", "only `offline` is supported"));
                }
                if o.lmc_interpolation != "linear" {
                    return Err(Error::config("algo.lmc_interpolation", "only `linear` is supported"));
                }
                let line = LineConfig {
                    lr: o.lmc_lr,
                    momentum: o.lmc_momentum,
                    batch_size: o.lmc_batch_size,
                    epochs: o.lmc_epochs,
                    line_samples: o.lmc_line_samples,
                    init_position: o.lmc_init_position,
                };
                line.validate().map_err(|e| Error::config("algo", e.to_string()))?;
                AlgorithmSpec::McSgd {
                    per_task_memory_samples: o.per_task_memory_samples,
                    line,
                }
            }
            _ => unreachable!("name checked against ALGORITHM_NAMES"),
        })
    }

    /// Resolves the benchmark section.
    pub fn benchmark_spec(&self) -> Result<BenchmarkSpec> {
        let b = &self.benchmark;
        let name = b.name.as_str();
        let kind = match name {
            "splitmnist" => BenchmarkKind::SplitMnist,
            "permutedmnist" => BenchmarkKind::PermutedMnist,
            "rotatedmnist" => BenchmarkKind::RotatedMnist {
                per_task_rotation: b
                    .per_task_rotation
                    .ok_or_else(|| Error::config("benchmark.per_task_rotation", "required for rotatedmnist"))?,
            },
            "synthetic" => {
                let s = b.synthetic.clone().unwrap_or_default();
                BenchmarkKind::Synthetic(SyntheticSpec {
                    input_dim: s.input_dim,
                    num_classes: s.num_classes,
                    num_tasks: b.num_tasks,
                    train_per_class: s.train_per_class,
                    val_per_class: s.val_per_class,
                    scenario: match s.scenario {
                        ScenarioName::Ni => Scenario::NewInstance,
                        ScenarioName::Nc => Scenario::NewClass,
                    },
                    separation: s.separation,
                    noise: s.noise,
                })
            }
            _ => {
                return Err(Error::Router {
                    kind: "benchmark",
                    name: name.to_string(),
                    valid: BENCHMARK_NAMES.to_vec(),
                })
            }
        };
        if b.per_task_rotation.is_some() && name != "rotatedmnist" {
            return Err(Error::config("benchmark.per_task_rotation", "only valid for rotatedmnist"));
        }
        if b.synthetic.is_some() && name != "synthetic" {
            return Err(Error::config("benchmark.synthetic", "only valid for the synthetic benchmark"));
        }
        Ok(BenchmarkSpec {
            kind,
            num_tasks: b.num_tasks,
            batch_size: b.batch_size,
            eval_batch_size: b.eval_batch_size,
            subset: b.subset,
            seed: self.seed,
        })
    }

    /// Checks every routed name and option without loading data.
    pub fn validate(&self) -> Result<()> {
        self.algorithm_spec()?;
        self.benchmark_spec()?;
        if self.backbone.kind != "mlp" {
            return Err(Error::Router {
                kind: "backbone",
                name: self.backbone.kind.clone(),
                valid: vec!["mlp"],
            });
        }
        if self.optimizer.kind != "sgd" {
            return Err(Error::Router {
                kind: "optimizer",
                name: self.optimizer.kind.clone(),
                valid: vec!["sgd"],
            });
        }
        if self.training.epochs_per_task == 0 {
            return Err(Error::config("training.epochs_per_task", "must be at least 1"));
        }
        if self.backbone.width == 0 && self.backbone.n_hidden_layers > 0 {
            return Err(Error::config("backbone.width", "must be positive"));
        }
        let d = self.dropout()?;
        if !(0.0..1.0).contains(&d) {
            return Err(Error::config("backbone.dropout", format!("{d} outside [0, 1)")));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(Error::config("optimizer.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.optimizer.momentum) {
            return Err(Error::config("optimizer.momentum", "must lie in [0, 1)"));
        }
        let decay = self.lr_decay()?;
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::config("optimizer.lr_decay", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn check_non_negative(path: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be finite and non-negative, got {v}")))
    }
}

fn typed<T: for<'de> Deserialize<'de>>(value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| path_error("algo", e))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoOptions {}

fn importance_budget() -> usize {
    IMPORTANCE_BUDGET
}

fn si_damping() -> f64 {
    SI_DAMPING
}

fn per_task_memory() -> usize {
    100
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EwcOptions {
    ewc_lambda: f64,
    #[serde(default = "importance_budget")]
    importance_samples: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MasOptions {
    mas_lambda: f64,
    #[serde(default = "importance_budget")]
    importance_samples: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SiOptions {
    si_lambda: f64,
    #[serde(default = "si_damping")]
    si_damping: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LflOptions {
    lfl_lambda: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EpisodicOptions {
    #[serde(default = "per_task_memory")]
    per_task_memory_samples: usize,
    #[serde(default)]
    mem_batch_size: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DerOptions {
    mem_size: usize,
    alpha: f64,
    #[serde(default)]
    mem_batch_size: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DerppOptions {
    mem_size: usize,
    alpha: f64,
    beta: f64,
    #[serde(default)]
    mem_batch_size: Option<usize>,
}

fn offline() -> String {
    "offline".into()
}

fn linear() -> String {
    "linear".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct McSgdOptions {
    #[serde(default = "per_task_memory")]
    per_task_memory_samples: usize,
    #[serde(default = "offline")]
    lmc_policy: String,
    #[serde(default = "linear")]
    lmc_interpolation: String,
    lmc_lr: f64,
    lmc_momentum: f64,
    lmc_batch_size: usize,
    lmc_init_position: f64,
    lmc_line_samples: usize,
    lmc_epochs: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    const EWC: &str = include_str!("../../../../configs/ewc_rotatedmnist.yaml");
    const MCSGD: &str = include_str!("../../../../configs/mcsgd_rotatedmnist.yaml");
    const LAMAML: &str = include_str!("../../../../configs/lamaml_rotatedmnist.yaml");

    fn minimal() -> String {
        "version: 0.0.1\n\
         algo: {name: naive}\n\
         benchmark: {name: synthetic, batch_size: 8, num_tasks: 2}\n\
         backbone: {type: mlp, n_hidden_layers: 1, width: 16}\n\
         optimizer: {type: sgd, lr: 0.1}\n\
         training: {epochs_per_task: 1}\n"
            .to_string()
    }

    fn config_path(err: Error) -> String {
        match err {
            Error::Config { path, .. } => path,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn ewc_file_parses() {
        let c = ExperimentConfig::from_yaml(EWC).unwrap();
        assert_eq!(c.backend, BackendKind::Reference);
        assert_eq!(
            c.algorithm_spec().unwrap(),
            AlgorithmSpec::Ewc {
                lambda: 1.0,
                budget: IMPORTANCE_BUDGET
            }
        );
        let b = c.benchmark_spec().unwrap();
        assert_eq!(b.num_tasks, 20);
        assert_eq!(b.kind, BenchmarkKind::RotatedMnist { per_task_rotation: 9.0 });
        assert_eq!((c.backbone.n_hidden_layers, c.backbone.width), (2, 256));
        assert_eq!(c.dropout().unwrap(), 0.2);
        assert_eq!(c.lr_decay().unwrap(), 0.8);
        assert!(c.wandb.is_some());
        c.validate().unwrap();
    }

    #[test]
    fn mcsgd_file_keeps_expected_metadata() {
        let c = ExperimentConfig::from_yaml(MCSGD).unwrap();
        assert_eq!(c.expected_avg_acc(), Some(82.3));
        assert_eq!(c.source.as_deref(), Some("mcsgd paper"));
        assert_eq!(c.backend, BackendKind::Fast);
        assert_eq!(c.lr_decay().unwrap(), 0.8);
        assert_eq!(c.optimizer.momentum, 0.8);
        match c.algorithm_spec().unwrap() {
            AlgorithmSpec::McSgd {
                per_task_memory_samples,
                line,
            } => {
                assert_eq!(per_task_memory_samples, 100);
                assert_eq!(line.init_position, 0.1);
                assert_eq!(line.line_samples, 10);
                assert_eq!((line.lr, line.momentum, line.batch_size, line.epochs), (0.05, 0.8, 64, 1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lamaml_parses_then_fails_routing() {
        let c = ExperimentConfig::from_yaml(LAMAML).unwrap();
        assert_eq!(c.training.epochs_per_task, 1);
        assert_eq!(c.benchmark.subset, Some(1000));
        let err = c.validate().unwrap_err();
        assert!(matches!(err, Error::UnsupportedAlgorithm(ref n) if n == "lamaml"));
        assert!(err.to_string().contains("unsupported algorithm"));
    }

    #[test]
    fn defaults_are_filled() {
        let c = ExperimentConfig::from_yaml(&minimal()).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.benchmark.eval_batch_size, 1024);
        assert_eq!(c.optimizer.momentum, 0.0);
        assert_eq!(c.lr_decay().unwrap(), 1.0);
        assert_eq!(c.backend, BackendKind::Fast);
        assert_eq!(c.algorithm_spec().unwrap(), AlgorithmSpec::Naive);
    }

    #[test]
    fn misspelled_key_names_its_path() {
        let text = minimal().replace("batch_size", "bacth_size");
        let path = config_path(ExperimentConfig::from_yaml(&text).unwrap_err());
        assert_eq!(path, "benchmark.bacth_size");
        let text = minimal().replace("version: 0.0.1", "version: 0.0.1\nextra: 1");
        assert_eq!(config_path(ExperimentConfig::from_yaml(&text).unwrap_err()), "extra");
    }

    #[test]
    fn type_mismatch_and_missing_key() {
        let text = minimal().replace("lr: 0.1", "lr: fast");
        assert_eq!(config_path(ExperimentConfig::from_yaml(&text).unwrap_err()), "optimizer.lr");
        let text = minimal().replace(", num_tasks: 2", "");
        let err = ExperimentConfig::from_yaml(&text).unwrap_err();
        assert!(err.to_string().contains("num_tasks"), "{err}");
        assert_eq!(config_path(err), "benchmark");
    }

    #[test]
    fn algorithm_options_are_strict() {
        let text = minimal().replace("{name: naive}", "{name: ewc, ewc_lamda: 1.0}");
        let c = ExperimentConfig::from_yaml(&text).unwrap();
        assert_eq!(config_path(c.algorithm_spec().unwrap_err()), "algo.ewc_lamda");
        let text = minimal().replace("{name: naive}", "{name: der, mem_size: 10, alpha: -1}");
        let c = ExperimentConfig::from_yaml(&text).unwrap();
        assert_eq!(config_path(c.algorithm_spec().unwrap_err()), "algo.alpha");
    }

    #[test]
    fn routers_list_valid_names() {
        let text = minimal().replace("{name: naive}", "{name: gdumb}");
        let err = ExperimentConfig::from_yaml(&text).unwrap().validate().unwrap_err();
        assert!(matches!(err, Error::Router { kind: "algorithm", .. }));
        assert!(err.to_string().contains("mcsgd"));
        let text = minimal().replace("name: synthetic", "name: cifar");
        let err = ExperimentConfig::from_yaml(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("splitmnist"), "{err}");
        let text = minimal().replace("type: mlp", "type: resnet");
        let err = ExperimentConfig::from_yaml(&text).unwrap().validate().unwrap_err();
        assert!(matches!(err, Error::Router { kind: "backbone", .. }));
    }

    #[test]
    fn legacy_spellings() {
        let text = minimal().replace("version: 0.0.1", "version: 0.0.1\nmode: jax");
        assert_eq!(ExperimentConfig::from_yaml(&text).unwrap().backend, BackendKind::Fast);
        let both = minimal().replace("version: 0.0.1", "version: 0.0.1\nmode: jax\nbackend: fast");
        assert_eq!(config_path(ExperimentConfig::from_yaml(&both).unwrap_err()), "mode");
        let text = minimal().replace("epochs_per_task", "epoch_per_task");
        assert_eq!(ExperimentConfig::from_yaml(&text).unwrap().training.epochs_per_task, 1);
    }

    #[test]
    fn version_is_checked() {
        let text = minimal().replace("0.0.1", "0.2.0");
        assert_eq!(config_path(ExperimentConfig::from_yaml(&text).unwrap_err()), "version");
    }

    #[test]
    fn only_offline_linear_consolidation() {
        let c = ExperimentConfig::from_yaml(&MCSGD.replace("lmc_policy: offline", "lmc_policy: online")).unwrap();
        assert_eq!(config_path(c.algorithm_spec().unwrap_err()), "algo.lmc_policy");
    }

    #[test]
    fn rotation_key_only_for_rotated() {
        let text = minimal().replace("num_tasks: 2", "num_tasks: 2, per_task_rotation: 9");
        let c = ExperimentConfig::from_yaml(&text).unwrap();
        assert_eq!(config_path(c.validate().unwrap_err()), "benchmark.per_task_rotation");
    }

    #[test]
    fn effective_config_round_trips() {
        for text in [EWC, MCSGD, LAMAML] {
            let c = ExperimentConfig::from_yaml(text).unwrap();
            let again = ExperimentConfig::from_yaml(&c.to_yaml().unwrap()).unwrap();
            assert_eq!(c, again);
        }
    }
}
