mod common;

use std::path::Path;
use std::sync::Arc;

use sequel::algorithms::{AlgorithmSpec, BaseAlgorithm, LineConfig};
use sequel::benchmarks::{Benchmark, Scenario};
use sequel::events::MetricCallback;
use sequel::experiment::{
    load_benchmark, parse_grid_arg, run, run_sweep, Experiment, ExperimentConfig, RunOptions, Sweep, SWEEP_INDEX_FILE,
};
use sequel::loggers::{read_records, read_summary_csv};
use sequel::nn::{HeadLayout, Mlp, MlpConfig, Sgd};
use sequel::{Backend, Error, Fast, Reference};

fn config(algo: &str, scenario: &str, backend: &str) -> ExperimentConfig {
    ExperimentConfig::from_yaml(&format!(
        "version: 0.0.1\n\
         backend: {backend}\n\
         seed: 11\n\
         algo: {algo}\n\
         benchmark:\n  name: synthetic\n  batch_size: 16\n  eval_batch_size: 64\n  num_tasks: 2\n  synthetic: {{scenario: {scenario}, train_per_class: 40, val_per_class: 20}}\n\
         backbone: {{type: mlp, n_hidden_layers: 1, width: 24, dropout: 0.1}}\n\
         optimizer: {{type: sgd, lr: 0.05, momentum: 0.5, lr_decay: 0.9}}\n\
         training: {{epochs_per_task: 1}}\n"
    ))
    .unwrap()
}

fn imperative<B: Backend>(bench: Arc<Benchmark>, spec: &AlgorithmSpec, dropout: f64) -> BaseAlgorithm<B> {
    let heads = match bench.scenario() {
        Scenario::NewClass => HeadLayout::PerTask { num_tasks: 2 },
        Scenario::NewInstance => HeadLayout::Shared,
    };
    let cfg = MlpConfig::new(bench.input_dim(), vec![24], bench.num_classes())
        .with_heads(heads)
        .with_dropout(dropout);
    let model = Mlp::<B>::new(cfg, 11).unwrap();
    let opt = Sgd::new(0.05, 0.5, 0.9).unwrap();
    BaseAlgorithm::new(model, bench, opt, spec.build::<B>().unwrap(), 11).with_callback(MetricCallback::new())
}

const ALGOS: [&str; 11] = [
    "{name: naive}",
    "{name: ewc, ewc_lambda: 2.0, importance_samples: 64}",
    "{name: si, si_lambda: 0.5}",
    "{name: mas, mas_lambda: 1.0, importance_samples: 64}",
    "{name: lfl, lfl_lambda: 0.3}",
    "{name: er, per_task_memory_samples: 20, mem_batch_size: 8}",
    "{name: agem, per_task_memory_samples: 20}",
    "{name: der, mem_size: 30, alpha: 0.4}",
    "{name: derpp, mem_size: 30, alpha: 0.4, beta: 0.6, mem_batch_size: 8}",
    "{name: stablesgd, dropout: 0.1}",
    "{name: mcsgd, per_task_memory_samples: 20, lmc_lr: 0.05, lmc_momentum: 0.8, lmc_batch_size: 8, lmc_init_position: 0.1, lmc_line_samples: 4, lmc_epochs: 1}",
];

#[test]
fn config_and_imperative_wiring_agree_for_every_algorithm() {
    for scenario in ["ni", "nc"] {
        for algo in ALGOS {
            let c = config(algo, scenario, "reference");
            let bench = Arc::new(load_benchmark(&c, None).unwrap());
            let mut by_hand = imperative::<Reference>(bench, &c.algorithm_spec().unwrap(), c.dropout().unwrap());
            by_hand.fit(1).unwrap();
            let mut built = Experiment::build(&c, &RunOptions::default()).unwrap();
            built.fit(1).unwrap();
            let Experiment::Reference(built) = built else {
                panic!("backend routing")
            };
            assert!(
                built.model().params().bit_eq(by_hand.model().params()),
                "{algo} ({scenario})"
            );
            assert_eq!(built.metrics(), by_hand.metrics(), "{algo} ({scenario})");
        }
    }
}

#[test]
fn backend_key_selects_kernels() {
    let c = config(ALGOS[0], "ni", "fast");
    let bench = Arc::new(load_benchmark(&c, None).unwrap());
    let mut by_hand = imperative::<Fast>(bench, &AlgorithmSpec::Naive, 0.1);
    by_hand.fit(1).unwrap();
    let mut built = Experiment::build(&c, &RunOptions::default()).unwrap();
    built.fit(1).unwrap();
    let Experiment::Fast(built) = built else { panic!("backend routing") };
    assert!(built.model().params().bit_eq(by_hand.model().params()));
}

fn strip_wall_time(path: &Path) -> Vec<String> {
    read_records(path)
        .unwrap()
        .into_iter()
        .map(|mut r| {
            r.wall_time = 0.0;
            serde_json::to_string(&r).unwrap()
        })
        .collect()
}

#[test]
fn run_writes_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(ALGOS[5], "ni", "fast");
    c.expected = Some(serde_yaml::from_str("{avg_acc: 90.0}").unwrap());
    let opts = RunOptions {
        run_dir: Some(dir.path().join("r")),
        ..RunOptions::default()
    };
    let summary = run(&c, &opts).unwrap();
    let run_dir = dir.path().join("r");
    for f in ["config.yaml", "metrics.jsonl", "summary.csv", "checkpoint.bin"] {
        assert!(run_dir.join(f).is_file(), "{f} missing");
    }
    let table = read_summary_csv(&run_dir.join("summary.csv")).unwrap();
    assert_eq!(table.rows(), summary.accuracy.rows());
    assert_eq!(summary.accuracy.num_rows(), 2);
    assert!(summary.forgetting.is_some());
    let delta = summary.expected_delta().unwrap();
    assert!((delta - (100.0 * summary.avg_acc - 90.0)).abs() < 1e-12);
    let records = read_records(&run_dir.join("metrics.jsonl")).unwrap();
    let logged = records.iter().find(|r| r.metric == "expected_avg_acc_delta").unwrap();
    assert_eq!(serde_json::to_value(&logged.value).unwrap(), serde_json::json!(delta));
    let copy = ExperimentConfig::from_yaml(&std::fs::read_to_string(run_dir.join("config.yaml")).unwrap()).unwrap();
    assert_eq!(copy, c);
    let params = sequel::nn::read_checkpoint(&run_dir.join("checkpoint.bin")).unwrap();
    assert_eq!(params.len(), 20 * 24 + 24 + 24 * 4 + 4);
}

#[test]
fn equal_seeds_give_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(ALGOS[8], "nc", "fast");
    for name in ["a", "b"] {
        let opts = RunOptions {
            run_dir: Some(dir.path().join(name)),
            ..RunOptions::default()
        };
        run(&c, &opts).unwrap();
    }
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(strip_wall_time(&a.join("metrics.jsonl")), strip_wall_time(&b.join("metrics.jsonl")));
    assert_eq!(
        std::fs::read(a.join("summary.csv")).unwrap(),
        std::fs::read(b.join("summary.csv")).unwrap()
    );
}

#[test]
fn sweep_runs_every_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let grid = vec![
        parse_grid_arg("batch_size=10,20,30").unwrap(),
        parse_grid_arg("lr=0.01,0.1").unwrap(),
    ];
    let sweep = Sweep::new(config(ALGOS[0], "ni", "fast"), grid).unwrap();
    let results = run_sweep(&sweep, dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(results.len(), 6);
    let index: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(SWEEP_INDEX_FILE)).unwrap()).unwrap();
    let entries = index.as_array().unwrap();
    assert_eq!(entries.len(), 6);
    let points = sweep.points().unwrap();
    for (entry, point) in entries.iter().zip(&points) {
        let run_dir = dir.path().join(entry["run_dir"].as_str().unwrap());
        assert!(run_dir.join("summary.csv").is_file());
        let overrides: serde_yaml::Value = serde_json::from_value(entry["overrides"].clone()).unwrap();
        for (path, value) in &point.overrides {
            assert_eq!(&overrides[path.as_str()], value);
        }
        assert_eq!(overrides.as_mapping().unwrap().len(), point.overrides.len());
        assert_eq!(entry["seed"].as_u64().unwrap(), 11 + point.index as u64);
        let copy = ExperimentConfig::from_yaml(&std::fs::read_to_string(run_dir.join("config.yaml")).unwrap()).unwrap();
        assert_eq!(copy, point.config);
    }
}

#[test]
fn sweep_rejects_bad_paths_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let err = Sweep::new(config(ALGOS[0], "ni", "fast"), vec![parse_grid_arg("bacth_size=1,2").unwrap()]).unwrap_err();
    assert!(err.is_config_error());
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn mnist_without_data_is_a_config_or_io_error() {
    let c = ExperimentConfig::from_yaml(include_str!("../../../configs/ewc_rotatedmnist.yaml")).unwrap();
    let empty = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        data_root: Some(empty.path().to_path_buf()),
        ..RunOptions::default()
    };
    let Err(err) = Experiment::build(&c, &opts) else { panic!("built without data") };
    assert!(matches!(err, Error::Io { .. }), "{err}");
    assert!(err.to_string().contains("train-images"), "{err}");
}

#[test]
fn mcsgd_line_options_reach_the_algorithm() {
    let c = config(ALGOS[10], "ni", "reference");
    match c.algorithm_spec().unwrap() {
        AlgorithmSpec::McSgd { line, .. } => assert_eq!(
            line,
            LineConfig {
                lr: 0.05,
                momentum: 0.8,
                batch_size: 8,
                epochs: 1,
                line_samples: 4,
                init_position: 0.1
            }
        ),
        other => panic!("{other:?}"),
    }
}
