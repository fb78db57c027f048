use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sequel::algorithms::ALGORITHM_NAMES;
use sequel::benchmarks::{load_idx, missing_mnist_files, mnist_files, BENCHMARK_NAMES};
use sequel::experiment::{
    load_config, parse_grid_arg, run, run_id, run_sweep, BackendKind, ExperimentConfig, RunOptions, RunSummary, Sweep,
};
use sequel::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "sequel", version, about = "Run continual-learning experiments from YAML configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Parent directory of the run directory.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, value_parser = parse_backend)]
        backend: Option<BackendKind>,
        #[arg(long)]
        data_root: Option<PathBuf>,
        /// Print a progress line every N steps.
        #[arg(long, default_value_t = 0)]
        progress: usize,
        /// Also write the hook trace to trace.tsv.
        #[arg(long)]
        trace: bool,
        /// Skip the console accuracy table.
        #[arg(long)]
        quiet: bool,
    },
    /// Grid search: one run per point of the cartesian product.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `dotted.path=v1,v2,...`; repeatable.
        #[arg(long = "grid", value_name = "KEY=VALUES")]
        grid: Vec<String>,
        #[arg(long, default_value = "sweeps")]
        out: PathBuf,
        #[arg(long)]
        data_root: Option<PathBuf>,
    },
    /// Print the supported algorithm names.
    ListAlgorithms,
    /// Print the supported benchmark names.
    ListBenchmarks,
    /// Check that a directory holds the four MNIST IDX files.
    VerifyData {
        #[arg(long)]
        data_root: PathBuf,
    },
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    match s {
        "reference" => Ok(BackendKind::Reference),
        "fast" => Ok(BackendKind::Fast),
        other => Err(format!("unknown backend `{other}` (valid: reference, fast)")),
    }
}

fn exit_code(err: &Error) -> u8 {
    if err.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(&err))
}

fn config_or_exit(path: &PathBuf) -> Result<ExperimentConfig, ExitCode> {
    load_config(path).map_err(|err| {
        eprintln!("error: {err}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn print_summary(s: &RunSummary) {
    println!("run {}: avg_acc {:.4}", s.run_id, s.avg_acc);
    if let Some(f) = s.forgetting {
        println!("forgetting {f:.4}");
    }
    if let (Some(e), Some(d)) = (s.expected_avg_acc, s.expected_delta()) {
        println!("expected avg_acc {e:.2}, measured {:.2}, delta {d:+.2} points", 100.0 * s.avg_acc);
    }
    if let Some(dir) = &s.run_dir {
        println!("outputs in {}", dir.display());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::ListAlgorithms => {
            for name in ALGORITHM_NAMES {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::ListBenchmarks => {
            for name in BENCHMARK_NAMES {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::VerifyData { data_root } => verify_data(&data_root),
        Command::Run {
            config,
            seed,
            out,
            backend,
            data_root,
            progress,
            trace,
            quiet,
        } => {
            let mut config = match config_or_exit(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(backend) = backend {
                config.backend = backend;
            }
            if let Err(err) = config.validate() {
                return fail(err);
            }
            let options = RunOptions {
                data_root,
                run_dir: Some(out.join(run_id(&config))),
                console: !quiet,
                progress_every: progress,
                trace,
            };
            match run(&config, &options) {
                Ok(summary) => {
                    print_summary(&summary);
                    ExitCode::SUCCESS
                }
                Err(err) => fail(err),
            }
        }
        Command::Sweep {
            config,
            grid,
            out,
            data_root,
        } => {
            let config = match config_or_exit(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let grid = match grid.iter().map(|g| parse_grid_arg(g)).collect::<Result<Vec<_>, _>>() {
                Ok(g) => g,
                Err(err) => return fail(err),
            };
            let sweep = match Sweep::new(config, grid).and_then(|s| s.points().map(|_| s)) {
                Ok(s) => s,
                Err(err) => return fail(err),
            };
            let options = RunOptions {
                data_root,
                ..RunOptions::default()
            };
            match run_sweep(&sweep, &out, &options) {
                Ok(results) => {
                    for s in &results {
                        print_summary(s);
                    }
                    ExitCode::SUCCESS
                }
                Err(err) => fail(err),
            }
        }
    }
}

fn verify_data(root: &std::path::Path) -> ExitCode {
    let missing = missing_mnist_files(root);
    if !missing.is_empty() {
        eprintln!("missing MNIST files under {}:", root.display());
        for p in &missing {
            eprintln!("  {}", p.display());
        }
        return ExitCode::from(EXIT_CONFIG);
    }
    let [train_images, train_labels, test_images, test_labels] = mnist_files(root);
    for (name, images, labels) in [
        ("train", &train_images, &train_labels),
        ("test", &test_images, &test_labels),
    ] {
        match load_idx(images, labels) {
            Ok(split) => println!("{name}: {} images", split.len()),
            Err(err) => {
                eprintln!("error: {err}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    ExitCode::SUCCESS
}
