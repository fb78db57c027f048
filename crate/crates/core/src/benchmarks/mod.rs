//! Task streams: per-task train/validation datasets and `(x, y, t)` batches.
//!
//! New-class ("Split") benchmarks partition the labels into contiguous blocks
//! in ascending order; new-instance benchmarks pair every task with a fixed
//! input transformation (task 1 untransformed).

mod idx;
mod loader;
pub mod synthetic;
mod transforms;

use std::collections::BTreeMap;

pub use idx::{
    load_idx, missing_mnist_files, mnist_files, read_idx_images, read_idx_labels, resolve_data_root, IdxSplit,
    MnistSource, IMAGE_MAGIC, LABEL_MAGIC,
};
pub use loader::{Batch, DataLoader};
pub use synthetic::SyntheticSpec;
pub use transforms::{invert_permutation, permute_image, rotate_image, validate_permutation};

use crate::backend::{streams, Rng, Tensor};
use crate::error::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Same label set, shifted inputs per task.
    NewInstance,
    /// Disjoint label subsets per task.
    NewClass,
}

/// One task's samples. `x` is `[N, D]`; `y` holds global labels and
/// `targets` the labels a model is trained against (within-task indices for
/// new-class tasks, global labels otherwise).
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDataset {
    pub task: usize,
    pub x: Tensor<f32>,
    pub y: Vec<usize>,
    pub targets: Vec<usize>,
    /// Classes present in this task, ascending.
    pub classes: Vec<usize>,
}

impl TaskDataset {
    pub fn new(task: usize, x: Tensor<f32>, y: Vec<usize>, mut classes: Vec<usize>, scenario: Scenario) -> Result<Self> {
        classes.sort_unstable();
        classes.dedup();
        ensure!(!y.is_empty(), Validation, "task {task} has no samples");
        ensure!(
            x.rows() == y.len(),
            Dimension,
            "task {task}: {} rows but {} labels",
            x.rows(),
            y.len()
        );
        let targets = y
            .iter()
            .map(|label| match scenario {
                Scenario::NewInstance => Ok(*label),
                Scenario::NewClass => classes
                    .binary_search(label)
                    .map_err(|_| Error::Validation(format!("label {label} not among task {task} classes {classes:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            task,
            x,
            y,
            targets,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.x.row(i)
    }

    /// Keeps the rows at `idx`, in that order.
    fn select(&self, idx: &[usize]) -> Self {
        Self {
            task: self.task,
            x: self.x.gather_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            classes: self.classes.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BenchmarkKind {
    SplitMnist,
    PermutedMnist,
    /// Task `t` is rotated by `(t - 1) · per_task_rotation` degrees.
    RotatedMnist { per_task_rotation: f64 },
    Synthetic(SyntheticSpec),
}

impl BenchmarkKind {
    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkKind::SplitMnist => "splitmnist",
            BenchmarkKind::PermutedMnist => "permutedmnist",
            BenchmarkKind::RotatedMnist { .. } => "rotatedmnist",
            BenchmarkKind::Synthetic(_) => "synthetic",
        }
    }

    pub fn scenario(&self) -> Scenario {
        match self {
            BenchmarkKind::SplitMnist => Scenario::NewClass,
            BenchmarkKind::PermutedMnist | BenchmarkKind::RotatedMnist { .. } => Scenario::NewInstance,
            BenchmarkKind::Synthetic(s) => s.scenario,
        }
    }

    pub fn is_mnist(&self) -> bool {
        !matches!(self, BenchmarkKind::Synthetic(_))
    }
}

pub const BENCHMARK_NAMES: [&str; 4] = ["splitmnist", "permutedmnist", "rotatedmnist", "synthetic"];

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSpec {
    pub kind: BenchmarkKind,
    pub num_tasks: usize,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    /// Keep this many seeded-uniform training samples per task.
    pub subset: Option<usize>,
    pub seed: u64,
}

impl BenchmarkSpec {
    pub fn new(kind: BenchmarkKind, num_tasks: usize, batch_size: usize) -> Self {
        Self {
            kind,
            num_tasks,
            batch_size,
            eval_batch_size: 1024,
            subset: None,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_tasks == 0 {
            return Err(Error::config("benchmark.num_tasks", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("benchmark.batch_size", "must be at least 1"));
        }
        if self.eval_batch_size == 0 {
            return Err(Error::config("benchmark.eval_batch_size", "must be at least 1"));
        }
        if self.subset == Some(0) {
            return Err(Error::config("benchmark.subset", "must be at least 1"));
        }
        if self.kind == BenchmarkKind::SplitMnist && 10 % self.num_tasks != 0 {
            return Err(Error::config(
                "benchmark.num_tasks",
                format!("splitmnist needs num_tasks dividing 10, got {}", self.num_tasks),
            ));
        }
        if let BenchmarkKind::Synthetic(s) = &self.kind {
            if s.num_tasks != self.num_tasks {
                return Err(Error::config("benchmark.num_tasks", "disagrees with the synthetic spec"));
            }
            s.validate()
                .map_err(|e| Error::config("benchmark", e.to_string()))?;
        }
        Ok(())
    }
}

/// Ordered tasks `1..=T` with train and validation sets.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub spec: BenchmarkSpec,
    pub train: BTreeMap<usize, TaskDataset>,
    pub val: BTreeMap<usize, TaskDataset>,
}

fn to_map(v: Vec<TaskDataset>) -> BTreeMap<usize, TaskDataset> {
    v.into_iter().map(|d| (d.task, d)).collect()
}

impl Benchmark {
    /// Builds an MNIST-derived benchmark from already loaded files.
    pub fn from_mnist(spec: BenchmarkSpec, source: &MnistSource) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::new(spec.seed, streams::DATA);
        let (train, val) = prepare_datasets(&spec, source, &mut rng)?;
        Self::assemble(spec, train, val, &mut rng)
    }

    pub fn synthetic(spec: BenchmarkSpec) -> Result<Self> {
        spec.validate()?;
        let BenchmarkKind::Synthetic(s) = &spec.kind else {
            return Err(Error::config("benchmark.name", "not a synthetic benchmark"));
        };
        let mut rng = Rng::new(spec.seed, streams::DATA);
        let (train, val) = synthetic::generate(s, &mut rng)?;
        Self::assemble(spec, to_map(train), to_map(val), &mut rng)
    }

    fn assemble(
        spec: BenchmarkSpec,
        mut train: BTreeMap<usize, TaskDataset>,
        val: BTreeMap<usize, TaskDataset>,
        rng: &mut Rng,
    ) -> Result<Self> {
        if let Some(n) = spec.subset {
            let sub_rng = rng.child(0x5B5E7);
            for (t, ds) in train.iter_mut() {
                if n < ds.len() {
                    let mut keep = sub_rng.child(*t as u64).sample_indices(ds.len(), n);
                    keep.sort_unstable();
                    *ds = ds.select(&keep);
                }
            }
        }
        let b = Self { spec, train, val };
        b.check_invariants()?;
        Ok(b)
    }

    fn check_invariants(&self) -> Result<()> {
        let keys: Vec<usize> = (1..=self.spec.num_tasks).collect();
        ensure!(
            self.train.keys().copied().eq(keys.iter().copied()) && self.val.keys().copied().eq(keys.iter().copied()),
            Validation,
            "task maps must have keys 1..={}",
            self.spec.num_tasks
        );
        if self.scenario() == Scenario::NewClass {
            for (i, a) in &self.train {
                for (j, b) in &self.train {
                    ensure!(
                        i == j || a.classes.iter().all(|c| !b.classes.contains(c)),
                        Validation,
                        "tasks {i} and {j} share classes"
                    );
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        self.spec.kind.name()
    }

    pub fn num_tasks(&self) -> usize {
        self.spec.num_tasks
    }

    pub fn scenario(&self) -> Scenario {
        self.spec.kind.scenario()
    }

    pub fn input_dim(&self) -> usize {
        self.train[&1].dim()
    }

    /// Total number of distinct classes across tasks.
    pub fn num_classes(&self) -> usize {
        match &self.spec.kind {
            BenchmarkKind::Synthetic(s) => s.num_classes,
            _ => 10,
        }
    }

    fn check_task(&self, task: usize) -> Result<()> {
        ensure!(
            (1..=self.num_tasks()).contains(&task),
            Range,
            "task {task} outside 1..={}",
            self.num_tasks()
        );
        Ok(())
    }

    pub fn train_set(&self, task: usize) -> Result<&TaskDataset> {
        self.check_task(task)?;
        Ok(&self.train[&task])
    }

    pub fn val_set(&self, task: usize) -> Result<&TaskDataset> {
        self.check_task(task)?;
        Ok(&self.val[&task])
    }

    /// Shuffled training batches for `task`; the order comes from `rng`.
    /// The last batch may be partial.
    pub fn train_loader<S: crate::Scalar>(&self, task: usize, rng: &mut Rng) -> Result<DataLoader<'_, S>> {
        let ds = self.train_set(task)?;
        let order = rng.permutation(ds.len());
        Ok(DataLoader::new(ds, order, self.spec.batch_size))
    }

    /// Unshuffled loaders for tasks `1..=task` at `eval_batch_size`.
    pub fn val_loaders_up_to<S: crate::Scalar>(&self, task: usize) -> Result<Vec<(usize, DataLoader<'_, S>)>> {
        self.check_task(task)?;
        Ok((1..=task)
            .map(|t| {
                let ds = &self.val[&t];
                (t, DataLoader::new(ds, (0..ds.len()).collect(), self.spec.eval_batch_size))
            })
            .collect())
    }
}

/// Builds the per-task train/validation maps for an MNIST benchmark.
/// The official test split serves as validation data, transformed exactly
/// like the task's training data.
pub fn prepare_datasets(
    spec: &BenchmarkSpec,
    source: &MnistSource,
    rng: &mut Rng,
) -> Result<(BTreeMap<usize, TaskDataset>, BTreeMap<usize, TaskDataset>)> {
    spec.validate()?;
    let side = source.train.rows;
    ensure!(
        source.train.cols == side && source.test.rows == side && source.test.cols == side,
        Validation,
        "MNIST images must be square and of equal size"
    );
    let dim = side * side;
    let mut train = BTreeMap::new();
    let mut val = BTreeMap::new();
    let scenario = spec.kind.scenario();
    for t in 1..=spec.num_tasks {
        let (classes, transform): (Vec<usize>, Box<dyn Fn(&[f32]) -> Vec<f32>>) = match &spec.kind {
            BenchmarkKind::SplitMnist => {
                let k = 10 / spec.num_tasks;
                (((t - 1) * k..t * k).collect(), Box::new(|img: &[f32]| img.to_vec()))
            }
            BenchmarkKind::PermutedMnist => {
                let perm = if t == 1 {
                    (0..dim).collect()
                } else {
                    rng.child(t as u64).permutation(dim)
                };
                (
                    (0..10).collect(),
                    Box::new(move |img: &[f32]| perm.iter().map(|&p| img[p]).collect()),
                )
            }
            BenchmarkKind::RotatedMnist { per_task_rotation } => {
                let angle = (t - 1) as f64 * per_task_rotation;
                (
                    (0..10).collect(),
                    Box::new(move |img: &[f32]| {
                        if angle == 0.0 {
                            img.to_vec()
                        } else {
                            rotate_image(img, side, angle)
                        }
                    }),
                )
            }
            BenchmarkKind::Synthetic(_) => {
                return Err(Error::config("benchmark.name", "synthetic benchmarks have no MNIST source"));
            }
        };
        let build = |split: &IdxSplit| -> Result<TaskDataset> {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for i in 0..split.len() {
                let label = split.labels[i] as usize;
                if classes.contains(&label) {
                    x.extend(transform(split.image(i)));
                    y.push(label);
                }
            }
            let n = y.len();
            TaskDataset::new(t, Tensor::new(vec![n, dim], x)?, y, classes.clone(), scenario)
        };
        train.insert(t, build(&source.train)?);
        val.insert(t, build(&source.test)?);
    }
    Ok((train, val))
}
