//! Gaussian-cluster benchmark generator for fast, data-free experiments.

use super::{Scenario, TaskDataset};
use crate::backend::{Rng, Tensor};
use crate::error::{ensure, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub input_dim: usize,
    pub num_classes: usize,
    pub num_tasks: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub scenario: Scenario,
    /// Distance between any two class means, in units of `noise`.
    pub separation: f64,
    /// Per-coordinate standard deviation of samples around their mean.
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            input_dim: 20,
            num_classes: 4,
            num_tasks: 2,
            train_per_class: 100,
            val_per_class: 50,
            scenario: Scenario::NewInstance,
            separation: 6.0,
            noise: 1.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.input_dim >= self.num_classes,
            Validation,
            "synthetic input_dim {} must be at least num_classes {}",
            self.input_dim,
            self.num_classes
        );
        ensure!(self.num_classes >= 2, Validation, "synthetic benchmark needs at least 2 classes");
        ensure!(self.num_tasks >= 1, Validation, "num_tasks must be at least 1");
        ensure!(
            self.train_per_class > 0 && self.val_per_class > 0,
            Validation,
            "samples per class must be positive"
        );
        ensure!(
            self.separation > 0.0 && self.noise > 0.0,
            Validation,
            "separation and noise must be positive"
        );
        if self.scenario == Scenario::NewClass {
            ensure!(
                self.num_classes % self.num_tasks == 0,
                Validation,
                "{} classes cannot be split evenly into {} tasks",
                self.num_classes,
                self.num_tasks
            );
        }
        Ok(())
    }
}

/// Haar-ish random orthogonal matrix via Gram-Schmidt on Gaussian columns.
/// Stored row-major; `q[i * n + j]`.
pub fn random_orthogonal(n: usize, rng: &mut Rng) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        for c in &cols {
            let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= d * ci;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    let mut q = vec![0.0; n * n];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            q[i * n + j] = c[i];
        }
    }
    q
}

fn mat_vec(q: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| (0..n).map(|j| q[i * n + j] * v[j]).sum()).collect()
}

/// Builds per-task train/val sets. Class means sit on a scaled, randomly
/// rotated simplex of basis vectors (pairwise distance `separation · noise`).
/// New-instance tasks rotate that arrangement by a task-specific orthogonal
/// map (identity for task 1); new-class tasks take contiguous class blocks.
pub fn generate(spec: &SyntheticSpec, rng: &mut Rng) -> Result<(Vec<TaskDataset>, Vec<TaskDataset>)> {
    spec.validate()?;
    let d = spec.input_dim;
    let radius = spec.separation * spec.noise / std::f64::consts::SQRT_2;
    let base = random_orthogonal(d, &mut rng.child(0));
    let means: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|c| {
            let mut e = vec![0.0; d];
            e[c] = radius;
            mat_vec(&base, &e)
        })
        .collect();
    let per_task = spec.num_classes / spec.num_tasks;
    let mut train = Vec::new();
    let mut val = Vec::new();
    for t in 1..=spec.num_tasks {
        let mut task_rng = rng.child(t as u64);
        let (classes, rotation): (Vec<usize>, Option<Vec<f64>>) = match spec.scenario {
            Scenario::NewInstance => {
                let rot = (t > 1).then(|| random_orthogonal(d, &mut task_rng));
                ((0..spec.num_classes).collect(), rot)
            }
            Scenario::NewClass => (((t - 1) * per_task..t * per_task).collect(), None),
        };
        let task_means: Vec<Vec<f64>> = classes
            .iter()
            .map(|&c| match &rotation {
                Some(q) => mat_vec(q, &means[c]),
                None => means[c].clone(),
            })
            .collect();
        let draw = |per_class: usize, rng: &mut Rng| {
            let mut x = Vec::with_capacity(per_class * classes.len() * d);
            let mut y = Vec::new();
            for _ in 0..per_class {
                for (k, &c) in classes.iter().enumerate() {
                    x.extend(task_means[k].iter().map(|m| (m + spec.noise * rng.normal()) as f32));
                    y.push(c);
                }
            }
            (x, y)
        };
        let (xt, yt) = draw(spec.train_per_class, &mut task_rng);
        let (xv, yv) = draw(spec.val_per_class, &mut task_rng);
        let n_train = yt.len();
        let n_val = yv.len();
        train.push(TaskDataset::new(
            t,
            Tensor::new(vec![n_train, d], xt)?,
            yt,
            classes.clone(),
            spec.scenario,
        )?);
        val.push(TaskDataset::new(
            t,
            Tensor::new(vec![n_val, d], xv)?,
            yv,
            classes,
            spec.scenario,
        )?);
    }
    Ok((train, val))
}
