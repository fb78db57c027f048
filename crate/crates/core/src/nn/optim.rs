use super::ParamVector;
use crate::backend::Scalar;
use crate::error::{ensure, Result};

/// SGD with heavy-ball momentum and per-task learning-rate decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd<S> {
    pub base_lr: f64,
    pub momentum: f64,
    pub lr_decay: f64,
    current_lr: f64,
    velocity: Option<ParamVector<S>>,
}

/// `v ← momentum·v + g; θ ← θ − lr·v`
pub fn sgd_step<S: Scalar>(lr: S, momentum: S, theta: &mut [S], g: &[S], velocity: &mut [S]) -> Result<()> {
    ensure!(
        theta.len() == g.len() && g.len() == velocity.len(),
        Validation,
        "sgd_step: lengths θ={} g={} v={}",
        theta.len(),
        g.len(),
        velocity.len()
    );
    for ((t, &gi), v) in theta.iter_mut().zip(g).zip(velocity.iter_mut()) {
        *v = momentum * *v + gi;
        *t -= lr * *v;
    }
    Ok(())
}

impl<S: Scalar> Sgd<S> {
    pub fn new(lr: f64, momentum: f64, lr_decay: f64) -> Result<Self> {
        ensure!(lr > 0.0 && lr.is_finite(), Validation, "learning rate {lr} must be positive");
        ensure!(
            (0.0..1.0).contains(&momentum),
            Validation,
            "momentum {momentum} outside [0, 1)"
        );
        ensure!(
            lr_decay > 0.0 && lr_decay <= 1.0,
            Validation,
            "lr_decay {lr_decay} outside (0, 1]"
        );
        Ok(Self {
            base_lr: lr,
            momentum,
            lr_decay,
            current_lr: lr,
            velocity: None,
        })
    }

    pub fn current_lr(&self) -> f64 {
        self.current_lr
    }

    /// `current_lr = base_lr · lr_decay^(task − 1)`; `task` is 1-based.
    pub fn decay_for_task(&mut self, task: usize) {
        let exponent = task.max(1) - 1;
        self.current_lr = self.base_lr * self.lr_decay.powi(exponent as i32);
    }

    /// Drops the momentum buffer.
    pub fn reset_state(&mut self) {
        self.velocity = None;
    }

    pub fn velocity(&self) -> Option<&ParamVector<S>> {
        self.velocity.as_ref()
    }

    /// Updates `theta` in place.
    pub fn step(&mut self, theta: &mut ParamVector<S>, g: &ParamVector<S>) -> Result<()> {
        theta.check_len(g, "sgd step")?;
        let v = self
            .velocity
            .get_or_insert_with(|| ParamVector::zeros(theta.len()));
        theta.check_len(v, "sgd velocity")?;
        sgd_step(
            S::of(self.current_lr),
            S::of(self.momentum),
            theta.as_mut_slice(),
            g.as_slice(),
            v.as_mut_slice(),
        )
    }
}
