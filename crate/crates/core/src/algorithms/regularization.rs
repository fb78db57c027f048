use std::any::Any;
use std::marker::PhantomData;

use super::core::TrainerCore;
use super::objective::{cross_entropy, Objective};
use super::Algorithm;
use crate::backend::{softmax_cross_entropy, Backend, Scalar};
use crate::benchmarks::Batch;
use crate::error::{ensure, Result};
use crate::events::EventKind;
use crate::nn::{Mlp, Mode, ParamVector};

/// Default number of samples used to estimate parameter importance.
pub const IMPORTANCE_BUDGET: usize = 1024;

/// Default SI damping.
pub const SI_DAMPING: f64 = 0.1;

/// `λ Σ Ω_i (θ_i − θ_old,i)²` and its gradient `2λ Ω (θ − θ_old)`.
pub fn quadratic_penalty<S: Scalar>(
    theta: &ParamVector<S>,
    theta_old: &ParamVector<S>,
    omega: &ParamVector<S>,
    lambda: f64,
) -> Result<(f64, ParamVector<S>)> {
    theta.check_len(theta_old, "penalty anchor")?;
    theta.check_len(omega, "penalty importance")?;
    let mut value = 0.0;
    let two_lambda = S::of(2.0 * lambda);
    let grad = theta
        .as_slice()
        .iter()
        .zip(theta_old.as_slice())
        .zip(omega.as_slice())
        .map(|((&t, &o), &w)| {
            let d = t - o;
            value += w.as_f64() * d.as_f64() * d.as_f64();
            two_lambda * w * d
        })
        .collect();
    Ok((lambda * value, ParamVector::from_vec(grad)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImportanceMethod {
    /// Empirical diagonal Fisher: mean of squared per-sample loss gradients.
    Fisher,
    /// Mean absolute per-sample gradient of the squared output norm.
    Mas,
}

/// Per-sample importance averaged over every row of `data` (eval mode).
pub fn parameter_importance<B: Backend>(
    method: ImportanceMethod,
    model: &Mlp<B>,
    data: &Batch<B::Elem>,
) -> Result<ParamVector<B::Elem>> {
    ensure!(!data.is_empty(), Validation, "importance needs at least one sample");
    let mut acc = vec![0.0f64; model.num_params()];
    for row in 0..data.len() {
        let one = data.select(&[row]);
        let (logits, cache) = model.forward(&one.x, &one.t, Mode::Eval, &mut crate::Rng::new(0, 0))?;
        let grad_logits = match method {
            ImportanceMethod::Fisher => softmax_cross_entropy::<B>(&logits, &one.y)?.1,
            ImportanceMethod::Mas => logits.scale(B::Elem::of(2.0)),
        };
        let g = model.backward(&cache, &grad_logits, None)?;
        for (a, v) in acc.iter_mut().zip(g.as_slice()) {
            let v = v.as_f64();
            *a += match method {
                ImportanceMethod::Fisher => v * v,
                ImportanceMethod::Mas => v.abs(),
            };
        }
    }
    let n = data.len() as f64;
    Ok(ParamVector::from_f64(&acc.iter().map(|a| a / n).collect::<Vec<_>>()))
}

/// Online path integral of synaptic intelligence.
#[derive(Clone, Debug, PartialEq)]
pub struct SiState<S> {
    pub omega: ParamVector<S>,
    pub theta_start: ParamVector<S>,
    pub damping: f64,
}

impl<S: Scalar> SiState<S> {
    pub fn new(theta_start: ParamVector<S>, damping: f64) -> Self {
        Self {
            omega: ParamVector::zeros(theta_start.len()),
            theta_start,
            damping,
        }
    }

    /// `ω_i −= g_i · Δθ_i`.
    pub fn accumulate(&mut self, grad: &ParamVector<S>, delta: &ParamVector<S>) -> Result<()> {
        self.omega.check_len(grad, "si gradient")?;
        self.omega.check_len(delta, "si step")?;
        for ((w, &g), &d) in self
            .omega
            .as_mut_slice()
            .iter_mut()
            .zip(grad.as_slice())
            .zip(delta.as_slice())
        {
            *w -= g * d;
        }
        Ok(())
    }

    /// Returns `ω_i / ((θ_end,i − θ_start,i)² + ξ)` clamped at zero, then
    /// restarts the integral at `theta_end`.
    pub fn consolidate(&mut self, theta_end: &ParamVector<S>) -> Result<ParamVector<S>> {
        self.omega.check_len(theta_end, "si consolidation")?;
        let xi = self.damping;
        let contrib: Vec<f64> = self
            .omega
            .as_slice()
            .iter()
            .zip(theta_end.as_slice().iter().zip(self.theta_start.as_slice()))
            .map(|(&w, (&end, &start))| {
                let d = end.as_f64() - start.as_f64();
                (w.as_f64() / (d * d + xi)).max(0.0)
            })
            .collect();
        self.omega = ParamVector::zeros(theta_end.len());
        self.theta_start = theta_end.clone();
        Ok(ParamVector::from_f64(&contrib))
    }
}

/// Source of the per-task importance added to Ω at each task boundary.
pub trait ImportanceEstimator<B: Backend> {
    fn name(&self) -> &'static str;

    fn task_start(&mut self, _core: &TrainerCore<B>) -> Result<()> {
        Ok(())
    }

    fn before_step(&mut self, _core: &TrainerCore<B>) -> Result<()> {
        Ok(())
    }

    fn after_step(&mut self, _core: &TrainerCore<B>) -> Result<()> {
        Ok(())
    }

    fn calculate_parameter_importance(&mut self, core: &mut TrainerCore<B>) -> Result<ParamVector<B::Elem>>;
}

/// Importance from data of the task just finished.
pub struct DataImportance {
    pub method: ImportanceMethod,
    pub budget: usize,
}

impl<B: Backend> ImportanceEstimator<B> for DataImportance {
    fn name(&self) -> &'static str {
        match self.method {
            ImportanceMethod::Fisher => "ewc",
            ImportanceMethod::Mas => "mas",
        }
    }

    fn calculate_parameter_importance(&mut self, core: &mut TrainerCore<B>) -> Result<ParamVector<B::Elem>> {
        let ds = core.benchmark.train_set(core.task)?;
        let n = ds.len().min(self.budget);
        let mut rows = core.rngs.importance.sample_indices(ds.len(), n);
        rows.sort_unstable();
        let data = Batch::from_rows(ds, &rows);
        parameter_importance(self.method, &core.model, &data)
    }
}

pub struct SiImportance<S> {
    damping: f64,
    state: Option<SiState<S>>,
    before: Option<ParamVector<S>>,
}

impl<B: Backend> ImportanceEstimator<B> for SiImportance<B::Elem> {
    fn name(&self) -> &'static str {
        "si"
    }

    fn task_start(&mut self, core: &TrainerCore<B>) -> Result<()> {
        // ω restarts at each task; θ_start follows the model
        self.state = Some(SiState::new(core.model.snapshot(), self.damping));
        Ok(())
    }

    fn before_step(&mut self, core: &TrainerCore<B>) -> Result<()> {
        self.before = Some(core.model.snapshot());
        Ok(())
    }

    fn after_step(&mut self, core: &TrainerCore<B>) -> Result<()> {
        let (Some(state), Some(before), Some(g)) = (&mut self.state, self.before.take(), &core.loss_grads) else {
            return Ok(());
        };
        let delta = core.model.params().sub(&before)?;
        state.accumulate(g, &delta)
    }

    fn calculate_parameter_importance(&mut self, core: &mut TrainerCore<B>) -> Result<ParamVector<B::Elem>> {
        match &mut self.state {
            Some(state) => state.consolidate(core.model.params()),
            None => Ok(ParamVector::zeros(core.model.num_params())),
        }
    }
}

/// Quadratic regularization towards the parameters of the last task
/// boundary, weighted by an accumulated importance Ω.
pub struct Regularized<B: Backend, I> {
    lambda: f64,
    theta_old: Option<ParamVector<B::Elem>>,
    omega: Option<ParamVector<B::Elem>>,
    estimator: I,
    _backend: PhantomData<B>,
}

pub type Ewc<B> = Regularized<B, DataImportance>;
pub type Mas<B> = Regularized<B, DataImportance>;
pub type Si<B> = Regularized<B, SiImportance<<B as Backend>::Elem>>;

impl<B: Backend, I: ImportanceEstimator<B>> Regularized<B, I> {
    pub fn with_estimator(lambda: f64, estimator: I) -> Result<Self> {
        ensure!(
            lambda >= 0.0 && lambda.is_finite(),
            Validation,
            "regularization strength {lambda} must be finite and non-negative"
        );
        Ok(Self {
            lambda,
            theta_old: None,
            omega: None,
            estimator,
            _backend: PhantomData,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn omega(&self) -> Option<&ParamVector<B::Elem>> {
        self.omega.as_ref()
    }

    pub fn theta_old(&self) -> Option<&ParamVector<B::Elem>> {
        self.theta_old.as_ref()
    }
}

impl<B: Backend> Regularized<B, DataImportance> {
    pub fn ewc(lambda: f64) -> Result<Self> {
        Self::with_estimator(
            lambda,
            DataImportance {
                method: ImportanceMethod::Fisher,
                budget: IMPORTANCE_BUDGET,
            },
        )
    }

    pub fn mas(lambda: f64) -> Result<Self> {
        Self::with_estimator(
            lambda,
            DataImportance {
                method: ImportanceMethod::Mas,
                budget: IMPORTANCE_BUDGET,
            },
        )
    }

    pub fn with_budget(mut self, budget: usize) -> Result<Self> {
        ensure!(budget > 0, Validation, "importance sample budget must be positive");
        self.estimator.budget = budget;
        Ok(self)
    }
}

impl<B: Backend> Regularized<B, SiImportance<B::Elem>> {
    pub fn si(lambda: f64, damping: f64) -> Result<Self> {
        ensure!(damping > 0.0, Validation, "si damping {damping} must be positive");
        Self::with_estimator(
            lambda,
            SiImportance {
                damping,
                state: None,
                before: None,
            },
        )
    }
}

impl<B: Backend, I: ImportanceEstimator<B> + 'static> Algorithm<B> for Regularized<B, I> {
    fn name(&self) -> &'static str {
        self.estimator.name()
    }

    fn on_before(&mut self, kind: EventKind, core: &mut TrainerCore<B>) -> Result<()> {
        match kind {
            EventKind::TaskFit => {
                let n = core.model.num_params();
                self.omega.get_or_insert_with(|| ParamVector::zeros(n));
                self.theta_old.get_or_insert_with(|| ParamVector::zeros(n));
                self.estimator.task_start(core)
            }
            EventKind::OptimizerStep => self.estimator.before_step(core),
            _ => Ok(()),
        }
    }

    fn on_after(&mut self, kind: EventKind, core: &mut TrainerCore<B>) -> Result<()> {
        match kind {
            EventKind::OptimizerStep => self.estimator.after_step(core),
            EventKind::TaskFit => {
                let contrib = self.estimator.calculate_parameter_importance(core)?;
                ensure!(
                    contrib.as_slice().iter().all(|v| v.as_f64() >= 0.0 && v.as_f64().is_finite()),
                    Validation,
                    "{} importance must be finite and non-negative",
                    self.estimator.name()
                );
                let omega = self
                    .omega
                    .get_or_insert_with(|| ParamVector::zeros(contrib.len()));
                omega.add_assign(&contrib)?;
                self.theta_old = Some(core.model.snapshot());
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn loss(&mut self, core: &mut TrainerCore<B>, batch: &Batch<B::Elem>) -> Result<Objective<B::Elem>> {
        let mut obj = cross_entropy(&core.model, batch, Mode::Train, &mut core.rngs.dropout)?;
        if self.lambda != 0.0 {
            if let (Some(old), Some(omega)) = (&self.theta_old, &self.omega) {
                let (value, grad) = quadratic_penalty(core.model.params(), old, omega, self.lambda)?;
                obj.loss += value;
                obj.add_param_grad(grad)?;
            }
        }
        Ok(obj)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
