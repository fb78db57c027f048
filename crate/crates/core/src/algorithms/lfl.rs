use std::any::Any;

use super::core::TrainerCore;
use super::objective::{cross_entropy, Objective};
use super::Algorithm;
use crate::backend::{Backend, Scalar, Tensor};
use crate::benchmarks::Batch;
use crate::error::{ensure, Result};
use crate::events::EventKind;
use crate::nn::{Mlp, Mode};

/// `λ · mean_b ‖φ(x_b) − φ_old(x_b)‖²` and its gradient with respect to
/// `φ`, where `φ` are penultimate activations.
pub fn feature_drift_penalty<S: Scalar>(
    features: &Tensor<S>,
    old_features: &Tensor<S>,
    lambda: f64,
) -> Result<(f64, Tensor<S>)> {
    ensure!(
        features.shape() == old_features.shape(),
        Dimension,
        "feature shapes {:?} and {:?} differ",
        features.shape(),
        old_features.shape()
    );
    let n = features.rows().max(1) as f64;
    let diff = features.sub(old_features)?;
    let sq: f64 = diff.data().iter().map(|d| d.as_f64() * d.as_f64()).sum();
    Ok((lambda * sq / n, diff.scale(S::of(2.0 * lambda / n))))
}

/// Less-forgetting learning: keeps current-task features close to those of
/// the model frozen at the last task boundary.
pub struct Lfl<B: Backend> {
    lambda: f64,
    frozen: Option<Mlp<B>>,
}

impl<B: Backend> Lfl<B> {
    pub fn new(lambda: f64) -> Result<Self> {
        ensure!(
            lambda >= 0.0 && lambda.is_finite(),
            Validation,
            "lfl_lambda {lambda} must be finite and non-negative"
        );
        Ok(Self { lambda, frozen: None })
    }

    pub fn frozen(&self) -> Option<&Mlp<B>> {
        self.frozen.as_ref()
    }
}

impl<B: Backend> Algorithm<B> for Lfl<B> {
    fn name(&self) -> &'static str {
        "lfl"
    }

    fn on_after(&mut self, kind: EventKind, core: &mut TrainerCore<B>) -> Result<()> {
        if kind == EventKind::TaskFit {
            self.frozen = Some(core.model.clone());
        }
        Ok(())
    }

    fn loss(&mut self, core: &mut TrainerCore<B>, batch: &Batch<B::Elem>) -> Result<Objective<B::Elem>> {
        let mut obj = cross_entropy(&core.model, batch, Mode::Train, &mut core.rngs.dropout)?;
        let Some(old) = self.frozen.as_ref().filter(|_| self.lambda != 0.0) else {
            return Ok(obj);
        };
        let total = batch.len() as f64;
        let mut unused = crate::Rng::new(0, 0);
        for term in &mut obj.terms {
            let sub;
            let rows = match &term.rows {
                Some(rows) => {
                    sub = batch.select(rows);
                    &sub
                }
                None => batch,
            };
            let (_, old_cache) = old.forward(&rows.x, &rows.t, Mode::Eval, &mut unused)?;
            // rescale so the mean runs over the whole batch
            let share = rows.len() as f64 / total;
            let (value, grad) = feature_drift_penalty(term.cache.features(), old_cache.features(), self.lambda * share)?;
            obj.loss += value;
            term.grad_features = Some(grad);
        }
        Ok(obj)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpConfig;
    use crate::Reference;

    #[test]
    fn identical_features_cost_nothing() {
        let f = Tensor::<f64>::from_rows(&[vec![1.0, 2.0], vec![0.5, 0.0]]).unwrap();
        let (v, g) = feature_drift_penalty(&f, &f, 3.0).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn one_hidden_unit_hand_value() {
        // φ = relu(w x + b) with one hidden unit
        let cfg = MlpConfig::new(1, vec![1], 2);
        let mut new = Mlp::<Reference>::zeroed(cfg.clone()).unwrap();
        let mut old = Mlp::<Reference>::zeroed(cfg).unwrap();
        new.params_mut().as_mut_slice()[..2].copy_from_slice(&[2.0, 0.5]);
        old.params_mut().as_mut_slice()[..2].copy_from_slice(&[1.0, 0.0]);
        let x = Tensor::<f64>::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let mut rng = crate::Rng::new(0, 0);
        let (_, a) = new.forward(&x, &[1, 1], Mode::Eval, &mut rng).unwrap();
        let (_, b) = old.forward(&x, &[1, 1], Mode::Eval, &mut rng).unwrap();
        // φ_new = [2.5, 6.5], φ_old = [1, 3]
        let want = 0.5 * ((2.5f64 - 1.0).powi(2) + (6.5f64 - 3.0).powi(2)) / 2.0;
        let (v, _) = feature_drift_penalty(a.features(), b.features(), 0.5).unwrap();
        assert!((v - want).abs() < 1e-12);
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let f = Tensor::<f64>::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.7], vec![0.0, 1.1]]).unwrap();
        let o = Tensor::<f64>::from_rows(&[vec![0.1, 0.0], vec![1.0, 0.7], vec![-0.5, 1.0]]).unwrap();
        let (_, g) = feature_drift_penalty(&f, &o, 0.8).unwrap();
        for i in 0..f.len() {
            let mut a = f.clone();
            a.data_mut()[i] += 1e-6;
            let mut b = f.clone();
            b.data_mut()[i] -= 1e-6;
            let fd = (feature_drift_penalty(&a, &o, 0.8).unwrap().0 - feature_drift_penalty(&b, &o, 0.8).unwrap().0)
                / 2e-6;
            assert!((fd - g.data()[i]).abs() < 1e-7);
        }
    }
}
