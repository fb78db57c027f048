use crate::backend::{argmax_rows, softmax_cross_entropy, Backend, Rng, Scalar, Tensor};
use crate::benchmarks::Batch;
use crate::error::Result;
use crate::nn::{ForwardCache, Mlp, Mode, ParamVector};

/// One backward pass worth of upstream gradients.
#[derive(Clone, Debug)]
pub struct BackpropTerm<S> {
    pub cache: ForwardCache<S>,
    pub grad_logits: Tensor<S>,
    pub grad_features: Option<Tensor<S>>,
    /// Batch rows covered by this term; `None` for the whole batch.
    pub rows: Option<Vec<usize>>,
}

/// A scalar training loss and how to differentiate it.
#[derive(Clone, Debug)]
pub struct Objective<S> {
    pub loss: f64,
    pub terms: Vec<BackpropTerm<S>>,
    /// Gradient contributions defined directly in parameter space.
    pub param_grad: Option<ParamVector<S>>,
    /// Predicted targets for every row of the batch the objective was built on.
    pub predictions: Vec<usize>,
}

impl<S: Scalar> Objective<S> {
    /// Appends the terms of `other`, adding its loss.
    pub fn absorb(&mut self, other: Objective<S>) -> Result<()> {
        self.loss += other.loss;
        self.terms.extend(other.terms);
        if let Some(g) = other.param_grad {
            self.add_param_grad(g)?;
        }
        Ok(())
    }

    pub fn add_param_grad(&mut self, g: ParamVector<S>) -> Result<()> {
        match &mut self.param_grad {
            Some(acc) => acc.add_assign(&g),
            None => {
                self.param_grad = Some(g);
                Ok(())
            }
        }
    }

    /// Scales the loss and every upstream gradient by `k`.
    pub fn scaled(mut self, k: f64) -> Self {
        let ks = S::of(k);
        self.loss *= k;
        for term in &mut self.terms {
            term.grad_logits = term.grad_logits.scale(ks);
            term.grad_features = term.grad_features.take().map(|g| g.scale(ks));
        }
        if let Some(g) = &mut self.param_grad {
            g.scale(ks);
        }
        self
    }
}

/// Output of one forward pass over a group of batch rows sharing a head.
pub struct ForwardGroup<S> {
    /// Rows of the batch in this group; `None` for the whole batch.
    pub rows: Option<Vec<usize>>,
    pub logits: Tensor<S>,
    pub cache: ForwardCache<S>,
}

impl<S: Scalar> ForwardGroup<S> {
    pub fn len(&self) -> usize {
        self.logits.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs the model over `batch`, one pass per task present when heads are
/// per task, otherwise one pass over the whole batch.
pub fn forward_groups<B: Backend>(
    model: &Mlp<B>,
    batch: &Batch<B::Elem>,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Vec<ForwardGroup<B::Elem>>> {
    let groups = if model.config().num_heads() > 1 {
        batch.task_groups()
    } else {
        Vec::new()
    };
    if groups.len() <= 1 {
        let (logits, cache) = model.forward(&batch.x, &batch.t, mode, rng)?;
        return Ok(vec![ForwardGroup {
            rows: None,
            logits,
            cache,
        }]);
    }
    groups
        .into_iter()
        .map(|(_, rows)| {
            let sub = batch.select(&rows);
            let (logits, cache) = model.forward(&sub.x, &sub.t, mode, rng)?;
            Ok(ForwardGroup {
                rows: Some(rows),
                logits,
                cache,
            })
        })
        .collect()
}

/// Picks `values[i]` for every row of a group.
pub(crate) fn group_values<'a, T>(rows: &Option<Vec<usize>>, values: &'a [T]) -> Vec<&'a T> {
    match rows {
        Some(rows) => rows.iter().map(|&r| &values[r]).collect(),
        None => values.iter().collect(),
    }
}

/// Mean cross-entropy over `batch`. With per-task heads each group's share
/// is weighted by its row count.
pub fn cross_entropy<B: Backend>(
    model: &Mlp<B>,
    batch: &Batch<B::Elem>,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Objective<B::Elem>> {
    let groups = forward_groups(model, batch, mode, rng)?;
    let n = batch.len() as f64;
    let mut predictions = vec![0; batch.len()];
    let mut loss = 0.0;
    let mut terms = Vec::with_capacity(groups.len());
    for group in groups {
        let targets: Vec<usize> = group_values(&group.rows, &batch.y).into_iter().copied().collect();
        let (l, mut grad_logits) = softmax_cross_entropy::<B>(&group.logits, &targets)?;
        let preds = argmax_rows(&group.logits);
        match &group.rows {
            None => {
                loss = l.as_f64();
                predictions = preds;
            }
            Some(rows) => {
                let w = rows.len() as f64 / n;
                loss += w * l.as_f64();
                grad_logits = grad_logits.scale(B::Elem::of(w));
                for (r, p) in rows.iter().zip(preds) {
                    predictions[*r] = p;
                }
            }
        }
        terms.push(BackpropTerm {
            cache: group.cache,
            grad_logits,
            grad_features: None,
            rows: group.rows,
        });
    }
    Ok(Objective {
        loss,
        terms,
        param_grad: None,
        predictions,
    })
}

/// Sums the parameter gradients of every term, then adds `param_grad`.
pub fn objective_gradient<B: Backend>(
    model: &Mlp<B>,
    terms: &[BackpropTerm<B::Elem>],
    param_grad: Option<&ParamVector<B::Elem>>,
) -> Result<ParamVector<B::Elem>> {
    let mut total: Option<ParamVector<B::Elem>> = None;
    for term in terms {
        let g = model.backward(&term.cache, &term.grad_logits, term.grad_features.as_ref())?;
        match &mut total {
            Some(acc) => acc.add_assign(&g)?,
            None => total = Some(g),
        }
    }
    let mut total = total.unwrap_or_else(|| ParamVector::zeros(model.num_params()));
    if let Some(pg) = param_grad {
        total.add_assign(pg)?;
    }
    Ok(total)
}

/// Cross-entropy value and gradient at the model's current parameters.
pub fn cross_entropy_gradient<B: Backend>(
    model: &Mlp<B>,
    batch: &Batch<B::Elem>,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(f64, ParamVector<B::Elem>)> {
    let obj = cross_entropy(model, batch, mode, rng)?;
    let g = objective_gradient(model, &obj.terms, None)?;
    Ok((obj.loss, g))
}
