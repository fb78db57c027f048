use std::marker::PhantomData;
use std::ops::Range;

use num_traits::Zero;

use super::ParamVector;
use crate::backend::{streams, Backend, Rng, Scalar, Tensor};
use crate::error::{ensure, Error, Result};

/// Output head arrangement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadLayout {
    /// One head over all classes, shared by every task.
    Shared,
    /// One head per task, each over `num_classes / num_tasks` outputs.
    PerTask { num_tasks: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    /// Hidden layer widths; empty gives a linear model.
    pub widths: Vec<usize>,
    /// Total classes across all heads.
    pub num_classes: usize,
    pub heads: HeadLayout,
    /// Dropout after each hidden activation, `p ∈ [0, 1)`.
    pub dropout: f64,
}

impl MlpConfig {
    pub fn new(input_dim: usize, widths: Vec<usize>, num_classes: usize) -> Self {
        Self {
            input_dim,
            widths,
            num_classes,
            heads: HeadLayout::Shared,
            dropout: 0.0,
        }
    }

    pub fn with_heads(mut self, heads: HeadLayout) -> Self {
        self.heads = heads;
        self
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout = p;
        self
    }

    pub fn num_heads(&self) -> usize {
        match self.heads {
            HeadLayout::Shared => 1,
            HeadLayout::PerTask { num_tasks } => num_tasks,
        }
    }

    /// Outputs of a single head.
    pub fn head_outputs(&self) -> usize {
        self.num_classes / self.num_heads()
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.input_dim > 0, Validation, "input_dim must be positive");
        ensure!(self.num_classes > 0, Validation, "num_classes must be positive");
        ensure!(
            self.widths.iter().all(|&w| w > 0),
            Validation,
            "hidden widths must be positive: {:?}",
            self.widths
        );
        ensure!(
            (0.0..1.0).contains(&self.dropout),
            Validation,
            "dropout {} outside [0, 1)",
            self.dropout
        );
        let heads = self.num_heads();
        ensure!(
            heads > 0 && self.num_classes % heads == 0,
            Validation,
            "{} classes cannot be split over {} heads",
            self.num_classes,
            heads
        );
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
struct LayerSpan {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
}

impl LayerSpan {
    fn end(&self) -> usize {
        self.bias + self.fan_out
    }
}

/// Activations retained by [`Mlp::forward`] for the matching backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<S> {
    version: u64,
    head: usize,
    /// Input to each hidden layer, then the input to the head.
    inputs: Vec<Tensor<S>>,
    /// Hidden pre-activations.
    pre: Vec<Tensor<S>>,
    /// Inverted-dropout multipliers per hidden layer (train mode, `p > 0`).
    masks: Vec<Option<Tensor<S>>>,
    features: Tensor<S>,
}

impl<S: Scalar> ForwardCache<S> {
    /// Penultimate activations (last hidden ReLU output, before dropout);
    /// the input itself for a model without hidden layers.
    pub fn features(&self) -> &Tensor<S> {
        &self.features
    }

    pub fn head(&self) -> usize {
        self.head
    }

    pub fn batch_size(&self) -> usize {
        self.features.rows()
    }
}

/// Multi-layer perceptron with ReLU activations, optional dropout and
/// task-selected output heads. Parameters live in one flat vector.
#[derive(Clone, Debug)]
pub struct Mlp<B: Backend> {
    config: MlpConfig,
    hidden: Vec<LayerSpan>,
    heads: Vec<LayerSpan>,
    params: ParamVector<B::Elem>,
    version: u64,
    _backend: PhantomData<B>,
}

impl<B: Backend> Mlp<B> {
    /// Kaiming-uniform weights (`±sqrt(6 / fan_in)`), zero biases, drawn
    /// layer by layer from the `INIT` stream of `seed`.
    pub fn new(config: MlpConfig, seed: u64) -> Result<Self> {
        Self::with_rng(config, &mut Rng::new(seed, streams::INIT))
    }

    pub fn with_rng(config: MlpConfig, rng: &mut Rng) -> Result<Self> {
        let mut model = Self::zeroed(config)?;
        let spans: Vec<LayerSpan> = model.hidden.iter().chain(&model.heads).cloned().collect();
        for span in spans {
            let bound = (6.0 / span.fan_in as f64).sqrt();
            for w in &mut model.params.as_mut_slice()[span.weight..span.bias] {
                *w = B::Elem::of(rng.uniform_range(-bound, bound));
            }
        }
        Ok(model)
    }

    /// Model with every parameter zero.
    pub fn zeroed(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut offset = 0;
        let mut span = |fan_in: usize, fan_out: usize| {
            let s = LayerSpan {
                fan_in,
                fan_out,
                weight: offset,
                bias: offset + fan_in * fan_out,
            };
            offset = s.end();
            s
        };
        let mut hidden = Vec::new();
        let mut prev = config.input_dim;
        for &w in &config.widths {
            hidden.push(span(prev, w));
            prev = w;
        }
        let heads = (0..config.num_heads())
            .map(|_| span(prev, config.head_outputs()))
            .collect();
        Ok(Self {
            config,
            hidden,
            heads,
            params: ParamVector::zeros(offset),
            version: 0,
            _backend: PhantomData,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &ParamVector<B::Elem> {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut ParamVector<B::Elem> {
        self.version += 1;
        &mut self.params
    }

    /// Copy of the current parameters.
    pub fn snapshot(&self) -> ParamVector<B::Elem> {
        self.params.clone()
    }

    pub fn restore(&mut self, snapshot: &ParamVector<B::Elem>) -> Result<()> {
        ensure!(
            snapshot.len() == self.params.len(),
            Validation,
            "restore: snapshot has {} parameters, model has {}",
            snapshot.len(),
            self.params.len()
        );
        self.params_mut().as_mut_slice().copy_from_slice(snapshot.as_slice());
        Ok(())
    }

    /// Parameter index range owned by output head `head` (0-based).
    pub fn head_param_range(&self, head: usize) -> Range<usize> {
        let s = &self.heads[head];
        s.weight..s.end()
    }

    /// Index range of all hidden-layer parameters.
    pub fn hidden_param_range(&self) -> Range<usize> {
        0..self.hidden.last().map_or(0, LayerSpan::end)
    }

    /// Maps a batch's task ids (1-based) to a head index.
    pub fn select_head(&self, task_ids: &[usize]) -> Result<usize> {
        match self.config.heads {
            HeadLayout::Shared => Ok(0),
            HeadLayout::PerTask { num_tasks } => {
                let Some(&t) = task_ids.first() else {
                    return Err(Error::Validation("empty task id list".into()));
                };
                ensure!(
                    task_ids.iter().all(|&u| u == t),
                    Validation,
                    "multi-head forward needs a task-homogeneous batch, got task ids {:?}",
                    {
                        let mut ids = task_ids.to_vec();
                        ids.dedup();
                        ids
                    }
                );
                ensure!(
                    (1..=num_tasks).contains(&t),
                    Range,
                    "no head for task {t} (model has {num_tasks} heads)"
                );
                Ok(t - 1)
            }
        }
    }

    fn linear(&self, x: &Tensor<B::Elem>, span: &LayerSpan) -> Result<Tensor<B::Elem>> {
        ensure!(
            x.cols() == span.fan_in,
            Dimension,
            "layer expects {} input features, got shape {:?}",
            span.fan_in,
            x.shape()
        );
        let rows = x.rows();
        let p = self.params.as_slice();
        let mut out = Tensor::zeros(&[rows, span.fan_out]);
        B::gemm_nn(rows, span.fan_in, span.fan_out, x.data(), &p[span.weight..span.bias], out.data_mut());
        out.add_row_vector(&p[span.bias..span.end()])?;
        Ok(out)
    }

    /// Logits of the head selected by `task_ids`. Dropout masks are drawn
    /// from `rng` only in train mode with `p > 0`.
    pub fn forward(
        &self,
        x: &Tensor<B::Elem>,
        task_ids: &[usize],
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Tensor<B::Elem>, ForwardCache<B::Elem>)> {
        ensure!(
            x.shape().len() == 2 && x.cols() == self.config.input_dim,
            Dimension,
            "expected input [B, {}], got {:?}",
            self.config.input_dim,
            x.shape()
        );
        ensure!(
            task_ids.len() == x.rows(),
            Dimension,
            "{} task ids for {} rows",
            task_ids.len(),
            x.rows()
        );
        let head = self.select_head(task_ids)?;
        let p = self.config.dropout;
        let keep_scale = B::Elem::of(1.0 / (1.0 - p));
        let mut inputs = Vec::with_capacity(self.hidden.len() + 1);
        let mut pre = Vec::with_capacity(self.hidden.len());
        let mut masks = Vec::with_capacity(self.hidden.len());
        let mut h = x.clone();
        let mut features = x.clone();
        for span in &self.hidden {
            let z = self.linear(&h, span)?;
            let mut a = z.relu();
            features = a.clone();
            let mask = if mode == Mode::Train && p > 0.0 {
                let mut m = Tensor::zeros(a.shape());
                for v in m.data_mut() {
                    *v = if rng.bernoulli(p) { B::Elem::zero() } else { keep_scale };
                }
                a = a.mul(&m)?;
                Some(m)
            } else {
                None
            };
            inputs.push(std::mem::replace(&mut h, a));
            pre.push(z);
            masks.push(mask);
        }
        let logits = self.linear(&h, &self.heads[head])?;
        inputs.push(h);
        Ok((
            logits,
            ForwardCache {
                version: self.version,
                head,
                inputs,
                pre,
                masks,
                features,
            },
        ))
    }

    /// Convenience eval-mode forward that discards the cache.
    pub fn predict(&self, x: &Tensor<B::Elem>, task_ids: &[usize]) -> Result<Tensor<B::Elem>> {
        let mut unused = Rng::new(0, 0);
        Ok(self.forward(x, task_ids, Mode::Eval, &mut unused)?.0)
    }

    /// Gradient of `sum(grad_logits ⊙ logits) + sum(grad_features ⊙ features)`
    /// with respect to every parameter, under the cached dropout masks.
    /// Parameters of unselected heads get zero gradient.
    pub fn backward(
        &self,
        cache: &ForwardCache<B::Elem>,
        grad_logits: &Tensor<B::Elem>,
        grad_features: Option<&Tensor<B::Elem>>,
    ) -> Result<ParamVector<B::Elem>> {
        ensure!(
            cache.version == self.version,
            Validation,
            "stale forward cache: parameters changed since the forward pass"
        );
        let head = &self.heads[cache.head];
        let rows = cache.batch_size();
        ensure!(
            grad_logits.shape() == [rows, head.fan_out],
            Dimension,
            "grad_logits {:?} does not match logits [{rows}, {}]",
            grad_logits.shape(),
            head.fan_out
        );
        if let Some(gf) = grad_features {
            ensure!(
                gf.shape() == cache.features.shape(),
                Dimension,
                "grad_features {:?} does not match features {:?}",
                gf.shape(),
                cache.features.shape()
            );
        }
        let mut grads = ParamVector::zeros(self.params.len());
        let p = self.params.as_slice();
        let n_hidden = self.hidden.len();

        let mut g = grad_logits.clone();
        self.layer_grads(&cache.inputs[n_hidden], &g, head, &mut grads)?;
        let mut upstream = None;
        if n_hidden > 0 {
            let mut gh = Tensor::zeros(&[rows, head.fan_in]);
            B::gemm_nt(rows, head.fan_out, head.fan_in, g.data(), &p[head.weight..head.bias], gh.data_mut());
            upstream = Some(gh);
        }
        for l in (0..n_hidden).rev() {
            let span = &self.hidden[l];
            g = upstream.take().expect("upstream gradient for hidden layer");
            if let Some(mask) = &cache.masks[l] {
                g = g.mul(mask)?;
            }
            if l + 1 == n_hidden {
                if let Some(gf) = grad_features {
                    g.add_assign(gf)?;
                }
            }
            g = g.relu_grad(&cache.pre[l])?;
            self.layer_grads(&cache.inputs[l], &g, span, &mut grads)?;
            if l > 0 {
                let mut gh = Tensor::zeros(&[rows, span.fan_in]);
                B::gemm_nt(rows, span.fan_out, span.fan_in, g.data(), &p[span.weight..span.bias], gh.data_mut());
                upstream = Some(gh);
            }
        }
        Ok(grads)
    }

    fn layer_grads(
        &self,
        input: &Tensor<B::Elem>,
        g: &Tensor<B::Elem>,
        span: &LayerSpan,
        grads: &mut ParamVector<B::Elem>,
    ) -> Result<()> {
        let rows = input.rows();
        let out = grads.as_mut_slice();
        B::gemm_tn(span.fan_in, rows, span.fan_out, input.data(), g.data(), &mut out[span.weight..span.bias]);
        let gt = g.transpose()?;
        for j in 0..span.fan_out {
            out[span.bias + j] = B::sum(gt.row(j));
        }
        Ok(())
    }
}
