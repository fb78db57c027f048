//! Numeric kernels behind one interface.
//!
//! [`Reference`] runs in `f64` with naive loops and serves as the correctness
//! oracle. [`Fast`] stores `f32`, uses cache-blocked matrix products and
//! pairwise reductions. Both accumulate in a fixed order, so repeated runs are
//! bit-identical per backend.

mod fast;
pub mod parity;
mod reference;
mod rng;
mod scalar;
mod tensor;

pub use fast::Fast;
pub use reference::Reference;
pub use rng::{streams, Rng};
pub use scalar::Scalar;
pub use tensor::{elementwise, Elementwise, Tensor};

use crate::error::{ensure, Result};
use num_traits::{One, Zero};

/// A numeric backend. Implementors supply the matrix-product and summation
/// kernels; shape checking and the remaining ops are shared.
pub trait Backend: Copy + Clone + std::fmt::Debug + Default + Send + Sync + 'static {
    type Elem: Scalar;

    const NAME: &'static str;

    /// `c[m,n] = a[m,k] · b[k,n]`; `c` arrives zeroed.
    fn gemm_nn(m: usize, k: usize, n: usize, a: &[Self::Elem], b: &[Self::Elem], c: &mut [Self::Elem]);

    /// `c[m,n] = a[k,m]ᵀ · b[k,n]`; `c` arrives zeroed.
    fn gemm_tn(m: usize, k: usize, n: usize, a: &[Self::Elem], b: &[Self::Elem], c: &mut [Self::Elem]);

    /// `c[m,n] = a[m,k] · b[n,k]ᵀ`; `c` arrives zeroed.
    fn gemm_nt(m: usize, k: usize, n: usize, a: &[Self::Elem], b: &[Self::Elem], c: &mut [Self::Elem]);

    /// Sum with the backend's documented accumulation order.
    fn sum(xs: &[Self::Elem]) -> Self::Elem;

    fn matmul(a: &Tensor<Self::Elem>, b: &Tensor<Self::Elem>) -> Result<Tensor<Self::Elem>> {
        let (m, k, k2, n) = matrix_dims(a, b)?;
        ensure!(
            k == k2,
            Dimension,
            "matmul: {:?} x {:?} inner dimensions differ",
            a.shape(),
            b.shape()
        );
        let mut c = Tensor::zeros(&[m, n]);
        Self::gemm_nn(m, k, n, a.data(), b.data(), c.data_mut());
        Ok(c)
    }

    /// `aᵀ · b`
    fn matmul_tn(a: &Tensor<Self::Elem>, b: &Tensor<Self::Elem>) -> Result<Tensor<Self::Elem>> {
        let (k, m, k2, n) = matrix_dims(a, b)?;
        ensure!(
            k == k2,
            Dimension,
            "matmul_tn: {:?}ᵀ x {:?} inner dimensions differ",
            a.shape(),
            b.shape()
        );
        let mut c = Tensor::zeros(&[m, n]);
        Self::gemm_tn(m, k, n, a.data(), b.data(), c.data_mut());
        Ok(c)
    }

    /// `a · bᵀ`
    fn matmul_nt(a: &Tensor<Self::Elem>, b: &Tensor<Self::Elem>) -> Result<Tensor<Self::Elem>> {
        let (m, k, n, k2) = matrix_dims(a, b)?;
        ensure!(
            k == k2,
            Dimension,
            "matmul_nt: {:?} x {:?}ᵀ inner dimensions differ",
            a.shape(),
            b.shape()
        );
        let mut c = Tensor::zeros(&[m, n]);
        Self::gemm_nt(m, k, n, a.data(), b.data(), c.data_mut());
        Ok(c)
    }
}

fn matrix_dims<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<(usize, usize, usize, usize)> {
    ensure!(
        a.shape().len() == 2 && b.shape().len() == 2,
        Dimension,
        "matrix product needs 2-D operands, got {:?} and {:?}",
        a.shape(),
        b.shape()
    );
    Ok((a.shape()[0], a.shape()[1], b.shape()[0], b.shape()[1]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
    /// Index of the first maximum, returned as an element value.
    Argmax,
}

/// Reduces along `axis`, or over every element when `axis` is `None`.
///
/// Each output lane is gathered contiguously and summed with [`Backend::sum`],
/// so the accumulation order is the backend's.
pub fn reduce<B: Backend>(op: ReduceOp, t: &Tensor<B::Elem>, axis: Option<usize>) -> Result<Tensor<B::Elem>> {
    let Some(axis) = axis else {
        let v = reduce_lane::<B>(op, t.data())?;
        return Ok(Tensor::scalar(v));
    };
    let shape = t.shape();
    ensure!(
        axis < shape.len(),
        Dimension,
        "axis {axis} out of range for shape {shape:?}"
    );
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out_shape = shape.to_vec();
    out_shape.remove(axis);
    let mut out = Vec::with_capacity(outer * inner);
    let mut lane = Vec::with_capacity(len);
    for o in 0..outer {
        for i in 0..inner {
            lane.clear();
            lane.extend((0..len).map(|l| t.data()[(o * len + l) * inner + i]));
            out.push(reduce_lane::<B>(op, &lane)?);
        }
    }
    Tensor::new(out_shape, out)
}

fn reduce_lane<B: Backend>(op: ReduceOp, xs: &[B::Elem]) -> Result<B::Elem> {
    ensure!(!xs.is_empty() || op == ReduceOp::Sum, Dimension, "{op:?} over an empty lane");
    Ok(match op {
        ReduceOp::Sum => {
            if xs.is_empty() {
                B::Elem::zero()
            } else {
                B::sum(xs)
            }
        }
        ReduceOp::Mean => B::sum(xs) / B::Elem::of_usize(xs.len()),
        ReduceOp::Max => xs.iter().copied().fold(xs[0], |m, v| if v > m { v } else { m }),
        ReduceOp::Argmax => B::Elem::of_usize(argmax(xs)),
    })
}

/// Index of the first maximal element.
pub fn argmax<S: Scalar>(xs: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Row-wise argmax of a `[B, C]` matrix.
pub fn argmax_rows<S: Scalar>(t: &Tensor<S>) -> Vec<usize> {
    (0..t.rows()).map(|i| argmax(t.row(i))).collect()
}

/// Mean cross-entropy of `logits[B,C]` against integer targets, with the
/// analytic gradient `(softmax - onehot) / B`. Rows are shifted by their max
/// before exponentiation.
pub fn softmax_cross_entropy<B: Backend>(
    logits: &Tensor<B::Elem>,
    targets: &[usize],
) -> Result<(B::Elem, Tensor<B::Elem>)> {
    ensure!(
        logits.shape().len() == 2,
        Dimension,
        "logits must be [B, C], got {:?}",
        logits.shape()
    );
    let (rows, classes) = (logits.shape()[0], logits.shape()[1]);
    ensure!(
        targets.len() == rows,
        Dimension,
        "{} targets for {} logit rows",
        targets.len(),
        rows
    );
    ensure!(rows > 0, Validation, "cross-entropy over an empty batch");
    if let Some(&bad) = targets.iter().find(|&&y| y >= classes) {
        return Err(crate::Error::Validation(format!(
            "target {bad} outside [0, {classes})"
        )));
    }
    let inv_b = B::Elem::one() / B::Elem::of_usize(rows);
    let mut grad = Tensor::zeros(&[rows, classes]);
    let mut row_losses = Vec::with_capacity(rows);
    let mut exps = vec![B::Elem::zero(); classes];
    for (i, &y) in targets.iter().enumerate() {
        let z = logits.row(i);
        let max = z.iter().copied().fold(z[0], B::Elem::max);
        for (e, &v) in exps.iter_mut().zip(z) {
            *e = (v - max).exp();
        }
        let denom = B::sum(&exps);
        let log_denom = denom.ln();
        row_losses.push(log_denom - (z[y] - max));
        let g = grad.row_mut(i);
        for c in 0..classes {
            let p = exps[c] / denom;
            let onehot = if c == y { B::Elem::one() } else { B::Elem::zero() };
            g[c] = (p - onehot) * inv_b;
        }
    }
    let loss = B::sum(&row_losses) * inv_b;
    Ok((loss, grad))
}

use num_traits::Float;
