use std::ops::{Index, IndexMut};

use crate::backend::Scalar;
use crate::error::{ensure, Result};

/// Flat parameter-space vector in the model's canonical order
/// (hidden layers first, then heads; weights before biases within a layer).
///
/// Holds parameters, gradients, importances and velocities alike.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector<S>(Vec<S>);

impl<S: Scalar> ParamVector<S> {
    pub fn zeros(len: usize) -> Self {
        Self(vec![S::zero(); len])
    }

    pub fn from_vec(v: Vec<S>) -> Self {
        Self(v)
    }

    pub fn from_f64(v: &[f64]) -> Self {
        Self(v.iter().map(|&x| S::of(x)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<S> {
        self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.as_f64()).collect()
    }

    pub fn cast<T: Scalar>(&self) -> ParamVector<T> {
        ParamVector(self.0.iter().map(|v| T::of(v.as_f64())).collect())
    }

    pub fn check_len(&self, other: &Self, what: &str) -> Result<()> {
        ensure!(
            self.len() == other.len(),
            Validation,
            "{what}: parameter vectors of length {} and {}",
            self.len(),
            other.len()
        );
        Ok(())
    }

    /// Inner product accumulated in `f64`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_len(other, "dot")?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt()
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_len(other, "add")?;
        for (a, &b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
        Ok(())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: S, other: &Self) -> Result<()> {
        self.check_len(other, "axpy")?;
        for (a, &b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_len(other, "sub")?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect()))
    }

    pub fn scale(&mut self, k: S) {
        for a in &mut self.0 {
            *a *= k;
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }
}

impl<S> Index<usize> for ParamVector<S> {
    type Output = S;

    fn index(&self, i: usize) -> &S {
        &self.0[i]
    }
}

impl<S> IndexMut<usize> for ParamVector<S> {
    fn index_mut(&mut self, i: usize) -> &mut S {
        &mut self.0[i]
    }
}
