//! Continual learning on task sequences: benchmarks, MLP backbones, a
//! hook-driven training loop, regularization and replay algorithms, and a
//! declarative experiment layer.
//!
//! Numeric code is generic over a [`backend::Backend`]; the two shipped
//! backends are [`Reference`] (`f64`) and [`Fast`] (`f32`). Aliases below name
//! the common concrete instantiations.

pub mod backend;
pub mod error;
pub mod algorithms;
pub mod experiment;
pub mod benchmarks;
pub mod events;
pub mod loggers;
pub mod nn;

pub use backend::{Backend, Fast, Reference, Rng, Scalar, Tensor};
pub use error::{Error, Result};

pub type RefTensor = Tensor<f64>;
pub type FastTensor = Tensor<f32>;
pub type RefMlp = nn::Mlp<Reference>;
pub type FastMlp = nn::Mlp<Fast>;
pub type RefParams = nn::ParamVector<f64>;
pub type FastParams = nn::ParamVector<f32>;
