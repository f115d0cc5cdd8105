//! A small reverse-mode autodiff engine over `f64` tensors with the layers
//! the surrogate encoders need: convolutions, normalisation, pooling,
//! attention, linear maps, dropout and an MSE loss, plus Adam.

mod error;
pub mod gradcheck;
mod graph;
mod linalg;
mod params;
mod tensor;

pub use error::{Error, Result};
pub use graph::{sinusoidal_positional_encoding, BatchStats, Graph, Var};
pub use params::{Adam, Buffer, BufferId, Init, Param, ParamId, ParamStore};
pub use tensor::Tensor;

/// Batch- and layer-norm epsilon.
pub const NORM_EPS: f64 = 1e-5;
