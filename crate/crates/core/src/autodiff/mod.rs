//! A deliberately small reverse-mode differentiation layer.
//!
//! Values are dense row-major matrices. The [`Tape`] records the handful of
//! primitives the forecaster needs (affine maps, activations, layer norm,
//! row gather, segment sum, concatenation, addition and per-column affine
//! rescaling), and [`Tape::backward`] replays them in reverse to produce
//! parameter gradients.
//!
//! Everything is generic over [`Scalar`] so training can run in `f32` while
//! gradient checks use `f64`.

mod adamw;
mod checkpoint;
mod matrix;
mod mlp;
mod params;
mod scalar;
mod tape;

pub use adamw::{AdamW, AdamWConfig};
pub use checkpoint::Checkpoint;
pub use matrix::Matrix;
pub use mlp::{mlp_forward, Activation, Mlp, MlpInput, MlpSpec};
pub use params::{init_truncated_normal, Gradients, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tape::{segment_sum, NodeId, Tape};
