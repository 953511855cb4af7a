//! Deterministic numeric substrate: matrices, the field MLP with its
//! backward pass, a finite-difference oracle, Adam, the RNG and FDT1 I/O.

mod adam;
mod matrix;
mod mlp;
mod params;
mod rng;
pub mod tensor_io;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use matrix::{dot, pairwise_sum, Matrix};
pub use mlp::{Dense, Mlp, MlpGrads};
pub use params::{finite_diff_flat, finite_diff_grad, Parameterized};
pub use rng::Rng;
pub use tensor_io::{Dtype, Tensor};
