//! Desk-scale flow-matching dubbing core.
//!
//! The crate covers optimal-transport conditional flow matching with an Euler
//! sampler, style-affine conditioning with decoupled classifier-free
//! guidance, dual contrastive lip/phoneme alignment with monotonic alignment
//! search, phoneme-level cross-modal conditioning, the MCD/DTW metric family,
//! and synthetic data with planted ground truth.

pub mod alignment;
pub mod conditioning;
pub mod datagen;
pub mod error;
pub mod flowmatch;
pub mod guidance;
pub mod metrics;
pub mod numkernel;

pub use error::{Error, Result};
pub use numkernel::Matrix;
