//! Binary diffusion for tabular data.
//!
//! Tables are mapped losslessly to fixed-width bit vectors ([`codec`]), a
//! denoiser is trained to undo random XOR bit flips ([`noise`],
//! [`denoiser`], [`trainer`]) and new rows are generated by iterated
//! denoise/renoise steps with classifier-free guidance ([`sampler`]). The
//! `eval` module scores synthetic tables by how well downstream models
//! trained on them predict real held-out rows.

pub mod checkpoint;
pub mod codec;
pub mod denoiser;
pub mod error;
pub mod eval;
pub mod infer;
pub mod nn;
pub mod noise;
pub mod sampler;
pub mod schema;
pub mod table;
pub mod trainer;

pub use error::{Error, Result};
