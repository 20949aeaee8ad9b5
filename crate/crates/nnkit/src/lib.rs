//! A small dense numeric kernel.
//!
//! Row-major [`Matrix`] values, fully connected [`Mlp`] stacks with explicit
//! forward tapes and reverse-mode backward passes, the [`Adam`] optimizer,
//! a central-difference gradient checker and a named-tensor [`Checkpoint`]
//! container. Models elsewhere in the workspace expose their weights
//! through the [`Parameters`] trait so optimizer, checker and checkpoint
//! code stays model-agnostic.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;
pub mod params;

pub use activation::{clamped_ln, log_sum_exp, sigmoid, softmax_in_place, Activation};
pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use error::NnError;
pub use gradcheck::{grad_check, grad_check_params, relative_error};
pub use matrix::{dot, Matrix};
pub use mlp::{Layer, Mlp, MlpTape};
pub use params::Parameters;

pub type Result<T, E = NnError> = std::result::Result<T, E>;
