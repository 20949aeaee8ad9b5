//! Synthetic live-streaming data.
//!
//! A [`World`] holds authors whose per-session topic mixtures drift away
//! from a long-term base mixture, users with topic preferences and latent
//! style tastes, and a fixed set of topic embeddings. [`emit_windows`] turns
//! every 30-second window of every session into a multimodal embedding,
//! [`simulate_interactions`] samples exposures with hierarchical labels, and
//! [`split_log`] cuts a log temporally into train and eval parts.

mod config;
mod error;
mod interactions;
mod split;
mod windows;
mod world;

pub use config::{BaseRates, WorldConfig, WINDOW_SECONDS};
pub use error::SimError;
pub use interactions::{calibrate_bias, simulate_interactions, true_click_logit, Calibration};
pub use split::{split_log, UnsortedPolicy};
pub use windows::{emit_windows, mixture_mean, SessionWindow, WindowStore};
pub use world::{generate_world, World};

pub type Result<T, E = SimError> = std::result::Result<T, E>;
