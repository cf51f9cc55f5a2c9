//! Vine-copula generative classification for mixed continuous and ordinal data.

pub mod bicop;
pub mod classifier;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod format;
pub mod latent;
pub mod margins;
pub mod numeric;
pub mod rank;
pub mod rng;
pub mod scenario;
pub mod simulation;
pub mod vine;

pub use error::{Error, Result};
