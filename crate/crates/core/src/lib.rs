//! Attacker-side speaker verification on anonymized speech.
//!
//! The pipeline runs log-Mel extraction ([`features`]), dataset fusion and
//! time/frequency masking ([`augment`]), a frame-level embedder trained with
//! an additive angular margin loss ([`embedder`]), a two-covariance PLDA
//! backend ([`plda`]) and EER evaluation ([`scoring`]). [`synth`] provides
//! synthetic populations and brute-force reference implementations, and
//! [`cli`] wires everything into the `voxattack` binary.

pub mod augment;
pub mod cli;
pub mod embedder;
pub mod error;
pub mod features;
pub mod io;
mod linalg;
pub mod plda;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
