//! Pair-relationship unlearning for dual-encoder multimodal models, evaluated
//! on synthetic two-modality data with known latent structure.
//!
//! The crate covers the full experimental loop: dataset generation
//! ([`synthdata`]), the dual-encoder model and its training ([`model`]), the
//! property-based unlearning objective ([`unlearn`]), comparison baselines
//! ([`baselines`]), metrics including membership inference ([`eval`]), and a
//! config-driven experiment harness ([`harness`]).

pub mod baselines;
pub mod error;
pub mod eval;
pub mod harness;
pub mod model;
pub mod nn;
pub mod plot;
pub mod synthdata;
pub mod unlearn;

pub use error::{Error, Result};
