//! Classification and analysis engine for ethical pluralism.
//!
//! Cases are described by a normative prior on the three-school simplex,
//! three text embeddings and categorical context. A stacked ensemble maps the
//! fused features to a distribution over fifteen subtheories, and the
//! analytics module measures how that probability mass spreads.

pub mod analytics;
#[cfg(feature = "http")]
pub mod annotate;
pub mod case;
pub mod error;
pub mod fusion;
pub mod io;
pub mod learners;
pub mod normative;
pub mod pipeline;
pub mod rng;
pub mod semantic;
pub mod stack;
pub mod synth;
pub mod taxonomy;

pub use error::{Error, Result};
