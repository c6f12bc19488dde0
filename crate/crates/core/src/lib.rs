//! Few-shot classification of transmit beams from raw I/Q captures with
//! prototypical networks.
//!
//! The pipeline: labeled blocks ([`data`]) are min-max scaled and augmented
//! ([`preprocess`]), embedded by a 1-D DenseNet ([`encoder`]), and classified
//! by distance to per-beam prototypes ([`protonet`]). [`eval`] rebuilds
//! prototypes from a handful of shots on an unseen domain and scores them;
//! [`ablation`] compares the preprocessing options; [`cli`] exposes all of it
//! as commands.

pub mod ablation;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod output;
pub mod preprocess;
pub mod protonet;
pub mod seed;

pub use error::{Error, Result};
