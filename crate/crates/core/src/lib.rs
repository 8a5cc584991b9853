//! Saliency maps modelled as probability distributions over pixels.
//!
//! A saliency map is treated as a categorical (generalized Bernoulli)
//! distribution: each pixel carries the probability of being fixated. This
//! crate provides
//!
//! - grid containers and the softmax normalization ([`grid`], [`norm`]),
//! - softmax-paired distance losses with analytic logit gradients ([`losses`]),
//! - the standard fixation metrics, including an exact EMD solver ([`metrics`]),
//! - ground-truth construction from fixations ([`pipeline`]),
//! - a small fully-convolutional network with an SGD trainer ([`net`]),
//! - a deterministic synthetic fixation dataset ([`data`]) and the
//!   loss-comparison experiment built on top of it ([`bench`]).
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the CLI
//! live in the companion `saldist` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bench;
pub mod data;
mod error;
pub mod grid;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod norm;
pub mod pipeline;

pub use error::{Error, Result};
pub use grid::{FixationSet, GridMap, PixelDistribution};
pub use losses::{LossKind, LossResult, LossSpec};
pub use norm::{min_max_normalize, softmax, softmax_jvp};
