//! Moment-based probability bounds and the logit signal-to-noise-ratio loss.
//!
//! The crate is organised bottom-up:
//!
//! - [`bounds`]: closed-form bounds on `Pr(x > η)`, `Pr(x ∉ (η₁, η₂))` and
//!   `Pr(η₁ ≤ x ≤ η₂)` given only the mean and variance of `x`. The two-branch
//!   outside-interval formula undershoots the supremum for asymmetric intervals;
//!   [`bounds::outside_interval_sharp_bound`] is exact.
//! - [`extremal`]: delta-mixture distributions that attain the bounds, plus a
//!   brute-force grid oracle that solves the underlying moment problems independently.
//! - [`parametric`]: the Fisher-information classifier for independent Bernoulli
//!   observations and a paired Monte Carlo comparison against the plug-in
//!   likelihood-ratio classifier.
//! - [`snr_loss`]: class-conditional logit statistics, the NSR + margin penalty loss,
//!   its exact gradient with respect to the logits, and the threshold update rule.
//! - [`nn`]: a small ReLU MLP with manual backpropagation and momentum SGD, enough to
//!   compare cross entropy against cross entropy plus the SNR loss.
//! - [`data_io`]: IDX (MNIST) parsing, synthetic Gaussian blobs and seeded batching.

// NaN must fail validation, so `!(x > 0.0)` is used on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod data_io;
pub mod error;
pub mod extremal;
pub mod nn;
pub mod parametric;
pub mod snr_loss;

pub use error::{Error, Result};
