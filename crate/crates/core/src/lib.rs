//! Rank aggregation for ordinal peer grading.
//!
//! Estimators take a [`Dataset`] of per-grader feedback (weak rankings and/or
//! cardinal grades) and return an [`Estimate`]: item scores where the model has
//! them, a weak ranking of all items, and per-grader reliabilities for the `+G`
//! variants. Numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom of this file fix the common `f64` case.

// `!(x > 0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod data;
pub mod error;
pub mod experiments;
pub mod io;
pub mod mallows;
pub mod methods;
pub mod metrics;
pub mod optim;
pub mod priors;
pub mod ranking;
pub mod scalar;
pub mod score_models;
pub mod synth;

pub use data::{Dataset, Estimate, GraderFeedback, OrdinalView};
pub use error::{OpgError, Result};
pub use methods::{fit, FitConfig, Method};
pub use priors::{ReliabilityPrior, ScorePrior};
pub use ranking::{GraderId, ItemId, PreferencePair, WeakRanking};
pub use scalar::Scalar;

/// Lower clamp for every estimated reliability.
pub const RELIABILITY_MIN: f64 = 1e-3;
/// Upper clamp for every estimated reliability.
pub const RELIABILITY_MAX: f64 = 1e3;

pub type Dataset64 = Dataset<f64>;
pub type Estimate64 = Estimate<f64>;
pub type FitConfig64 = FitConfig<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Estimate32 = Estimate<f32>;
