//! Priors shared by the estimators.

use serde::{Deserialize, Serialize};

use crate::error::{OpgError, Result};
use crate::scalar::Scalar;

/// Gaussian prior on item scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScorePrior<T> {
    pub mean: T,
    pub variance: T,
}

impl<T: Scalar> Default for ScorePrior<T> {
    fn default() -> Self {
        Self { mean: T::zero(), variance: T::lit(9.0) }
    }
}

impl<T: Scalar> ScorePrior<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance > T::zero()) {
            return Err(OpgError::InvalidParameter("score prior variance must be > 0".into()));
        }
        Ok(())
    }

    /// Negative log density up to a constant, and its derivative.
    #[inline]
    pub fn neg_log(&self, s: T) -> (T, T) {
        let d = s - self.mean;
        (d * d / (T::lit(2.0) * self.variance), d / self.variance)
    }
}

/// Gamma(shape, scale) prior on grader reliabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ReliabilityPrior<T> {
    pub shape: T,
    pub scale: T,
}

impl<T: Scalar> Default for ReliabilityPrior<T> {
    fn default() -> Self {
        Self { shape: T::lit(10.0), scale: T::lit(0.1) }
    }
}

impl<T: Scalar> ReliabilityPrior<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.shape > T::zero() && self.scale > T::zero()) {
            return Err(OpgError::InvalidParameter(
                "reliability prior shape and scale must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Log density up to a constant: `(shape - 1) ln η - η / scale`.
    #[inline]
    pub fn log_density(&self, eta: T) -> T {
        (self.shape - T::one()) * eta.ln() - eta / self.scale
    }

    /// Derivative of [`Self::log_density`] with respect to η.
    #[inline]
    pub fn d_log_density(&self, eta: T) -> T {
        (self.shape - T::one()) / eta - T::one() / self.scale
    }

    /// Mode of the density, clamped to the positive reals.
    pub fn mode(&self) -> T {
        let m = (self.shape - T::one()) * self.scale;
        if m > T::zero() {
            m
        } else {
            T::lit(crate::RELIABILITY_MIN)
        }
    }
}
