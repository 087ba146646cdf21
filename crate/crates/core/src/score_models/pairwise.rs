//! Pairwise-comparison likelihoods (Bradley-Terry and Thurstone).

use crate::scalar::{log_normal_cdf_and_mills, logistic, normal_cdf, softplus, Scalar};

/// Bradley-Terry probability that `i` beats `j`: `1 / (1 + e^{-η (s_i - s_j)})`.
pub fn bt_pair_probability<T: Scalar>(s_i: T, s_j: T, eta: T) -> T {
    logistic(eta * (s_i - s_j))
}

/// Thurstone probability that `i` beats `j`: `Φ(√η (s_i - s_j))`.
pub fn thurstone_pair_probability<T: Scalar>(s_i: T, s_j: T, eta: T) -> T {
    normal_cdf(eta.sqrt() * (s_i - s_j))
}

/// `-ln P(i ≻ j)` under Bradley-Terry, with derivatives in `s_i` and `η`
/// (the derivative in `s_j` is the negated `s_i` one).
#[inline]
pub(crate) fn bt_neg_log<T: Scalar>(d: T, eta: T) -> (T, T, T) {
    let value = softplus(-eta * d);
    let q = logistic(-eta * d);
    (value, -eta * q, -d * q)
}

/// `-ln P(i ≻ j)` under Thurstone, with derivatives in `s_i` and `η`.
#[inline]
pub(crate) fn thurstone_neg_log<T: Scalar>(d: T, eta: T) -> (T, T, T) {
    let root = eta.sqrt();
    let (ln_cdf, mills) = log_normal_cdf_and_mills(root * d);
    (-ln_cdf, -mills * root, -mills * d / (T::lit(2.0) * root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bt_examples() {
        assert_relative_eq!(bt_pair_probability(0.3f64, 0.3, 5.0), 0.5);
        assert_relative_eq!(bt_pair_probability(1.0f64, 0.0, 1.0), 0.731_058_578_630_005, epsilon = 1e-12);
        assert_relative_eq!(bt_pair_probability(1.0f64, 0.0, 2.0), 0.880_797_077_977_882, epsilon = 1e-12);
    }

    #[test]
    fn thurstone_examples() {
        assert_relative_eq!(thurstone_pair_probability(-2.0f64, -2.0, 1.0), 0.5);
        assert_relative_eq!(thurstone_pair_probability(1.0f64, 0.0, 1.0), 0.841_344_746_068_543, epsilon = 1e-12);
        assert_relative_eq!(thurstone_pair_probability(1.0f64, 0.0, 4.0), 0.977_249_868_051_821, epsilon = 1e-12);
    }

    #[test]
    fn neg_logs_agree_with_probabilities() {
        for &(d, eta) in &[(0.7f64, 1.3), (-2.0, 0.4), (5.0, 2.0)] {
            assert_relative_eq!(bt_neg_log(d, eta).0, -bt_pair_probability(d, 0.0, eta).ln(), epsilon = 1e-12);
            assert_relative_eq!(
                thurstone_neg_log(d, eta).0,
                -thurstone_pair_probability(d, 0.0, eta).ln(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn thurstone_far_tail_is_finite() {
        let (v, ds, de) = thurstone_neg_log(-100.0f64, 1.0);
        assert!(v.is_finite() && ds.is_finite() && de.is_finite());
        assert!(v > 4000.0);
    }
}
