//! Plackett-Luce ranking likelihood.

use std::collections::HashMap;

use crate::error::{OpgError, Result};
use crate::ranking::{ItemId, WeakRanking};
use crate::scalar::{log_sum_exp, Scalar};

/// Log-probability of a total order under Plackett-Luce with utilities
/// `η s_d`: `Σ_i [η s_{d_i} - ln Σ_{j ≥ i} e^{η s_{d_j}}]`.
pub fn pl_ranking_log_probability<T: Scalar>(
    order: &WeakRanking,
    scores: &HashMap<ItemId, T>,
    eta: T,
) -> Result<T> {
    if !order.is_total() {
        return Err(OpgError::TiesPresent);
    }
    let mut s = Vec::with_capacity(order.len());
    for i in order.items() {
        s.push(*scores.get(i).ok_or_else(|| OpgError::UnknownItem(i.to_string()))?);
    }
    let idx: Vec<usize> = (0..s.len()).collect();
    Ok(-neg_log(&idx, &s, eta, None).0)
}

/// `-ln P(order)` for `order` given as indices into `s`. Accumulates the
/// score gradient into `grad` when given and returns `(value, d/dη)`.
pub(crate) fn neg_log<T: Scalar>(order: &[usize], s: &[T], eta: T, grad: Option<&mut [T]>) -> (T, T) {
    let k = order.len();
    let x: Vec<T> = order.iter().map(|&i| eta * s[i]).collect();
    // suffix log-sum-exps
    let mut lse = vec![T::zero(); k];
    for i in 0..k {
        lse[i] = log_sum_exp(x[i..].iter().copied());
    }
    let mut value = T::zero();
    let mut d_eta = T::zero();
    for i in 0..k {
        value -= x[i] - lse[i];
        let mean: T = (i..k).map(|j| (x[j] - lse[i]).exp() * s[order[j]]).sum();
        d_eta -= s[order[i]] - mean;
    }
    if let Some(grad) = grad {
        for j in 0..k {
            // item j appears in the denominators of stages 0..=j
            let p: T = (0..=j).map(|i| (x[j] - lse[i]).exp()).sum();
            grad[order[j]] -= eta * (T::one() - p);
        }
    }
    (value, d_eta)
}
