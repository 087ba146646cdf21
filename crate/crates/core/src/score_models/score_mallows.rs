//! Score-weighted Mallows likelihood by exact enumeration.
//!
//! With the reference order sorted by score, the score-weighted distance of a
//! total order `σ'` is `Σ_{i before j in σ'} max(s_j - s_i, 0)`: every pair
//! placed against the scores costs its gap. Both the numerator (orders
//! consistent with the feedback) and the normalizer (all orders) are summed in
//! one pass over a cached permutation table.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{OpgError, Result};
use crate::ranking::{ItemId, WeakRanking};
use crate::scalar::Scalar;

/// Default largest `|D_g|` accepted (9! ≈ 3.6e5 orders per grader).
pub const DEFAULT_ENUMERATION_CAP: usize = 9;
/// Largest cap that may be configured.
pub const MAX_ENUMERATION_CAP: usize = 10;

static TABLES: [OnceLock<Vec<u8>>; MAX_ENUMERATION_CAP + 1] = [const { OnceLock::new() }; MAX_ENUMERATION_CAP + 1];

/// All permutations of `0..k`, concatenated.
fn permutation_table(k: usize) -> &'static [u8] {
    TABLES[k].get_or_init(|| {
        let mut cur: Vec<u8> = (0..k as u8).collect();
        let mut out = Vec::new();
        loop {
            out.extend_from_slice(&cur);
            let Some(i) = (1..k).rev().find(|&i| cur[i - 1] < cur[i]) else { break };
            let j = (i..k).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
        out
    })
}

/// One grader's feedback prepared for enumeration.
#[derive(Clone, Debug)]
pub(crate) struct MalsTerm {
    /// Global item index of each local item, in feedback order.
    pub items: Vec<usize>,
    /// Whether each permutation of the table is consistent with the feedback.
    consistent: Vec<bool>,
}

pub(crate) fn validate_cap(cap: usize) -> Result<()> {
    if cap == 0 || cap > MAX_ENUMERATION_CAP {
        return Err(OpgError::InvalidParameter(format!(
            "enumeration cap must be in 1..={MAX_ENUMERATION_CAP}"
        )));
    }
    Ok(())
}

impl MalsTerm {
    /// `groups` are global item indices, best group first.
    pub fn new(grader: &str, groups: &[Vec<usize>], cap: usize) -> Result<Self> {
        validate_cap(cap)?;
        let k: usize = groups.iter().map(Vec::len).sum();
        if k > cap {
            return Err(OpgError::EnumerationCapExceeded { grader: grader.to_string(), size: k, cap });
        }
        let items: Vec<usize> = groups.iter().flatten().copied().collect();
        let mut level = Vec::with_capacity(k);
        for (l, g) in groups.iter().enumerate() {
            level.extend(std::iter::repeat_n(l, g.len()));
        }
        let consistent = if k == 0 {
            Vec::new()
        } else {
            permutation_table(k)
                .chunks_exact(k)
                .map(|p| p.windows(2).all(|w| level[w[0] as usize] <= level[w[1] as usize]))
                .collect()
        };
        Ok(Self { items, consistent })
    }

    /// `-ln P(feedback)`; accumulates the score gradient into `grad` when
    /// given and returns `(value, d/dη)`.
    pub fn neg_log<T: Scalar>(&self, s: &[T], eta: T, grad: Option<&mut [T]>) -> (T, T) {
        let k = self.items.len();
        if k < 2 {
            return (T::zero(), T::zero());
        }
        let table = permutation_table(k);
        let ls: Vec<T> = self.items.iter().map(|&i| s[i]).collect();
        let dist = |p: &[u8]| {
            let mut d = T::zero();
            for a in 0..k {
                let sa = ls[p[a] as usize];
                for &b in &p[a + 1..] {
                    let gap = ls[b as usize] - sa;
                    if gap > T::zero() {
                        d += gap;
                    }
                }
            }
            d
        };
        let deltas: Vec<T> = table.chunks_exact(k).map(dist).collect();
        let num_min = deltas
            .iter()
            .zip(&self.consistent)
            .filter(|(_, c)| **c)
            .fold(T::infinity(), |m, (d, _)| m.min(*d));
        let want_grad = grad.is_some();
        let (mut num, mut den) = (T::zero(), T::zero());
        let (mut num_d, mut den_d) = (T::zero(), T::zero());
        let mut num_g = vec![T::zero(); if want_grad { k } else { 0 }];
        let mut den_g = num_g.clone();
        let mut pg = num_g.clone();
        for ((p, &d), &c) in table.chunks_exact(k).zip(&deltas).zip(&self.consistent) {
            // the score-sorted order has distance 0, so den ≥ 1
            let wd = (-eta * d).exp();
            let wn = if c { (-eta * (d - num_min)).exp() } else { T::zero() };
            den += wd;
            den_d += wd * d;
            num += wn;
            num_d += wn * d;
            if want_grad {
                pg.iter_mut().for_each(|v| *v = T::zero());
                for a in 0..k {
                    let ia = p[a] as usize;
                    for &b in &p[a + 1..] {
                        if ls[b as usize] > ls[ia] {
                            pg[b as usize] += T::one();
                            pg[ia] -= T::one();
                        }
                    }
                }
                for j in 0..k {
                    den_g[j] += wd * pg[j];
                    num_g[j] += wn * pg[j];
                }
            }
        }
        let value = eta * num_min - num.ln() + den.ln();
        let d_eta = num_d / num - den_d / den;
        if let Some(grad) = grad {
            for j in 0..k {
                grad[self.items[j]] += eta * (num_g[j] / num - den_g[j] / den);
            }
        }
        (value, d_eta)
    }
}

/// Log-probability of a weak ranking under the score-weighted Mallows model:
/// total weight of its consistent orders over the total weight of all orders.
pub fn mals_log_likelihood<T: Scalar>(
    feedback: &WeakRanking,
    scores: &HashMap<ItemId, T>,
    eta: T,
    cap: usize,
) -> Result<T> {
    if !(eta > T::zero()) {
        return Err(OpgError::InvalidParameter("eta must be > 0".into()));
    }
    let items = feedback.flatten();
    let mut s = Vec::with_capacity(items.len());
    for i in &items {
        s.push(*scores.get(i).ok_or_else(|| OpgError::UnknownItem(i.to_string()))?);
    }
    let mut groups = Vec::new();
    let mut next = 0;
    for g in feedback.groups() {
        groups.push((next..next + g.len()).collect());
        next += g.len();
    }
    let term = MalsTerm::new("feedback", &groups, cap)?;
    Ok(-term.neg_log(&s, eta, None).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ids(v: &[&str]) -> Vec<ItemId> {
        v.iter().map(|&s| s.into()).collect()
    }

    fn scores(v: &[(&str, f64)]) -> HashMap<ItemId, f64> {
        v.iter().map(|&(k, s)| (k.into(), s)).collect()
    }

    #[test]
    fn table_sizes() {
        assert_eq!(permutation_table(4).len(), 24 * 4);
        assert_eq!(permutation_table(1), &[0]);
    }

    #[test]
    fn examples() {
        let eq = scores(&[("a", 0.5), ("b", 0.5), ("c", 0.5)]);
        let fb = WeakRanking::new(vec![ids(&["a", "b"]), ids(&["c"])]).unwrap();
        assert_relative_eq!(mals_log_likelihood(&fb, &eq, 1.0, 9).unwrap(), (2.0f64 / 6.0).ln(), epsilon = 1e-12);

        let gap = scores(&[("a", 1.0), ("b", 0.0)]);
        let agree = WeakRanking::from_order(ids(&["a", "b"])).unwrap();
        let reverse = WeakRanking::from_order(ids(&["b", "a"])).unwrap();
        assert_relative_eq!(mals_log_likelihood(&agree, &gap, 1.0, 9).unwrap(), -0.313_261_687_518_222_8, epsilon = 1e-12);
        assert_relative_eq!(mals_log_likelihood(&reverse, &gap, 1.0, 9).unwrap(), -1.313_261_687_518_222_8, epsilon = 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        let fb = WeakRanking::from_order(ids(&["a", "b", "c"])).unwrap();
        let s = scores(&[("a", 0.0), ("b", 0.0), ("c", 0.0)]);
        let err = mals_log_likelihood(&fb, &s, 1.0, 2).unwrap_err();
        assert!(matches!(err, OpgError::EnumerationCapExceeded { size: 3, cap: 2, .. }));
        assert!(err.to_string().contains("cap"));
    }

    proptest! {
        #[test]
        fn matches_enumeration_oracle(
            s in proptest::collection::vec(-2.0f64..2.0, 1..=5),
            eta in 0.1f64..3.0,
            cuts in proptest::collection::vec(any::<bool>(), 5),
        ) {
            let k = s.len();
            let mut groups: Vec<Vec<usize>> = vec![vec![0]];
            for i in 1..k {
                if cuts[i] { groups.push(vec![i]) } else { groups.last_mut().unwrap().push(i) }
            }
            let term = MalsTerm::new("g", &groups, 9).unwrap();
            let got = -term.neg_log(&s, eta, None).0;
            let want = opg_oracle::score_mallows_log_likelihood(&groups, &s, eta);
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
        }

        #[test]
        fn total_orders_sum_to_one(s in proptest::collection::vec(-2.0f64..2.0, 1..=5), eta in 0.1f64..3.0) {
            let k = s.len();
            let total: f64 = opg_oracle::permutations(k)
                .iter()
                .map(|p| {
                    let groups: Vec<Vec<usize>> = p.iter().map(|&i| vec![i]).collect();
                    (-MalsTerm::new("g", &groups, 9).unwrap().neg_log(&s, eta, None).0).exp()
                })
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
