//! Evaluation metrics: tie-aware Kendall-τ, the normalized error `E_K`, and
//! cardinal MAE/RMSE after affine rescaling.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{OpgError, Result};
use crate::ranking::{ItemId, RankKey, WeakRanking};
use crate::scalar::Scalar;

/// Target rankings over a common item set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetSet {
    targets: Vec<WeakRanking>,
}

impl TargetSet {
    pub fn new(targets: Vec<WeakRanking>) -> Result<Self> {
        let first = targets.first().ok_or_else(|| OpgError::InvalidParameter("empty target set".into()))?;
        let items = first.item_set();
        if targets.iter().any(|t| t.item_set() != items) {
            return Err(OpgError::ItemSetMismatch);
        }
        Ok(Self { targets })
    }

    pub fn single(target: WeakRanking) -> Self {
        Self { targets: vec![target] }
    }

    pub fn targets(&self) -> &[WeakRanking] {
        &self.targets
    }
}

/// Tie-aware Kendall-τ error of `predicted` against `target`: each strict
/// target pair costs 1 if `predicted` reverses it and ½ if it ties it. Pairs
/// tied in the target cost nothing.
pub fn tau_kt<I: RankKey>(target: &WeakRanking<I>, predicted: &WeakRanking<I>) -> Result<f64> {
    if target.item_set() != predicted.item_set() {
        return Err(OpgError::ItemSetMismatch);
    }
    let level: HashMap<I, usize> = predicted.levels();
    let groups = target.groups();
    let mut half_units = 0usize;
    for (gi, better) in groups.iter().enumerate() {
        for worse in &groups[gi + 1..] {
            for a in better {
                let la = level[a];
                for b in worse {
                    let lb = level[b];
                    if lb < la {
                        half_units += 2;
                    } else if la == lb {
                        half_units += 1;
                    }
                }
            }
        }
    }
    Ok(half_units as f64 / 2.0)
}

/// Macro-averaged normalized Kendall-τ error in percent: 0 is perfect
/// agreement, 100 reverses every strict target pair, a random order scores 50
/// in expectation.
pub fn ek_error(targets: &TargetSet, predicted: &WeakRanking) -> Result<f64> {
    let mut total = 0.0;
    for t in targets.targets() {
        let max = t.strict_pair_count();
        if max == 0 {
            return Err(OpgError::Undefined("target ranking has no strict pairs".into()));
        }
        total += tau_kt(t, predicted)? / max as f64;
    }
    Ok(100.0 * total / targets.targets().len() as f64)
}

fn mean_std<T: Scalar>(v: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(v.len());
    let mean = v.iter().copied().sum::<T>() / n;
    let var = v.iter().map(|x| (*x - mean) * (*x - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// MAE and RMSE of `predicted` against `target` after affinely rescaling the
/// predictions to the target's mean and (population) standard deviation.
pub fn cardinal_errors<T: Scalar>(predicted: &BTreeMap<ItemId, T>, target: &BTreeMap<ItemId, T>) -> Result<(T, T)> {
    if predicted.is_empty() || !predicted.keys().eq(target.keys()) {
        return Err(OpgError::ItemSetMismatch);
    }
    let p: Vec<T> = predicted.values().copied().collect();
    let t: Vec<T> = target.values().copied().collect();
    let (mp, sp) = mean_std(&p);
    let (mt, st) = mean_std(&t);
    if !(sp > T::zero()) {
        return Err(OpgError::Undefined("predicted scores are constant; rescaling undefined".into()));
    }
    if !(st > T::zero()) {
        return Err(OpgError::Undefined("target scores are constant".into()));
    }
    let n = T::from_usize_lossy(p.len());
    let (mut abs, mut sq) = (T::zero(), T::zero());
    for (x, y) in p.iter().zip(&t) {
        let e = (*x - mp) / sp * st + mt - *y;
        abs += e.abs();
        sq += e * e;
    }
    Ok((abs / n, (sq / n).sqrt()))
}
