//! Synthetic peer-grading data: true item qualities, balanced reviewer
//! assignments, Mallows-noise ordinal graders, normal-noise cardinal graders
//! and lazy graders.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GraderFeedback};
use crate::error::{OpgError, Result};
use crate::ranking::{ranking_from_scores, GraderId, ItemId, WeakRanking};
use crate::scalar::Scalar;

/// Centre and spread of the 10-point grade scale.
const GRADE_MEAN: f64 = 8.0;
const GRADE_SCALE: f64 = 1.3;
const GRADE_MIN: f64 = 1.0;
const GRADE_MAX: f64 = 10.0;

/// Seed offsets so the streams for assignment, grades and lazy graders differ.
const GRADE_SALT: u64 = 0x5eed;
const LAZY_SALT: u64 = 0x1a27;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraderModel {
    /// Each grader reports a Mallows sample around the true order of their
    /// items.
    Mallows { eta: f64 },
    /// Each grader reports `8 + 1.3 (s_d + b_g + ε)` clamped to `[1, 10]`,
    /// with `ε ~ N(0, 1/eta)` and `b_g ~ N(0, bias_sd²)`.
    CardinalNormal { eta: f64, bias_sd: f64 },
    /// As `CardinalNormal`, rounded to whole points of the 10-point scale, so
    /// graders tie items they see as close.
    Likert { eta: f64, bias_sd: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_items: usize,
    pub n_graders: usize,
    pub items_per_grader: usize,
    pub truth_mean: f64,
    pub truth_variance: f64,
    pub grader_model: GraderModel,
    pub n_lazy: usize,
    /// Require every item to be assigned to at least one grader.
    pub full_coverage: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_items: 40,
            n_graders: 150,
            items_per_grader: 7,
            truth_mean: 0.0,
            truth_variance: 1.0,
            grader_model: GraderModel::Mallows { eta: 1.0 },
            n_lazy: 0,
            full_coverage: true,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_items == 0 {
            return Err(OpgError::InvalidParameter("n_items must be >= 1".into()));
        }
        if self.items_per_grader == 0 || self.items_per_grader > self.n_items {
            return Err(OpgError::InvalidParameter("items_per_grader must be in 1..=n_items".into()));
        }
        if !(self.truth_variance >= 0.0) || !self.truth_mean.is_finite() {
            return Err(OpgError::InvalidParameter("truth variance must be >= 0".into()));
        }
        match self.grader_model {
            GraderModel::Mallows { eta } if !(eta > 0.0) => {
                Err(OpgError::InvalidParameter("Mallows eta must be > 0".into()))
            }
            GraderModel::CardinalNormal { eta, bias_sd } | GraderModel::Likert { eta, bias_sd }
                if !(eta > 0.0) || !(bias_sd >= 0.0) =>
            {
                Err(OpgError::InvalidParameter("cardinal eta must be > 0 and bias_sd >= 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Ground truth of a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scores: BTreeMap<ItemId, f64>,
    pub ranking: WeakRanking,
}

/// Zero-padded ids so that lexicographic and numeric order agree.
pub fn item_ids(n: usize) -> Vec<ItemId> {
    let w = n.max(1).to_string().len();
    (1..=n).map(|k| ItemId::from(format!("i{k:0w$}").as_str())).collect()
}

pub fn grader_ids(n: usize) -> Vec<GraderId> {
    let w = n.max(1).to_string().len();
    (1..=n).map(|k| GraderId::from(format!("g{k:0w$}").as_str())).collect()
}

/// Balanced assignment: each grader in turn takes the `k` least-reviewed
/// items, ties between equally loaded items broken at random. Review counts
/// never differ by more than one.
pub fn balanced_assignment<R: Rng + ?Sized>(
    items: &[ItemId],
    graders: &[GraderId],
    k: usize,
    rng: &mut R,
) -> Result<BTreeMap<GraderId, BTreeSet<ItemId>>> {
    if k == 0 || k > items.len() {
        return Err(OpgError::InvalidParameter("items_per_grader must be in 1..=n_items".into()));
    }
    let mut counts = vec![0usize; items.len()];
    let mut idx: Vec<usize> = (0..items.len()).collect();
    let mut out = BTreeMap::new();
    for g in graders {
        idx.shuffle(rng);
        idx.sort_by_key(|&i| counts[i]);
        let chosen: BTreeSet<ItemId> = idx[..k].iter().map(|&i| items[i].clone()).collect();
        for &i in &idx[..k] {
            counts[i] += 1;
        }
        out.insert(g.clone(), chosen);
    }
    Ok(out)
}

/// Reviewer assignment for `cfg` (graders `g1..`, items `i1..`).
pub fn assign_reviewers(cfg: &SynthConfig) -> Result<BTreeMap<GraderId, BTreeSet<ItemId>>> {
    cfg.validate()?;
    if cfg.full_coverage && cfg.n_graders * cfg.items_per_grader < cfg.n_items {
        return Err(OpgError::Infeasible(format!(
            "{} graders x {} items cannot cover {} items",
            cfg.n_graders, cfg.items_per_grader, cfg.n_items
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    balanced_assignment(&item_ids(cfg.n_items), &grader_ids(cfg.n_graders), cfg.items_per_grader, &mut rng)
}

/// Draw a total order of `subset` with probability proportional to
/// `exp(-η · δ_K(truth|subset, σ))` by repeated insertion: the `i`-th item of
/// the true order is inserted `j` places above the bottom of the current list
/// with probability proportional to `e^{-η j}`.
pub fn sample_mallows_feedback<R: Rng + ?Sized>(
    truth: &WeakRanking,
    subset: &BTreeSet<ItemId>,
    eta: f64,
    rng: &mut R,
) -> Result<WeakRanking> {
    if !(eta > 0.0) {
        return Err(OpgError::InvalidParameter("eta must be > 0".into()));
    }
    if !truth.is_total() {
        return Err(OpgError::TiesPresent);
    }
    let centre: Vec<ItemId> = truth.items().filter(|i| subset.contains(*i)).cloned().collect();
    if centre.len() != subset.len() {
        return Err(OpgError::ItemSetMismatch);
    }
    let q = (-eta).exp();
    let mut order: Vec<ItemId> = Vec::with_capacity(centre.len());
    for (i, item) in centre.into_iter().enumerate() {
        // i + 1 slots; moving j places up costs j inversions
        let weights: Vec<f64> = (0..=i).map(|j| q.powi(j as i32)).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut j = 0;
        while j < i && u >= weights[j] {
            u -= weights[j];
            j += 1;
        }
        order.insert(i - j, item);
    }
    WeakRanking::from_order(order)
}

/// Generate a dataset and its ground truth.
pub fn generate<T: Scalar>(cfg: &SynthConfig) -> Result<(Dataset<T>, GroundTruth)> {
    cfg.validate()?;
    let assignment = assign_reviewers(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(GRADE_SALT));
    let items = item_ids(cfg.n_items);
    let truth_dist = Normal::new(cfg.truth_mean, cfg.truth_variance.sqrt())
        .map_err(|e| OpgError::InvalidParameter(e.to_string()))?;
    let scores: BTreeMap<ItemId, f64> = items.iter().map(|i| (i.clone(), truth_dist.sample(&mut rng))).collect();
    let ranking = ranking_from_scores(scores.iter().map(|(k, v)| (k.clone(), *v)), 0.0)?;
    let mut feedback = Vec::with_capacity(cfg.n_graders);
    for (g, subset) in &assignment {
        let fb = match cfg.grader_model {
            GraderModel::Mallows { eta } => {
                let r = sample_mallows_feedback(&ranking, subset, eta, &mut rng)?;
                GraderFeedback::from_ordinal(g.clone(), r)?
            }
            GraderModel::CardinalNormal { eta, bias_sd } | GraderModel::Likert { eta, bias_sd } => {
                let integer = matches!(cfg.grader_model, GraderModel::Likert { .. });
                let bias = if bias_sd > 0.0 { Normal::new(0.0, bias_sd).unwrap().sample(&mut rng) } else { 0.0 };
                let noise = Normal::new(0.0, (1.0 / eta).sqrt()).unwrap();
                let grades = subset
                    .iter()
                    .map(|i| {
                        let raw = scores[i] + bias + noise.sample(&mut rng);
                        let grade = to_grade_scale(raw);
                        (i.clone(), T::lit(if integer { grade.round() } else { grade }))
                    })
                    .collect();
                GraderFeedback::from_cardinal(g.clone(), grades)?
            }
        };
        feedback.push(fb);
    }
    let data = Dataset::new(items, assignment.keys().cloned().collect(), feedback)?;
    let data = add_lazy_graders(&data, cfg.n_lazy, cfg.seed.wrapping_add(LAZY_SALT))?;
    Ok((data, GroundTruth { scores, ranking }))
}

fn to_grade_scale(raw: f64) -> f64 {
    (GRADE_MEAN + GRADE_SCALE * raw).clamp(GRADE_MIN, GRADE_MAX)
}

/// Most common number of items per grader.
fn prevailing_load<T: Scalar>(data: &Dataset<T>) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for fb in &data.feedback {
        *counts.entry(fb.items.len()).or_default() += 1;
    }
    counts.into_iter().max_by_key(|&(k, c)| (c, k)).map(|(k, _)| k).unwrap_or(1)
}

/// Append `n` lazy graders whose feedback ignores item quality.
///
/// With cardinal data each lazy grade is drawn from a normal matching the
/// mean and variance of all existing grades (rounded and clamped to the
/// observed range when every existing grade is a whole number), and the
/// ordinal feedback is the order those grades induce. With ordinal-only data a lazy grader reports a
/// uniformly random order. Lazy graders review the prevailing number of items
/// per grader, assigned by [`balanced_assignment`], and are listed in
/// [`Dataset::lazy`].
pub fn add_lazy_graders<T: Scalar>(data: &Dataset<T>, n: usize, seed: u64) -> Result<Dataset<T>> {
    if n == 0 {
        return Ok(data.clone());
    }
    if data.feedback.is_empty() {
        return Err(OpgError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let existing: BTreeSet<&GraderId> = data.graders.iter().collect();
    let mut ids = Vec::with_capacity(n);
    let mut next = data.graders.len() + 1;
    let width = (data.graders.len() + n).to_string().len();
    while ids.len() < n {
        let id = GraderId::from(format!("g{next:0width$}").as_str());
        if !existing.contains(&id) {
            ids.push(id);
        }
        next += 1;
    }
    let load = prevailing_load(data).min(data.n_items());
    let assignment = balanced_assignment(&data.items, &ids, load, &mut rng)?;
    let grades: Option<Vec<f64>> = if data.has_cardinal() {
        Some(data.feedback.iter().flat_map(|f| f.cardinal.as_ref().unwrap().values().map(|v| v.as_f64())).collect())
    } else {
        None
    };
    let mut out = data.clone();
    for (g, subset) in assignment {
        let fb = match &grades {
            Some(all) => {
                let m = all.iter().sum::<f64>() / all.len() as f64;
                let v = all.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (all.len().max(2) - 1) as f64;
                let dist = Normal::new(m, v.sqrt()).map_err(|e| OpgError::InvalidParameter(e.to_string()))?;
                let integer = all.iter().all(|x| x.fract() == 0.0);
                let (lo, hi) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
                let scores = subset
                    .iter()
                    .map(|i| {
                        let x = dist.sample(&mut rng);
                        (i.clone(), T::lit(if integer { x.round().clamp(lo, hi) } else { x }))
                    })
                    .collect();
                GraderFeedback::from_cardinal(g.clone(), scores)?
            }
            None => {
                let mut order: Vec<ItemId> = subset.into_iter().collect();
                order.shuffle(&mut rng);
                GraderFeedback::from_ordinal(g.clone(), WeakRanking::from_order(order)?)?
            }
        };
        out.graders.push(g.clone());
        out.lazy.insert(g);
        out.feedback.push(fb);
    }
    out.validate()?;
    Ok(out)
}
