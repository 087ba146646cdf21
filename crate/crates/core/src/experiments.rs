//! Evaluation protocols: bootstrap error bars, self-consistency, downsampling
//! curves, lazy-grader identification, robustness to lazy graders and
//! runtime measurement.
//!
//! Repetitions run in parallel (capped by the `OPG_THREADS` environment
//! variable) with seed `seed + rep`; results are collected in repetition
//! order, so every report is a function of its inputs and seed alone.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Estimate, GraderFeedback};
use crate::error::{OpgError, Result};
use crate::methods::{fit, FitConfig, Method};
use crate::metrics::{ek_error, tau_kt, TargetSet};
use crate::ranking::{GraderId, ItemId, WeakRanking};
use crate::scalar::Scalar;
use crate::synth::add_lazy_graders;

pub const DEFAULT_BOOTSTRAP_REPS: usize = 1000;
pub const DEFAULT_PARTITIONS: usize = 20;
pub const DEFAULT_DOWNSAMPLE_REPS: usize = 20;
pub const DEFAULT_IDENTIFICATION_REPS: usize = 50;
/// Share of graders flagged as least reliable.
pub const DEFAULT_BOTTOM_FRACTION: f64 = 0.125;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (0 for a single value).
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Reviewers,
    ItemsPerReviewer,
}

impl std::str::FromStr for Axis {
    type Err = OpgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reviewers" => Ok(Axis::Reviewers),
            "items_per_reviewer" | "items-per-reviewer" => Ok(Axis::ItemsPerReviewer),
            _ => Err(OpgError::InvalidParameter(format!("unknown axis `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub level: usize,
    pub ek: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub n_lazy: usize,
    pub bottom_k: usize,
    /// Mean share of lazy graders among the `bottom_k` flagged graders.
    pub rate: f64,
    pub per_rep: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub lazy_count: usize,
    pub delta: f64,
}

/// Aggregated output of one experiment run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub reps: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ek: BTreeMap<Method, MeanStd>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curve: Vec<CurvePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identification: Option<Identification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heuristic_identification: Option<Identification>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub robustness: Vec<RobustnessPoint>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub runtime_seconds: BTreeMap<Method, MeanStd>,
}

/// Thread cap from `OPG_THREADS` (unset or 0: rayon's default).
pub fn thread_cap() -> usize {
    std::env::var("OPG_THREADS").ok().and_then(|v| v.trim().parse().ok()).unwrap_or(0)
}

/// Run `f(rep)` for every repetition on a pool capped by `OPG_THREADS`,
/// returning results in repetition order.
fn run_reps<R: Send>(reps: usize, f: impl Fn(usize) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap())
        .build()
        .map_err(|e| OpgError::Io(e.to_string()))?;
    pool.install(|| (0..reps).into_par_iter().map(&f).collect())
}

fn rep_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_add(rep as u64)
}

/// `E_K` of `predicted` over the items it shares with the targets.
pub fn evaluate(targets: &TargetSet, predicted: &WeakRanking) -> Result<f64> {
    let shared: HashSet<ItemId> = predicted.items().cloned().collect();
    let restricted: Vec<WeakRanking> = targets.targets().iter().map(|t| t.restrict_to(&shared)).collect();
    let common: HashSet<ItemId> = restricted[0].items().cloned().collect();
    ek_error(&TargetSet::new(restricted)?, &predicted.restrict_to(&common))
}

fn fit_seeded<T: Scalar>(method: Method, data: &Dataset<T>, cfg: &FitConfig<T>, seed: u64) -> Result<Estimate<T>> {
    fit(method, data, &cfg.clone().with_seed(seed))
}

/// Graders resampled with replacement; repeated graders get `#k` suffixes.
pub fn resample_graders<T: Scalar, R: Rng + ?Sized>(data: &Dataset<T>, rng: &mut R) -> Result<Dataset<T>> {
    if data.feedback.is_empty() {
        return Err(OpgError::EmptyDataset);
    }
    let mut seen: BTreeMap<GraderId, usize> = BTreeMap::new();
    let mut feedback = Vec::with_capacity(data.feedback.len());
    let mut graders = Vec::with_capacity(data.feedback.len());
    let mut lazy = BTreeSet::new();
    for _ in 0..data.feedback.len() {
        let fb = data.feedback.choose(rng).unwrap();
        let k = seen.entry(fb.grader.clone()).or_insert(0);
        *k += 1;
        let id = if *k == 1 { fb.grader.clone() } else { GraderId::new(format!("{}#{k}", fb.grader))? };
        if data.lazy.contains(&fb.grader) {
            lazy.insert(id.clone());
        }
        graders.push(id.clone());
        feedback.push(GraderFeedback { grader: id, ..fb.clone() });
    }
    let mut out = Dataset::new(data.items.clone(), graders, feedback)?;
    out.lazy = lazy;
    Ok(out)
}

/// Mean and sample standard deviation of `E_K` over bootstrap resamples of
/// the graders.
pub fn bootstrap_ek<T: Scalar>(
    data: &Dataset<T>,
    method: Method,
    cfg: &FitConfig<T>,
    targets: &TargetSet,
    reps: usize,
    seed: u64,
) -> Result<MeanStd> {
    if reps < 2 {
        return Err(OpgError::InvalidParameter("bootstrap needs reps >= 2".into()));
    }
    let errors = run_reps(reps, |rep| {
        let s = rep_seed(seed, rep);
        let sample = resample_graders(data, &mut ChaCha8Rng::seed_from_u64(s))?;
        evaluate(targets, &fit_seeded(method, &sample, cfg, s)?.ranking)
    })?;
    Ok(MeanStd::of(&errors))
}

/// Split the graders into two random halves, fit each, break ties at random
/// and score one half's ranking against the other's; repeated `partitions`
/// times.
pub fn self_consistency<T: Scalar>(
    data: &Dataset<T>,
    method: Method,
    cfg: &FitConfig<T>,
    partitions: usize,
    seed: u64,
) -> Result<MeanStd> {
    if data.feedback.len() < 2 {
        return Err(OpgError::InvalidParameter("self-consistency needs at least 2 graders".into()));
    }
    if partitions == 0 {
        return Err(OpgError::InvalidParameter("partitions must be >= 1".into()));
    }
    let errors = run_reps(partitions, |rep| {
        let s = rep_seed(seed, rep);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut ids: Vec<GraderId> = data.feedback.iter().map(|f| f.grader.clone()).collect();
        ids.shuffle(&mut rng);
        let half = ids.len() / 2;
        let a: HashSet<GraderId> = ids[..half].iter().cloned().collect();
        let b: HashSet<GraderId> = ids[half..].iter().cloned().collect();
        let ra = fit_seeded(method, &data.with_graders(&a), cfg, s)?.ranking.break_ties(&mut rng);
        let rb = fit_seeded(method, &data.with_graders(&b), cfg, s)?.ranking.break_ties(&mut rng);
        evaluate(&TargetSet::single(ra), &rb)
    })?;
    Ok(MeanStd::of(&errors))
}

/// Random subsample of `data` at one downsampling level.
fn downsample<T: Scalar, R: Rng + ?Sized>(data: &Dataset<T>, axis: Axis, level: usize, rng: &mut R) -> Result<Dataset<T>> {
    match axis {
        Axis::Reviewers => {
            let keep: HashSet<GraderId> =
                data.feedback.choose_multiple(rng, level).map(|f| f.grader.clone()).collect();
            Ok(data.with_graders(&keep))
        }
        Axis::ItemsPerReviewer => {
            let mut out = data.clone();
            for fb in &mut out.feedback {
                if fb.items.len() > level {
                    let keep: HashSet<ItemId> = fb.items.choose_multiple(rng, level).cloned().collect();
                    *fb = fb.restrict(&keep);
                }
            }
            Ok(out)
        }
    }
}

/// `E_K` against `targets` at each downsampling level, `reps` subsamples per
/// level.
#[allow(clippy::too_many_arguments)]
pub fn downsample_curve<T: Scalar>(
    data: &Dataset<T>,
    method: Method,
    cfg: &FitConfig<T>,
    axis: Axis,
    levels: &[usize],
    reps: usize,
    targets: &TargetSet,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    if reps == 0 {
        return Err(OpgError::InvalidParameter("reps must be >= 1".into()));
    }
    let max = match axis {
        Axis::Reviewers => data.feedback.len(),
        Axis::ItemsPerReviewer => data.feedback.iter().map(|f| f.items.len()).max().unwrap_or(0),
    };
    if let Some(bad) = levels.iter().find(|&&l| l == 0 || l > max) {
        return Err(OpgError::InvalidParameter(format!("level {bad} outside 1..={max}")));
    }
    let mut curve = Vec::with_capacity(levels.len());
    for (li, &level) in levels.iter().enumerate() {
        let errors = run_reps(reps, |rep| {
            let s = rep_seed(seed, li * reps + rep);
            let sample = downsample(data, axis, level, &mut ChaCha8Rng::seed_from_u64(s))?;
            evaluate(targets, &fit_seeded(method, &sample, cfg, s)?.ranking)
        })?;
        curve.push(CurvePoint { level, ek: MeanStd::of(&errors) });
    }
    Ok(curve)
}

/// Number of graders flagged by default: 12.5% of them, rounded.
pub fn default_bottom_k(n_graders: usize) -> usize {
    ((n_graders as f64 * DEFAULT_BOTTOM_FRACTION).round() as usize).max(1)
}

/// The `k` graders with the largest `badness`, ties broken at random.
fn flag_worst<R: Rng + ?Sized>(badness: Vec<(GraderId, f64)>, k: usize, rng: &mut R) -> BTreeSet<GraderId> {
    let mut v = badness;
    v.shuffle(rng);
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    v.into_iter().take(k).map(|(g, _)| g).collect()
}

/// Data for one identification repetition: fresh lazy graders when
/// `n_lazy > 0`, otherwise the graders already labelled lazy.
fn with_lazy<T: Scalar>(data: &Dataset<T>, n_lazy: usize, seed: u64) -> Result<Dataset<T>> {
    let d = if n_lazy > 0 {
        let mut base = data.clone();
        base.lazy.clear();
        add_lazy_graders(&base, n_lazy, seed)?
    } else {
        data.clone()
    };
    if d.lazy.is_empty() {
        return Err(OpgError::Undefined("no lazy graders; identification rate undefined".into()));
    }
    Ok(d)
}

fn identification<T: Scalar>(
    data: &Dataset<T>,
    n_lazy: usize,
    bottom_k: Option<usize>,
    reps: usize,
    seed: u64,
    badness: impl Fn(&Dataset<T>, u64) -> Result<Vec<(GraderId, f64)>> + Sync + Send,
) -> Result<Identification> {
    if reps == 0 {
        return Err(OpgError::InvalidParameter("reps must be >= 1".into()));
    }
    let probe = with_lazy(data, n_lazy, seed)?;
    let total = probe.feedback.len();
    let k = bottom_k.unwrap_or_else(|| default_bottom_k(total));
    if k == 0 || k > total {
        return Err(OpgError::InvalidParameter(format!("bottom_k {k} outside 1..={total}")));
    }
    let per_rep = run_reps(reps, |rep| {
        let s = rep_seed(seed, rep);
        let d = with_lazy(data, n_lazy, s)?;
        let flagged = flag_worst(badness(&d, s)?, k, &mut ChaCha8Rng::seed_from_u64(s ^ 0x7ac3));
        Ok(d.lazy.iter().filter(|g| flagged.contains(*g)).count() as f64 / d.lazy.len() as f64)
    })?;
    Ok(Identification { n_lazy: probe.lazy.len(), bottom_k: k, rate: MeanStd::of(&per_rep).mean, per_rep })
}

/// Share of lazy graders among the `bottom_k` graders with the lowest
/// estimated reliability, averaged over `reps` runs with fresh lazy graders.
#[allow(clippy::too_many_arguments)]
pub fn lazy_identification<T: Scalar>(
    data: &Dataset<T>,
    method: Method,
    cfg: &FitConfig<T>,
    n_lazy: usize,
    bottom_k: Option<usize>,
    reps: usize,
    seed: u64,
) -> Result<Identification> {
    if !method.with_reliability() {
        return Err(OpgError::InvalidParameter(format!("{method} does not estimate reliabilities")));
    }
    identification(data, n_lazy, bottom_k, reps, seed, |d, s| {
        let est = fit_seeded(method, d, cfg, s)?;
        let rel = est.reliabilities.ok_or_else(|| OpgError::Undefined("no reliabilities".into()))?;
        Ok(d.feedback.iter().map(|f| (f.grader.clone(), -rel[&f.grader].as_f64())).collect())
    })
}

/// Normalized disagreement of a grader with the estimated ranking: the
/// estimated ranking restricted to the grader's items is the target and the
/// grader's feedback the prediction, so grader ties cost ½ per pair.
pub fn grader_disagreement<T: Scalar>(estimate: &WeakRanking, feedback: &GraderFeedback<T>) -> Result<f64> {
    let items: HashSet<ItemId> = feedback.items.iter().cloned().collect();
    let target = estimate.restrict_to(&items);
    let pairs = target.strict_pair_count();
    if pairs == 0 {
        return Ok(0.5);
    }
    Ok(tau_kt(&target, feedback.ordinal()?)? / pairs as f64)
}

/// Identification rate when graders are ranked by their disagreement with a
/// ranking estimated without reliabilities.
#[allow(clippy::too_many_arguments)]
pub fn lazy_identification_heuristic<T: Scalar>(
    data: &Dataset<T>,
    method: Method,
    cfg: &FitConfig<T>,
    n_lazy: usize,
    bottom_k: Option<usize>,
    reps: usize,
    seed: u64,
) -> Result<Identification> {
    let base = method.with_reliability_variant(false).unwrap_or(method);
    identification(data, n_lazy, bottom_k, reps, seed, |d, s| {
        let est = fit_seeded(base, d, cfg, s)?;
        d.feedback.iter().map(|f| Ok((f.grader.clone(), grader_disagreement(&est.ranking, f)?))).collect()
    })
}

/// `E_K(with lazy) - E_K(without lazy)` for each lazy-grader count.
pub fn robustness_delta<T: Scalar>(
    data: &Dataset<T>,
    method: Method,
    cfg: &FitConfig<T>,
    lazy_counts: &[usize],
    targets: &TargetSet,
    seed: u64,
) -> Result<Vec<RobustnessPoint>> {
    let base = evaluate(targets, &fit_seeded(method, data, cfg, seed)?.ranking)?;
    let deltas = run_reps(lazy_counts.len(), |k| {
        let n = lazy_counts[k];
        if n == 0 {
            return Ok(0.0);
        }
        let d = add_lazy_graders(data, n, seed)?;
        Ok(evaluate(targets, &fit_seeded(method, &d, cfg, seed)?.ranking)? - base)
    })?;
    Ok(lazy_counts.iter().zip(deltas).map(|(&lazy_count, delta)| RobustnessPoint { lazy_count, delta }).collect())
}

/// Wall-clock seconds per fit, sequentially, `reps` times per method.
pub fn time_methods<T: Scalar>(
    data: &Dataset<T>,
    methods: &[Method],
    cfg: &FitConfig<T>,
    reps: usize,
) -> Result<BTreeMap<Method, MeanStd>> {
    if reps == 0 {
        return Err(OpgError::InvalidParameter("reps must be >= 1".into()));
    }
    let mut out = BTreeMap::new();
    for &m in methods {
        let mut secs = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t = Instant::now();
            fit(m, data, cfg)?;
            secs.push(t.elapsed().as_secs_f64());
        }
        out.insert(m, MeanStd::of(&secs));
    }
    Ok(out)
}
