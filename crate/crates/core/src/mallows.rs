//! Mallows-model grade estimation.
//!
//! Feedback rankings may contain ties, read as indifference: the likelihood of
//! a weak ranking is the total probability of every strict order consistent
//! with it. With Kendall distance that sum factorizes over tie groups,
//!
//! ```text
//! Σ_{σ' ~ σ_g} exp(-η δ_K(c, σ')) = exp(-η X) · Π_j Z(η, |G_j|)
//! ```
//!
//! where `X` counts cross-group pairs that the centre `c` orders against the
//! feedback and `Z(η, k) = Π_{i=1..k} (1 - e^{-iη}) / (1 - e^{-η})` is the
//! Mallows normalizer. Within a tie group every permutation is allowed, so the
//! group contributes exactly one normalizer.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Estimate, OrdinalView};
use crate::error::{OpgError, Result};
use crate::optim::maximize_log10;
use crate::priors::ReliabilityPrior;
use crate::ranking::{ranking_from_scores, GraderId, ItemId, WeakRanking};
use crate::scalar::Scalar;

/// Per-grader Mallows concentrations (η); graders not listed use 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MallowsParams<T> {
    pub reliabilities: BTreeMap<GraderId, T>,
}

impl<T: Scalar> MallowsParams<T> {
    pub fn uniform() -> Self {
        Self { reliabilities: BTreeMap::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((g, _)) = self.reliabilities.iter().find(|(_, v)| !(**v > T::zero())) {
            return Err(OpgError::InvalidParameter(format!("reliability of {g} must be > 0")));
        }
        Ok(())
    }

    /// Weight of each feedback record, in dataset order.
    pub fn weights(&self, data: &Dataset<T>) -> Vec<T> {
        data.feedback
            .iter()
            .map(|f| self.reliabilities.get(&f.grader).copied().unwrap_or_else(T::one))
            .collect()
    }
}

/// Diagnostic decomposition of the Mallows log-likelihood of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MallowsLikelihoodBreakdown<T> {
    pub graders: Vec<GraderId>,
    pub per_grader: Vec<T>,
    /// Cross-group pairs each grader orders against the centre.
    pub disagreements: Vec<usize>,
    /// `Σ_j ln Z(η, |G_j|)` for each grader.
    pub tie_factor_logs: Vec<T>,
    pub total: T,
}

/// `ln Z(η, k)`.
pub fn log_mallows_normalizer<T: Scalar>(eta: T, k: usize) -> Result<T> {
    if k == 0 {
        return Err(OpgError::InvalidParameter("normalizer needs k >= 1".into()));
    }
    if !(eta > T::zero()) {
        return Err(OpgError::InvalidParameter("eta must be > 0".into()));
    }
    Ok(log_z(eta, k))
}

/// `Z(η, k)`: the sum over all `k!` orders of `exp(-η · inversions)`.
pub fn mallows_normalizer<T: Scalar>(eta: T, k: usize) -> Result<T> {
    log_mallows_normalizer(eta, k).map(T::exp)
}

#[inline]
fn log_z<T: Scalar>(eta: T, k: usize) -> T {
    // 1 - e^{-x} = -expm1(-x), accurate for small x
    let den = (-(-eta).exp_m1()).ln();
    let mut total = T::zero();
    for i in 2..=k {
        let x = eta * T::from_usize_lossy(i);
        total += (-(-x).exp_m1()).ln() - den;
    }
    total
}

/// Count of cross-group pairs ordered against the centre; `pos` is each
/// item's position in the centre order.
fn disagreements(pos: &[usize], groups: &[Vec<usize>]) -> usize {
    let mut x = 0;
    for (gi, better) in groups.iter().enumerate() {
        for worse in &groups[gi + 1..] {
            for &a in better {
                x += worse.iter().filter(|&&b| pos[b] < pos[a]).count();
            }
        }
    }
    x
}

fn tie_log_factor<T: Scalar>(eta: T, groups: &[Vec<usize>]) -> T {
    groups.iter().map(|g| log_z(eta, g.len())).sum()
}

/// Log-likelihood of one grader's weak ranking given precomputed
/// disagreement count.
#[inline]
fn grader_log_likelihood<T: Scalar>(eta: T, x: usize, groups: &[Vec<usize>], n: usize) -> T {
    -eta * T::from_usize_lossy(x) + tie_log_factor(eta, groups) - log_z(eta, n)
}

/// Log-probability of `feedback` (a weak ranking over `D_g`) under a Mallows
/// model centred on `center` with concentration `eta`.
///
/// `center` must order every item of `feedback` strictly; other items in it
/// are ignored.
pub fn mallows_log_likelihood<T: Scalar>(
    center: &WeakRanking,
    feedback: &WeakRanking,
    eta: T,
) -> Result<T> {
    if !(eta > T::zero()) {
        return Err(OpgError::InvalidParameter("eta must be > 0".into()));
    }
    if feedback.is_empty() {
        return Err(OpgError::InvalidRanking("empty feedback".into()));
    }
    let subset: std::collections::HashSet<ItemId> = feedback.items().cloned().collect();
    let restricted = center.restrict_to(&subset);
    if restricted.len() != subset.len() {
        return Err(OpgError::ItemSetMismatch);
    }
    if !restricted.is_total() {
        return Err(OpgError::TiesPresent);
    }
    let order = restricted.flatten();
    let local: HashMap<&ItemId, usize> = order.iter().enumerate().map(|(k, i)| (i, k)).collect();
    let groups: Vec<Vec<usize>> =
        feedback.groups().iter().map(|g| g.iter().map(|i| local[i]).collect()).collect();
    let pos: Vec<usize> = (0..order.len()).collect();
    Ok(grader_log_likelihood(eta, disagreements(&pos, &groups), &groups, order.len()))
}

/// Per-grader decomposition of the dataset log-likelihood around `center`.
pub fn mallows_likelihood_breakdown<T: Scalar>(
    data: &Dataset<T>,
    center: &WeakRanking,
    params: &MallowsParams<T>,
) -> Result<MallowsLikelihoodBreakdown<T>> {
    let view = data.compile_ordinal()?;
    let pos = center_positions(data, center)?;
    let weights = params.weights(data);
    let mut out = MallowsLikelihoodBreakdown {
        graders: Vec::new(),
        per_grader: Vec::new(),
        disagreements: Vec::new(),
        tie_factor_logs: Vec::new(),
        total: T::zero(),
    };
    for ((fb, groups), &eta) in data.feedback.iter().zip(&view.rankings).zip(&weights) {
        let n: usize = groups.iter().map(Vec::len).sum();
        let x = disagreements(&pos, groups);
        let ll = grader_log_likelihood(eta, x, groups, n);
        out.graders.push(fb.grader.clone());
        out.per_grader.push(ll);
        out.disagreements.push(x);
        out.tie_factor_logs.push(tie_log_factor(eta, groups));
        out.total += ll;
    }
    Ok(out)
}

/// Position of every roster item in a total `center` order.
fn center_positions<T: Scalar>(data: &Dataset<T>, center: &WeakRanking) -> Result<Vec<usize>> {
    if !center.is_total() {
        return Err(OpgError::TiesPresent);
    }
    let index = data.item_index();
    if center.len() != data.n_items() {
        return Err(OpgError::ItemSetMismatch);
    }
    let mut pos = vec![usize::MAX; data.n_items()];
    for (p, item) in center.items().enumerate() {
        let k = *index.get(item).ok_or_else(|| OpgError::UnknownItem(item.to_string()))?;
        pos[k] = p;
    }
    Ok(pos)
}

/// Items nobody graded go in a final tie group.
fn append_ungraded(ranking: &mut WeakRanking, data_items: &[ItemId], graded: &[bool]) {
    let rest: Vec<ItemId> =
        data_items.iter().zip(graded).filter(|(_, g)| !**g).map(|(i, _)| i.clone()).collect();
    if !rest.is_empty() {
        log::warn!("{} item(s) received no feedback; ranked last as a tie group", rest.len());
        ranking.push_group(rest);
    }
}

/// Greedy approximation of the Mallows maximum-likelihood ranking.
///
/// Repeatedly selects the remaining item with the smallest weighted score
/// `x_d = Σ_g η_g (#{d' above d} - #{d' below d})` over still-unranked items
/// `d'`. Ties on `x_d` go to the lexicographically smallest id.
pub fn greedy_mle_ranking<T: Scalar>(
    data: &Dataset<T>,
    params: &MallowsParams<T>,
) -> Result<WeakRanking> {
    params.validate()?;
    let view = data.compile_ordinal()?;
    let weights = params.weights(data);
    let order = greedy_order(&view, &weights, &data.items);
    let mut ranking = WeakRanking::from_order(order.iter().map(|&k| data.items[k].clone()).collect())?;
    append_ungraded(&mut ranking, &data.items, &view.graded_mask());
    Ok(ranking)
}

fn greedy_order<T: Scalar>(view: &OrdinalView, weights: &[T], ids: &[ItemId]) -> Vec<usize> {
    let w = view.preference_matrix(weights);
    let graded = view.graded_mask();
    let mut remaining: Vec<usize> = (0..view.n_items).filter(|&k| graded[k]).collect();
    // x[d] = Σ_{d' in C} w[d'][d] - w[d][d']
    let mut x: Vec<T> = (0..view.n_items)
        .map(|d| remaining.iter().map(|&o| w[o][d] - w[d][o]).sum())
        .collect();
    let scale: T = weights.iter().copied().sum::<T>().max(T::one());
    let tol = T::lit(1e-9) * scale;
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let mut best = 0;
        for k in 1..remaining.len() {
            let (c, b) = (remaining[k], remaining[best]);
            if x[c] < x[b] - tol || ((x[c] - x[b]).abs() <= tol && ids[c] < ids[b]) {
                best = k;
            }
        }
        let chosen = remaining.swap_remove(best);
        order.push(chosen);
        for &d in &remaining {
            x[d] -= w[chosen][d] - w[d][chosen];
        }
    }
    order
}

/// Borda-style approximation: items ordered by their (reliability-weighted)
/// average rank across the graders who ranked them. Equal averages tie.
pub fn borda_ranking<T: Scalar>(
    data: &Dataset<T>,
    params: &MallowsParams<T>,
) -> Result<WeakRanking> {
    params.validate()?;
    if data.feedback.is_empty() {
        return Err(OpgError::EmptyDataset);
    }
    let index = data.item_index();
    let weights = params.weights(data);
    let mut sum = vec![T::zero(); data.n_items()];
    let mut mass = vec![T::zero(); data.n_items()];
    for (fb, &eta) in data.feedback.iter().zip(&weights) {
        for (item, rank) in fb.ordinal()?.ranks() {
            let k = index[&item];
            sum[k] += eta * T::from_usize_lossy(rank);
            mass[k] += eta;
        }
    }
    let graded: Vec<bool> = mass.iter().map(|m| *m > T::zero()).collect();
    let neg_avg = (0..data.n_items())
        .filter(|&k| graded[k])
        .map(|k| (data.items[k].clone(), -(sum[k] / mass[k])));
    let mut ranking = ranking_from_scores(neg_avg, T::lit(crate::ranking::DEFAULT_TIE_EPSILON))?;
    append_ungraded(&mut ranking, &data.items, &graded);
    Ok(ranking)
}

/// Adjacent-swap hill climbing: swap neighbours whenever the weighted
/// feedback prefers the lower item, until no swap helps.
///
/// Every swap flips one pair towards its strict weighted majority and that pair
/// can never flip back, so at most `C(n, 2)` swaps happen.
pub fn local_kemenization<T: Scalar>(
    r: &WeakRanking,
    data: &Dataset<T>,
    params: &MallowsParams<T>,
) -> Result<WeakRanking> {
    params.validate()?;
    let view = data.compile_ordinal()?;
    let index = data.item_index();
    let w = view.preference_matrix(&params.weights(data));
    let mut out_groups: Vec<Vec<ItemId>> = Vec::with_capacity(r.groups().len());
    // sweep each maximal run of singleton groups; tie groups stay put
    let mut run: Vec<usize> = Vec::new();
    let flush = |run: &mut Vec<usize>, out: &mut Vec<Vec<ItemId>>| {
        kemenize_run(run, &w);
        out.extend(run.drain(..).map(|k| vec![data.items[k].clone()]));
    };
    for g in r.groups() {
        if g.len() == 1 {
            let k = *index.get(&g[0]).ok_or_else(|| OpgError::UnknownItem(g[0].to_string()))?;
            run.push(k);
        } else {
            flush(&mut run, &mut out_groups);
            out_groups.push(g.clone());
        }
    }
    flush(&mut run, &mut out_groups);
    WeakRanking::new(out_groups)
}

fn kemenize_run<T: Scalar>(order: &mut [usize], w: &[Vec<T>]) -> usize {
    let mut swaps = 0;
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..order.len().saturating_sub(1) {
            let (a, b) = (order[i], order[i + 1]);
            if w[b][a] > w[a][b] {
                order.swap(i, i + 1);
                swaps += 1;
                changed = true;
            }
        }
    }
    swaps
}

/// Total weighted number of feedback pairs that `r` (a total order) reverses.
pub fn weighted_disagreement<T: Scalar>(
    r: &WeakRanking,
    data: &Dataset<T>,
    params: &MallowsParams<T>,
) -> Result<T> {
    let pos = center_positions(data, r)?;
    let view = data.compile_ordinal()?;
    let weights = params.weights(data);
    Ok(view
        .rankings
        .iter()
        .zip(&weights)
        .map(|(g, &eta)| eta * T::from_usize_lossy(disagreements(&pos, g)))
        .sum())
}

/// Log-posterior of one grader's concentration: prior plus Mallows likelihood.
fn reliability_objective<T: Scalar>(
    prior: &ReliabilityPrior<T>,
    x: usize,
    groups: &[Vec<usize>],
    eta: T,
) -> T {
    let n: usize = groups.iter().map(Vec::len).sum();
    prior.log_density(eta) + grader_log_likelihood(eta, x, groups, n)
}

/// MAP estimate of every grader's Mallows concentration around a total
/// `center`. Graders without feedback get the prior mode.
pub fn mallows_fit_reliability<T: Scalar>(
    data: &Dataset<T>,
    center: &WeakRanking,
    prior: &ReliabilityPrior<T>,
) -> Result<BTreeMap<GraderId, T>> {
    prior.validate()?;
    let view = data.compile_ordinal()?;
    let pos = center_positions(data, center)?;
    let fitted: Vec<T> = view
        .rankings
        .par_iter()
        .map(|groups| {
            let x = disagreements(&pos, groups);
            maximize_log10(|eta: T| reliability_objective(prior, x, groups, eta), 1e-6)
        })
        .collect();
    let mut out: BTreeMap<GraderId, T> =
        data.graders.iter().map(|g| (g.clone(), prior.mode())).collect();
    for (fb, eta) in data.feedback.iter().zip(fitted) {
        out.insert(fb.grader.clone(), eta);
    }
    Ok(out)
}

/// How the Mallows centre ranking is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MallowsAlgorithm {
    Greedy,
    Borda,
}

/// Settings for a Mallows-family fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MallowsFit<T> {
    pub algorithm: MallowsAlgorithm,
    pub kemenize: bool,
    pub with_reliability: bool,
    pub iterations: usize,
    pub prior: ReliabilityPrior<T>,
}

impl<T: Scalar> MallowsFit<T> {
    pub fn new(algorithm: MallowsAlgorithm) -> Self {
        Self {
            algorithm,
            kemenize: false,
            with_reliability: false,
            iterations: 10,
            prior: ReliabilityPrior::default(),
        }
    }
}

fn centre<T: Scalar>(
    data: &Dataset<T>,
    params: &MallowsParams<T>,
    cfg: &MallowsFit<T>,
) -> Result<WeakRanking> {
    let r = match cfg.algorithm {
        MallowsAlgorithm::Greedy => greedy_mle_ranking(data, params)?,
        MallowsAlgorithm::Borda => borda_ranking(data, params)?,
    };
    if cfg.kemenize {
        local_kemenization(&r, data, params)
    } else {
        Ok(r)
    }
}

/// Fit the Mallows family: greedy or Borda centre, optional local
/// Kemenization, optionally alternating with reliability estimation.
pub fn fit_mallows<T: Scalar>(data: &Dataset<T>, cfg: &MallowsFit<T>) -> Result<Estimate<T>> {
    let mut params = MallowsParams::uniform();
    let mut ranking = centre(data, &params, cfg)?;
    let mut notes = Vec::new();
    if cfg.with_reliability {
        for _ in 0..cfg.iterations {
            // the likelihood needs a strict centre; ties are resolved by id
            let strict = ranking.break_ties_by_id();
            params.reliabilities = mallows_fit_reliability(data, &strict, &cfg.prior)?;
            ranking = centre(data, &params, cfg)?;
        }
        notes.push(format!("alternating iterations: {}", cfg.iterations));
    }
    let mut est = Estimate::from_ranking(ranking);
    if cfg.with_reliability {
        est.reliabilities = Some(params.reliabilities);
    }
    est.notes = notes;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GraderFeedback;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ids(v: &[&str]) -> Vec<ItemId> {
        v.iter().map(|&s| s.into()).collect()
    }

    fn strict(v: &[&str]) -> WeakRanking {
        WeakRanking::from_order(ids(v)).unwrap()
    }

    fn dataset(rankings: Vec<WeakRanking>) -> Dataset<f64> {
        let mut items: Vec<ItemId> = rankings.iter().flat_map(|r| r.flatten()).collect();
        items.sort();
        items.dedup();
        let graders: Vec<GraderId> =
            (0..rankings.len()).map(|k| GraderId::from(format!("g{k}").as_str())).collect();
        let fb = rankings
            .into_iter()
            .zip(&graders)
            .map(|(r, g)| GraderFeedback::from_ordinal(g.clone(), r).unwrap())
            .collect();
        Dataset::new(items, graders, fb).unwrap()
    }

    #[test]
    fn normalizer_examples() {
        assert_relative_eq!(mallows_normalizer(1.0f64, 1).unwrap(), 1.0);
        assert_relative_eq!(mallows_normalizer(1.0f64, 2).unwrap(), 1.367_879_441_171_442, epsilon = 1e-12);
        assert_relative_eq!(mallows_normalizer(1.0f64, 3).unwrap(), 2.056_216_517_183_974, epsilon = 1e-12);
        assert!(mallows_normalizer(1.0f64, 0).is_err());
        assert!(mallows_normalizer(0.0f64, 3).is_err());
    }

    #[test]
    fn normalizer_matches_enumeration() {
        for &eta in &[0.1, 1.0, 3.0] {
            for k in 1..=6 {
                let brute = opg_oracle::mallows_normalizer(eta, k);
                assert_relative_eq!(mallows_normalizer(eta, k).unwrap(), brute, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn normalizer_in_f32() {
        let z = mallows_normalizer(1.0f32, 3).unwrap();
        assert!((z - 2.056_216_5).abs() < 1e-5);
    }

    #[test]
    fn likelihood_examples() {
        let center = strict(&["a", "b", "c"]);
        let all_tied = WeakRanking::all_tied(ids(&["a", "b", "c"])).unwrap();
        assert_relative_eq!(mallows_log_likelihood(&center, &all_tied, 1.0f64).unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(
            mallows_log_likelihood(&center, &center, 1.0f64).unwrap(),
            -0.720_867_651_962_603,
            epsilon = 1e-12
        );
        // {a,b} tied over c: consistent orders abc and bac, distances 0 and 1
        let fb = WeakRanking::new(vec![ids(&["a", "b"]), ids(&["c"])]).unwrap();
        let z3 = opg_oracle::mallows_normalizer(1.0, 3);
        let expected = ((1.0 + (-1f64).exp()) / z3).ln();
        assert_relative_eq!(mallows_log_likelihood(&center, &fb, 1.0f64).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn likelihood_requires_strict_center() {
        let center = WeakRanking::new(vec![ids(&["a", "b"]), ids(&["c"])]).unwrap();
        assert_eq!(
            mallows_log_likelihood(&center, &strict(&["a", "b"]), 1.0f64),
            Err(OpgError::TiesPresent)
        );
    }

    #[test]
    fn greedy_examples() {
        let d = dataset(vec![strict(&["a", "b", "c"])]);
        assert_eq!(greedy_mle_ranking(&d, &MallowsParams::uniform()).unwrap(), strict(&["a", "b", "c"]));
        let d = dataset(vec![strict(&["c", "a", "b"]), strict(&["c", "a", "b"])]);
        assert_eq!(greedy_mle_ranking(&d, &MallowsParams::uniform()).unwrap(), strict(&["c", "a", "b"]));
    }

    #[test]
    fn greedy_matches_kemeny_majority() {
        let d = dataset(vec![strict(&["a", "b", "c"]), strict(&["a", "b", "c"]), strict(&["b", "c", "a"])]);
        let greedy = greedy_mle_ranking(&d, &MallowsParams::uniform()).unwrap();
        // items are a=0, b=1, c=2
        let fb: Vec<opg_oracle::WeightedRanking> = vec![
            (1.0, vec![vec![0], vec![1], vec![2]]),
            (1.0, vec![vec![0], vec![1], vec![2]]),
            (1.0, vec![vec![1], vec![2], vec![0]]),
        ];
        let (_, optima) = opg_oracle::kemeny(3, &fb);
        assert_eq!(optima, vec![vec![0, 1, 2]]);
        assert_eq!(greedy, strict(&["a", "b", "c"]));
    }

    #[test]
    fn greedy_tie_break_is_lexicographic() {
        let d = dataset(vec![strict(&["b", "a"]), strict(&["a", "b"])]);
        assert_eq!(greedy_mle_ranking(&d, &MallowsParams::uniform()).unwrap(), strict(&["a", "b"]));
    }

    #[test]
    fn ungraded_items_go_last_as_tie_group() {
        let mut d = dataset(vec![strict(&["b", "a"])]);
        d.items.push("y".into());
        d.items.push("x".into());
        let r = greedy_mle_ranking(&d, &MallowsParams::uniform()).unwrap();
        assert_eq!(r.groups().last().unwrap(), &ids(&["y", "x"]));
        let r = borda_ranking(&d, &MallowsParams::uniform()).unwrap();
        assert_eq!(r.groups().len(), 3);
    }

    #[test]
    fn borda_examples() {
        let p = MallowsParams::uniform();
        assert_eq!(borda_ranking(&dataset(vec![strict(&["a", "b", "c"])]), &p).unwrap(), strict(&["a", "b", "c"]));
        let d = dataset(vec![strict(&["a", "b"]), strict(&["b", "a"])]);
        assert_eq!(borda_ranking(&d, &p).unwrap().into_groups(), vec![ids(&["a", "b"])]);
        let d = dataset(vec![strict(&["a", "b", "c"]), strict(&["b", "a", "c"])]);
        assert_eq!(borda_ranking(&d, &p).unwrap().into_groups(), vec![ids(&["a", "b"]), ids(&["c"])]);
    }

    #[test]
    fn kemenization_examples() {
        let p = MallowsParams::uniform();
        let d = dataset(vec![strict(&["a", "b"]), strict(&["a", "b"])]);
        assert_eq!(local_kemenization(&strict(&["b", "a"]), &d, &p).unwrap(), strict(&["a", "b"]));
        assert_eq!(local_kemenization(&strict(&["a", "b"]), &d, &p).unwrap(), strict(&["a", "b"]));
        let d = dataset(vec![strict(&["a", "b", "c"]); 3]);
        assert_eq!(local_kemenization(&strict(&["c", "b", "a"]), &d, &p).unwrap(), strict(&["a", "b", "c"]));
    }

    #[test]
    fn reliability_examples() {
        let center = strict(&["a", "b", "c", "d"]);
        let prior = ReliabilityPrior::<f64>::default();
        let d = dataset(vec![strict(&["a", "b", "c", "d"]), strict(&["d", "c", "b", "a"])]);
        let eta = mallows_fit_reliability(&d, &center, &prior).unwrap();
        assert!(eta[&GraderId::from("g0")] > eta[&GraderId::from("g1")]);

        let d = dataset(vec![WeakRanking::all_tied(ids(&["a", "b", "c", "d"])).unwrap()]);
        let eta = mallows_fit_reliability(&d, &center, &prior).unwrap();
        assert_relative_eq!(eta[&GraderId::from("g0")], 0.9, max_relative = 1e-5);
    }

    #[test]
    fn reliability_matches_grid_search() {
        let center = strict(&["a", "b", "c", "d"]);
        let prior = ReliabilityPrior::<f64>::default();
        let d = dataset(vec![strict(&["b", "a", "c", "d"])]);
        let got = mallows_fit_reliability(&d, &center, &prior).unwrap()[&GraderId::from("g0")];
        // one inversion among four items
        let objective = |eta: f64| {
            let ll = (-eta * 1.0f64).exp().ln() - opg_oracle::mallows_normalizer(eta, 4).ln();
            9.0 * eta.ln() - eta / 0.1 + ll
        };
        let oracle = opg_oracle::grid_argmax_log(objective, 1e-3, 1e3);
        assert_relative_eq!(got, oracle, max_relative = 1e-4);
    }

    #[test]
    fn identical_graders_share_reliability() {
        let d = dataset(vec![strict(&["a", "c", "b", "d"]); 4]);
        let center = strict(&["a", "b", "c", "d"]);
        let eta = mallows_fit_reliability(&d, &center, &ReliabilityPrior::default()).unwrap();
        let vals: Vec<f64> = eta.values().copied().collect();
        assert!(vals.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn fit_with_reliability_reports_all_graders() {
        let d = dataset(vec![strict(&["a", "b", "c"]), strict(&["a", "c", "b"]), strict(&["c", "b", "a"])]);
        let mut cfg = MallowsFit::new(MallowsAlgorithm::Greedy);
        cfg.with_reliability = true;
        cfg.kemenize = true;
        let est = fit_mallows(&d, &cfg).unwrap();
        assert_eq!(est.reliabilities.unwrap().len(), 3);
        assert!(est.ranking.is_total());
    }

    fn random_weak(items: &[usize], seed: u64) -> Vec<Vec<usize>> {
        use rand::{seq::SliceRandom, Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v = items.to_vec();
        v.shuffle(&mut rng);
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (k, i) in v.into_iter().enumerate() {
            if k == 0 || rng.random_bool(0.5) {
                groups.push(vec![i]);
            } else {
                groups.last_mut().unwrap().push(i);
            }
        }
        groups
    }

    proptest! {
        #[test]
        fn likelihood_matches_enumeration(k in 1usize..=6, seed in any::<u64>(), eta_pick in 0usize..3) {
            let eta = [0.1, 1.0, 3.0][eta_pick];
            let items: Vec<usize> = (0..k).collect();
            let groups = random_weak(&items, seed);
            let center_order = random_weak(&items, seed ^ 0x9e37).into_iter().flatten().collect::<Vec<_>>();
            let name = |i: &usize| ItemId::from(format!("i{i}").as_str());
            let center = WeakRanking::from_order(center_order.iter().map(name).collect()).unwrap();
            let fb = WeakRanking::new(groups.iter().map(|g| g.iter().map(name).collect()).collect()).unwrap();
            let got = mallows_log_likelihood(&center, &fb, eta).unwrap();
            let brute = opg_oracle::mallows_log_likelihood(&center_order, &groups, eta);
            prop_assert!((got - brute).abs() <= 1e-9 * brute.abs().max(1.0));
        }

        #[test]
        fn greedy_invariant_to_common_scaling(seed in any::<u64>(), c in 0.01f64..100.0) {
            let items: Vec<&str> = vec!["a", "b", "c", "d", "e"];
            let mut rankings = vec![];
            for g in 0..4u64 {
                let groups = random_weak(&[0, 1, 2, 3, 4], seed.wrapping_add(g));
                rankings.push(WeakRanking::new(groups.iter().map(|gr| gr.iter().map(|&i| ItemId::from(items[i])).collect()).collect()).unwrap());
            }
            let d = dataset(rankings);
            let base: BTreeMap<GraderId, f64> = d.graders.iter().enumerate().map(|(k, g)| (g.clone(), 0.5 + k as f64)).collect();
            let scaled: BTreeMap<GraderId, f64> = base.iter().map(|(g, v)| (g.clone(), v * c)).collect();
            let r1 = greedy_mle_ranking(&d, &MallowsParams { reliabilities: base }).unwrap();
            let r2 = greedy_mle_ranking(&d, &MallowsParams { reliabilities: scaled }).unwrap();
            prop_assert_eq!(r1, r2);
        }

        #[test]
        fn kemenization_never_increases_disagreement(seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let names = ["a", "b", "c", "d", "e", "f"];
            let mut rankings = vec![];
            for g in 0..5u64 {
                let groups = random_weak(&[0, 1, 2, 3, 4, 5], seed.wrapping_mul(31).wrapping_add(g));
                rankings.push(WeakRanking::new(groups.iter().map(|gr| gr.iter().map(|&i| ItemId::from(names[i])).collect()).collect()).unwrap());
            }
            let d = dataset(rankings);
            let p = MallowsParams::uniform();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut start = ids(&names);
            start.shuffle(&mut rng);
            let start = WeakRanking::from_order(start).unwrap();
            let out = local_kemenization(&start, &d, &p).unwrap();
            let before = weighted_disagreement(&start, &d, &p).unwrap();
            let after = weighted_disagreement(&out, &d, &p).unwrap();
            prop_assert!(after <= before);
            // no adjacent swap improves the result
            let again = local_kemenization(&out, &d, &p).unwrap();
            prop_assert_eq!(again, out);
        }
    }

    #[test]
    fn kemenization_swap_bound() {
        let w = vec![vec![0.0, 1.0, 1.0, 1.0], vec![0.0, 0.0, 1.0, 1.0], vec![0.0, 0.0, 0.0, 1.0], vec![0.0; 4]];
        let mut order = vec![3, 2, 1, 0];
        let swaps = kemenize_run(&mut order, &w);
        assert_eq!(order, vec![0, 1, 2, 3]);
        assert!(swaps <= 6);
    }
}
