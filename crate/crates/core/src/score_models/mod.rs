//! Score-based MAP estimators for ordinal feedback: score-weighted Mallows,
//! Bradley-Terry, Thurstone and Plackett-Luce, each optionally with per-grader
//! reliabilities (`+G`).
//!
//! Every model has a N(0, 9) prior on scores. A `+G` fit first fits scores
//! with all reliabilities at 1, then alternates a reliability step and a score
//! step.

mod pairwise;
mod plackett_luce;
mod score_mallows;

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Estimate};
use crate::error::{OpgError, Result};
use crate::mallows::{greedy_mle_ranking, MallowsParams};
use crate::optim::{maximize_log10, minimize, SgdConfig, SumObjective};
use crate::priors::{ReliabilityPrior, ScorePrior};
use crate::ranking::{extract_preferences, GraderId, ItemId, DEFAULT_TIE_EPSILON};
use crate::scalar::Scalar;

pub use pairwise::{bt_pair_probability, thurstone_pair_probability};
pub use plackett_luce::pl_ranking_log_probability;
pub use score_mallows::{mals_log_likelihood, DEFAULT_ENUMERATION_CAP, MAX_ENUMERATION_CAP};

use score_mallows::MalsTerm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreModel {
    ScoreMallows,
    BradleyTerry,
    Thurstone,
    PlackettLuce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScoreFitConfig<T> {
    pub sgd: SgdConfig<T>,
    pub prior: ScorePrior<T>,
    pub reliability_prior: ReliabilityPrior<T>,
    pub with_reliability: bool,
    /// Largest grader subset the score-weighted Mallows model enumerates.
    pub enumeration_cap: usize,
    pub tie_epsilon: T,
}

impl<T: Scalar> Default for ScoreFitConfig<T> {
    fn default() -> Self {
        Self {
            sgd: SgdConfig::default(),
            prior: ScorePrior::default(),
            reliability_prior: ReliabilityPrior::default(),
            with_reliability: false,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            tie_epsilon: T::lit(DEFAULT_TIE_EPSILON),
        }
    }
}

/// Negative log-posterior at a point, with its gradients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Objective<T> {
    pub value: T,
    pub score_gradient: BTreeMap<ItemId, T>,
    pub reliability_gradient: BTreeMap<GraderId, T>,
}

#[derive(Clone, Debug)]
enum Term {
    Pairs(Vec<(usize, usize)>),
    Order(Vec<usize>),
    Mals(MalsTerm),
}

/// A dataset compiled for one score model.
#[derive(Clone, Debug)]
pub struct ScoreProblem<T> {
    model: ScoreModel,
    items: Vec<ItemId>,
    graders: Vec<GraderId>,
    terms: Vec<Term>,
    prior: ScorePrior<T>,
    reliability_prior: ReliabilityPrior<T>,
    ties_broken: usize,
}

impl<T: Scalar> ScoreProblem<T> {
    /// Compile the ordinal feedback of `data`. Plackett-Luce resolves ties
    /// with an RNG seeded from `cfg.sgd.seed`.
    pub fn new(model: ScoreModel, data: &Dataset<T>, cfg: &ScoreFitConfig<T>) -> Result<Self> {
        cfg.prior.validate()?;
        cfg.reliability_prior.validate()?;
        let view = data.compile_ordinal()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.sgd.seed);
        let mut ties_broken = 0;
        let mut terms = Vec::with_capacity(data.feedback.len());
        for (fb, groups) in data.feedback.iter().zip(&view.rankings) {
            let term = match model {
                ScoreModel::BradleyTerry | ScoreModel::Thurstone => {
                    let r = crate::ranking::WeakRanking::new(groups.clone())?;
                    Term::Pairs(extract_preferences(&r).into_iter().map(|p| (p.better, p.worse)).collect())
                }
                ScoreModel::PlackettLuce => {
                    let r = crate::ranking::WeakRanking::new(groups.clone())?;
                    if !r.is_total() {
                        ties_broken += 1;
                    }
                    Term::Order(r.break_ties(&mut rng).flatten())
                }
                ScoreModel::ScoreMallows => Term::Mals(MalsTerm::new(fb.grader.as_str(), groups, cfg.enumeration_cap)?),
            };
            terms.push(term);
        }
        Ok(Self {
            model,
            items: data.items.clone(),
            graders: data.feedback.iter().map(|f| f.grader.clone()).collect(),
            terms,
            prior: cfg.prior,
            reliability_prior: cfg.reliability_prior,
            ties_broken,
        })
    }

    pub fn model(&self) -> ScoreModel {
        self.model
    }

    /// Graders with feedback, in term order.
    pub fn graders(&self) -> &[GraderId] {
        &self.graders
    }

    /// `-ln P(feedback of term k)`; accumulates the score gradient into
    /// `grad` when given and returns `(value, d/dη)`.
    fn term_neg_log(&self, k: usize, s: &[T], eta: T, mut grad: Option<&mut [T]>) -> (T, T) {
        match &self.terms[k] {
            Term::Pairs(pairs) => {
                let f = match self.model {
                    ScoreModel::Thurstone => pairwise::thurstone_neg_log::<T>,
                    _ => pairwise::bt_neg_log::<T>,
                };
                let (mut value, mut d_eta) = (T::zero(), T::zero());
                for &(i, j) in pairs {
                    let (v, ds, de) = f(s[i] - s[j], eta);
                    value += v;
                    d_eta += de;
                    if let Some(g) = grad.as_deref_mut() {
                        g[i] += ds;
                        g[j] -= ds;
                    }
                }
                (value, d_eta)
            }
            Term::Order(order) => plackett_luce::neg_log(order, s, eta, grad),
            Term::Mals(t) => t.neg_log(s, eta, grad),
        }
    }

    /// Negative log-likelihood plus score prior, at fixed reliabilities.
    fn score_objective(&self, s: &[T], etas: &[T], grad: &mut [T]) -> T {
        let n = s.len();
        let per_term: Vec<(T, Vec<T>)> = if matches!(self.model, ScoreModel::ScoreMallows) {
            (0..self.terms.len())
                .into_par_iter()
                .map(|k| {
                    let mut g = vec![T::zero(); n];
                    let (v, _) = self.term_neg_log(k, s, etas[k], Some(&mut g));
                    (v, g)
                })
                .collect()
        } else {
            Vec::new()
        };
        grad.iter_mut().for_each(|g| *g = T::zero());
        let mut value = T::zero();
        if per_term.is_empty() {
            for k in 0..self.terms.len() {
                value += self.term_neg_log(k, s, etas[k], Some(grad)).0;
            }
        } else {
            // fixed reduction order keeps the parallel result bit-identical
            for (v, g) in per_term {
                value += v;
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
        for (si, gi) in s.iter().zip(grad.iter_mut()) {
            let (pv, pd) = self.prior.neg_log(*si);
            value += pv;
            *gi += pd;
        }
        value
    }

    /// Full negative log-posterior, including the reliability prior, with
    /// gradients in every score and every reliability.
    pub fn objective(&self, scores: &BTreeMap<ItemId, T>, reliabilities: &BTreeMap<GraderId, T>) -> Result<Objective<T>> {
        let mut s = Vec::with_capacity(self.items.len());
        for i in &self.items {
            let v = *scores.get(i).ok_or_else(|| OpgError::UnknownItem(i.to_string()))?;
            if !v.is_finite() {
                return Err(OpgError::NonFiniteScore(i.to_string()));
            }
            s.push(v);
        }
        let etas = self.etas_from(reliabilities)?;
        let mut grad = vec![T::zero(); s.len()];
        let mut value = self.score_objective(&s, &etas, &mut grad);
        let mut reliability_gradient = BTreeMap::new();
        for (k, g) in self.graders.iter().enumerate() {
            let (_, d_eta) = self.term_neg_log(k, &s, etas[k], None);
            value -= self.reliability_prior.log_density(etas[k]);
            reliability_gradient.insert(g.clone(), d_eta - self.reliability_prior.d_log_density(etas[k]));
        }
        Ok(Objective {
            value,
            score_gradient: self.items.iter().cloned().zip(grad).collect(),
            reliability_gradient,
        })
    }

    fn etas_from(&self, reliabilities: &BTreeMap<GraderId, T>) -> Result<Vec<T>> {
        self.graders
            .iter()
            .map(|g| {
                let v = reliabilities.get(g).copied().unwrap_or_else(T::one);
                if v > T::zero() {
                    Ok(v)
                } else {
                    Err(OpgError::InvalidParameter(format!("reliability of {g} must be > 0")))
                }
            })
            .collect()
    }

    /// MAP reliabilities at fixed scores, one 1-D problem per grader.
    fn fit_reliabilities(&self, s: &[T]) -> Vec<T> {
        (0..self.terms.len())
            .into_par_iter()
            .map(|k| {
                maximize_log10(
                    |eta: T| self.reliability_prior.log_density(eta) - self.term_neg_log(k, s, eta, None).0,
                    1e-6,
                )
            })
            .collect()
    }
}

struct ScoreStep<'a, T> {
    problem: &'a ScoreProblem<T>,
    etas: &'a [T],
}

impl<T: Scalar> SumObjective<T> for ScoreStep<'_, T> {
    fn dim(&self) -> usize {
        self.problem.items.len()
    }

    fn n_terms(&self) -> usize {
        self.problem.terms.len()
    }

    fn add_term_gradient(&self, k: usize, x: &[T], grad: &mut [T]) {
        self.problem.term_neg_log(k, x, self.etas[k], Some(grad));
        let share = T::one() / T::from_usize_lossy(self.n_terms());
        for (xi, gi) in x.iter().zip(grad.iter_mut()) {
            *gi += share * self.problem.prior.neg_log(*xi).1;
        }
    }

    fn value_and_gradient(&self, x: &[T], grad: &mut [T]) -> T {
        self.problem.score_objective(x, self.etas, grad)
    }
}

impl<T: Scalar> ScoreProblem<T> {
    /// Minimize the negative log-posterior over the scores from `start`
    /// (in dataset item order) with every reliability fixed at 1. Returns the
    /// scores and the objective value.
    pub fn minimize_scores(&self, start: Vec<T>, sgd: &SgdConfig<T>) -> Result<(Vec<T>, T)> {
        sgd.validate()?;
        if start.len() != self.items.len() {
            return Err(OpgError::InvalidParameter("start point does not match the item count".into()));
        }
        let etas = vec![T::one(); self.terms.len()];
        let out = minimize(&ScoreStep { problem: self, etas: &etas }, start, sgd);
        Ok((out.x, out.value))
    }
}

/// Fit a score model by MAP, alternating with reliability estimation when
/// `cfg.with_reliability` is set.
pub fn fit_score_model<T: Scalar>(model: ScoreModel, data: &Dataset<T>, cfg: &ScoreFitConfig<T>) -> Result<Estimate<T>> {
    cfg.sgd.validate()?;
    let problem = ScoreProblem::new(model, data, cfg)?;
    let n = data.n_items();
    let x0 = match model {
        ScoreModel::ScoreMallows => scaled_greedy_start(data)?,
        _ => vec![T::zero(); n],
    };
    let mut etas = vec![T::one(); problem.terms.len()];
    let mut x = minimize(&ScoreStep { problem: &problem, etas: &etas }, x0, &cfg.sgd).x;
    if cfg.with_reliability {
        for _ in 0..cfg.sgd.alternating_iterations {
            etas = problem.fit_reliabilities(&x);
            x = minimize(&ScoreStep { problem: &problem, etas: &etas }, x, &cfg.sgd).x;
        }
    }
    let ungraded = data.ungraded_items();
    if !ungraded.is_empty() {
        log::warn!("{} item(s) received no feedback; their scores stay at the prior mean", ungraded.len());
    }
    let scores: BTreeMap<ItemId, T> = data.items.iter().cloned().zip(x).collect();
    let mut est = Estimate::from_scores(scores, cfg.tie_epsilon)?;
    if cfg.with_reliability {
        let mut rel: BTreeMap<GraderId, T> =
            data.graders.iter().map(|g| (g.clone(), cfg.reliability_prior.mode())).collect();
        rel.extend(problem.graders.iter().cloned().zip(etas));
        est.reliabilities = Some(rel);
        est.notes.push(format!("alternating iterations: {}", cfg.sgd.alternating_iterations));
    }
    if problem.ties_broken > 0 {
        est.notes.push(format!(
            "ties in {} ranking(s) broken at random (seed {}) before the Plackett-Luce fit",
            problem.ties_broken, cfg.sgd.seed
        ));
    }
    Ok(est)
}

/// Greedy Mallows ranking mapped to equally spaced scores in `[-0.1, 0.1]`,
/// best first.
fn scaled_greedy_start<T: Scalar>(data: &Dataset<T>) -> Result<Vec<T>> {
    let r = greedy_mle_ranking(data, &MallowsParams::uniform())?;
    let n = data.n_items();
    let mut pos: HashMap<&ItemId, usize> = HashMap::new();
    for (p, i) in r.items().enumerate() {
        pos.insert(i, p);
    }
    let denom = T::from_usize_lossy(n.saturating_sub(1).max(1));
    Ok(data
        .items
        .iter()
        .map(|i| {
            let p = T::from_usize_lossy(pos[i]);
            T::lit(0.1) * (T::one() - T::lit(2.0) * p / denom)
        })
        .collect())
}
