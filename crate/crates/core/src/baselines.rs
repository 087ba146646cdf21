//! Cardinal baselines: per-item score averaging (SCAVG) and the normal
//! cardinal-score model (NCS), optionally with per-grader bias and
//! reliability (NCS+G).
//!
//! NCS+G observes `y_dg ~ N(s_d + b_g, 1/η_g)` with priors
//! `s_d ~ N(μ0, 1/γ0)`, `b_g ~ N(0, 1/γ1)` and `η_g ~ Gamma(α0, β0)` (β0 a
//! scale), and is fitted by coordinate ascent on the log-posterior. Every
//! conditional maximizer is closed form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Estimate};
use crate::error::{OpgError, Result};
use crate::ranking::{GraderId, ItemId};
use crate::scalar::Scalar;
use crate::{RELIABILITY_MAX, RELIABILITY_MIN};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NcsHyperparams<T> {
    /// Prior score mean; `None` uses the grand mean of all grades.
    pub mu0: Option<T>,
    pub gamma0: T,
    pub alpha0: T,
    pub beta0: T,
    pub gamma1: T,
}

impl<T: Scalar> Default for NcsHyperparams<T> {
    fn default() -> Self {
        Self { mu0: None, gamma0: T::lit(0.1), alpha0: T::lit(10.0), beta0: T::lit(0.1), gamma1: T::one() }
    }
}

impl<T: Scalar> NcsHyperparams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.gamma0, self.alpha0, self.beta0, self.gamma1].iter().all(|v| *v > T::zero());
        if !positive {
            return Err(OpgError::InvalidParameter("NCS precisions and Gamma parameters must be > 0".into()));
        }
        if let Some(m) = self.mu0 {
            if !m.is_finite() {
                return Err(OpgError::InvalidParameter("mu0 must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Cardinal observations as `(item, grader, grade)` index triples.
struct Observations<T> {
    n_items: usize,
    graders: Vec<GraderId>,
    obs: Vec<(usize, usize, T)>,
}

impl<T: Scalar> Observations<T> {
    fn new(data: &Dataset<T>) -> Result<Self> {
        if data.feedback.is_empty() {
            return Err(OpgError::EmptyDataset);
        }
        let index = data.item_index();
        let mut obs = Vec::new();
        let mut graders = Vec::with_capacity(data.feedback.len());
        for (g, fb) in data.feedback.iter().enumerate() {
            graders.push(fb.grader.clone());
            for (item, y) in fb.cardinal()? {
                obs.push((index[item], g, *y));
            }
        }
        Ok(Self { n_items: data.n_items(), graders, obs })
    }

    fn grand_mean(&self) -> T {
        self.obs.iter().map(|o| o.2).sum::<T>() / T::from_usize_lossy(self.obs.len().max(1))
    }

    fn per_item_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_items];
        for &(d, _, _) in &self.obs {
            c[d] += 1;
        }
        c
    }
}

fn warn_ungraded(counts: &[usize]) {
    let missing = counts.iter().filter(|c| **c == 0).count();
    if missing > 0 {
        log::warn!("{missing} item(s) received no grades");
    }
}

/// Per-item mean of the observed grades; items nobody graded are left out.
pub fn scavg<T: Scalar>(data: &Dataset<T>, tie_epsilon: T) -> Result<Estimate<T>> {
    let o = Observations::new(data)?;
    let mut sum = vec![T::zero(); o.n_items];
    let counts = o.per_item_counts();
    for &(d, _, y) in &o.obs {
        sum[d] += y;
    }
    warn_ungraded(&counts);
    let scores: BTreeMap<ItemId, T> = data
        .items
        .iter()
        .zip(sum.iter().zip(&counts))
        .filter(|(_, (_, c))| **c > 0)
        .map(|(i, (s, c))| (i.clone(), *s / T::from_usize_lossy(*c)))
        .collect();
    Estimate::from_scores(scores, tie_epsilon)
}

/// NCS fit: the estimate plus the bias of each grader (NCS+G only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NcsFit<T> {
    pub estimate: Estimate<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biases: Option<BTreeMap<GraderId, T>>,
}

/// Unknowns of the NCS+G model, indexed like the dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct NcsState<T> {
    pub scores: Vec<T>,
    pub biases: Vec<T>,
    pub reliabilities: Vec<T>,
}

struct Ncs<'a, T> {
    o: &'a Observations<T>,
    hp: NcsHyperparams<T>,
    mu0: T,
}

impl<T: Scalar> Ncs<'_, T> {
    fn update_scores(&self, st: &mut NcsState<T>) {
        let mut num = vec![self.hp.gamma0 * self.mu0; self.o.n_items];
        let mut den = vec![self.hp.gamma0; self.o.n_items];
        for &(d, g, y) in &self.o.obs {
            let eta = st.reliabilities[g];
            num[d] += eta * (y - st.biases[g]);
            den[d] += eta;
        }
        for d in 0..self.o.n_items {
            st.scores[d] = num[d] / den[d];
        }
    }

    fn update_biases(&self, st: &mut NcsState<T>) {
        let g_n = st.biases.len();
        let mut resid = vec![T::zero(); g_n];
        let mut count = vec![T::zero(); g_n];
        for &(d, g, y) in &self.o.obs {
            resid[g] += y - st.scores[d];
            count[g] += T::one();
        }
        for g in 0..g_n {
            let eta = st.reliabilities[g];
            st.biases[g] = eta * resid[g] / (self.hp.gamma1 + eta * count[g]);
        }
    }

    fn update_reliabilities(&self, st: &mut NcsState<T>) {
        let g_n = st.biases.len();
        let mut sq = vec![T::zero(); g_n];
        let mut count = vec![T::zero(); g_n];
        for &(d, g, y) in &self.o.obs {
            let r = y - st.scores[d] - st.biases[g];
            sq[g] += r * r;
            count[g] += T::one();
        }
        let half = T::lit(0.5);
        for g in 0..g_n {
            let a = self.hp.alpha0 - T::one() + half * count[g];
            let b = T::one() / self.hp.beta0 + half * sq[g];
            let eta = if a > T::zero() { a / b } else { T::zero() };
            st.reliabilities[g] = eta.max(T::lit(RELIABILITY_MIN)).min(T::lit(RELIABILITY_MAX));
        }
    }

    /// Shift scores up and biases down by the constant that maximizes the
    /// priors; the likelihood is unchanged by this move.
    fn update_translation(&self, st: &mut NcsState<T>) {
        let n = T::from_usize_lossy(st.scores.len());
        let g = T::from_usize_lossy(st.biases.len());
        let ds: T = st.scores.iter().map(|s| *s - self.mu0).sum();
        let db: T = st.biases.iter().copied().sum();
        let c = (self.hp.gamma1 * db - self.hp.gamma0 * ds) / (self.hp.gamma0 * n + self.hp.gamma1 * g);
        st.scores.iter_mut().for_each(|s| *s += c);
        st.biases.iter_mut().for_each(|b| *b -= c);
    }

    /// Log-posterior up to a constant.
    fn log_posterior(&self, st: &NcsState<T>) -> T {
        let half = T::lit(0.5);
        let mut lp = T::zero();
        for &(d, g, y) in &self.o.obs {
            let r = y - st.scores[d] - st.biases[g];
            let eta = st.reliabilities[g];
            lp += half * eta.ln() - half * eta * r * r;
        }
        for s in &st.scores {
            lp -= half * self.hp.gamma0 * (*s - self.mu0) * (*s - self.mu0);
        }
        for (b, eta) in st.biases.iter().zip(&st.reliabilities) {
            lp -= half * self.hp.gamma1 * *b * *b;
            lp += (self.hp.alpha0 - T::one()) * eta.ln() - *eta / self.hp.beta0;
        }
        lp
    }
}

fn mu0_of<T: Scalar>(hp: &NcsHyperparams<T>, o: &Observations<T>) -> T {
    hp.mu0.unwrap_or_else(|| o.grand_mean())
}

/// Fit NCS. Plain NCS fixes `η_g = 1` and `b_g = 0` and has a closed form;
/// NCS+G runs `iterations` rounds of coordinate ascent. Ungraded items get
/// `μ0`.
pub fn ncs_fit<T: Scalar>(
    data: &Dataset<T>,
    hp: &NcsHyperparams<T>,
    iterations: usize,
    with_bias_and_reliability: bool,
    tie_epsilon: T,
) -> Result<NcsFit<T>> {
    let (state, _) = ncs_trace(data, hp, iterations, with_bias_and_reliability)?;
    let scores: BTreeMap<ItemId, T> = data.items.iter().cloned().zip(state.scores).collect();
    let mut estimate = Estimate::from_scores(scores, tie_epsilon)?;
    let mut biases = None;
    if with_bias_and_reliability {
        let graders: Vec<GraderId> = data.feedback.iter().map(|f| f.grader.clone()).collect();
        let mut rel: BTreeMap<GraderId, T> = data
            .graders
            .iter()
            .map(|g| (g.clone(), ((hp.alpha0 - T::one()) * hp.beta0).max(T::lit(RELIABILITY_MIN))))
            .collect();
        rel.extend(graders.iter().cloned().zip(state.reliabilities));
        estimate.reliabilities = Some(rel);
        biases = Some(graders.into_iter().zip(state.biases).collect());
        estimate.notes.push(format!("coordinate-ascent rounds: {iterations}"));
    }
    Ok(NcsFit { estimate, biases })
}

/// NCS fit returning the final state and the log-posterior after each round
/// (one entry for plain NCS).
pub fn ncs_trace<T: Scalar>(
    data: &Dataset<T>,
    hp: &NcsHyperparams<T>,
    iterations: usize,
    with_bias_and_reliability: bool,
) -> Result<(NcsState<T>, Vec<T>)> {
    hp.validate()?;
    let o = Observations::new(data)?;
    warn_ungraded(&o.per_item_counts());
    let model = Ncs { o: &o, hp: *hp, mu0: mu0_of(hp, &o) };
    let g_n = o.graders.len();
    let mut st = NcsState {
        scores: vec![model.mu0; o.n_items],
        biases: vec![T::zero(); g_n],
        reliabilities: vec![T::one(); g_n],
    };
    model.update_scores(&mut st);
    let mut trace = vec![model.log_posterior(&st)];
    if with_bias_and_reliability {
        for _ in 0..iterations {
            model.update_reliabilities(&mut st);
            model.update_biases(&mut st);
            model.update_scores(&mut st);
            model.update_translation(&mut st);
            trace.push(model.log_posterior(&st));
        }
    }
    Ok((st, trace))
}

/// Negative log-posterior of NCS+G with its gradients, for checking.
#[derive(Clone, Debug, PartialEq)]
pub struct NcsObjective<T> {
    pub value: T,
    pub score_gradient: Vec<T>,
    pub bias_gradient: Vec<T>,
    pub reliability_gradient: Vec<T>,
}

/// Evaluate the NCS+G negative log-posterior at `st` (indexed by dataset
/// item order and feedback order).
pub fn ncs_objective<T: Scalar>(data: &Dataset<T>, hp: &NcsHyperparams<T>, st: &NcsState<T>) -> Result<NcsObjective<T>> {
    hp.validate()?;
    let o = Observations::new(data)?;
    if st.scores.len() != o.n_items || st.biases.len() != o.graders.len() || st.reliabilities.len() != o.graders.len() {
        return Err(OpgError::InvalidParameter("state does not match dataset".into()));
    }
    let model = Ncs { o: &o, hp: *hp, mu0: mu0_of(hp, &o) };
    let value = -model.log_posterior(st);
    let mut gs: Vec<T> = st.scores.iter().map(|s| hp.gamma0 * (*s - model.mu0)).collect();
    let mut gb: Vec<T> = st.biases.iter().map(|b| hp.gamma1 * *b).collect();
    let mut ge: Vec<T> = st
        .reliabilities
        .iter()
        .map(|e| -(hp.alpha0 - T::one()) / *e + T::one() / hp.beta0)
        .collect();
    let half = T::lit(0.5);
    for &(d, g, y) in &o.obs {
        let r = y - st.scores[d] - st.biases[g];
        let eta = st.reliabilities[g];
        gs[d] -= eta * r;
        gb[g] -= eta * r;
        ge[g] += half * r * r - half / eta;
    }
    Ok(NcsObjective { value, score_gradient: gs, bias_gradient: gb, reliability_gradient: ge })
}
