//! Peer-feedback datasets and model outputs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{OpgError, Result};
use crate::ranking::{ranking_from_scores, GraderId, ItemId, WeakRanking};
use crate::scalar::Scalar;

/// One grader's assessment of the items assigned to them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GraderFeedback<T> {
    pub grader: GraderId,
    /// The assigned items, sorted by id.
    pub items: Vec<ItemId>,
    pub ordinal: Option<WeakRanking>,
    pub cardinal: Option<BTreeMap<ItemId, T>>,
}

impl<T: Scalar> GraderFeedback<T> {
    pub fn from_ordinal(grader: GraderId, ranking: WeakRanking) -> Result<Self> {
        let mut items = ranking.flatten();
        items.sort();
        let fb = Self { grader, items, ordinal: Some(ranking), cardinal: None };
        fb.validate()?;
        Ok(fb)
    }

    /// Cardinal grades plus the ordering they imply (equal grades tie).
    pub fn from_cardinal(grader: GraderId, scores: BTreeMap<ItemId, T>) -> Result<Self> {
        let ordinal = ranking_from_scores(scores.iter().map(|(k, v)| (k.clone(), *v)), T::zero())?;
        let items = scores.keys().cloned().collect();
        let fb = Self { grader, items, ordinal: Some(ordinal), cardinal: Some(scores) };
        fb.validate()?;
        Ok(fb)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ordinal.is_none() && self.cardinal.is_none() {
            return Err(OpgError::InvalidDataset(format!("grader {} has no feedback", self.grader)));
        }
        let items: BTreeSet<&ItemId> = self.items.iter().collect();
        if items.len() != self.items.len() {
            return Err(OpgError::InvalidDataset(format!(
                "grader {} lists an item twice",
                self.grader
            )));
        }
        if let Some(r) = &self.ordinal {
            if r.items().collect::<BTreeSet<_>>() != items {
                return Err(OpgError::InvalidDataset(format!(
                    "ordinal feedback of grader {} does not cover its items",
                    self.grader
                )));
            }
        }
        if let Some(c) = &self.cardinal {
            if c.keys().collect::<BTreeSet<_>>() != items {
                return Err(OpgError::InvalidDataset(format!(
                    "cardinal feedback of grader {} does not cover its items",
                    self.grader
                )));
            }
            if let Some((k, _)) = c.iter().find(|(_, v)| !v.is_finite()) {
                return Err(OpgError::NonFiniteScore(k.to_string()));
            }
        }
        Ok(())
    }

    pub fn ordinal(&self) -> Result<&WeakRanking> {
        self.ordinal.as_ref().ok_or_else(|| OpgError::MissingOrdinal(format!("grader {}", self.grader)))
    }

    pub fn cardinal(&self) -> Result<&BTreeMap<ItemId, T>> {
        self.cardinal.as_ref().ok_or_else(|| OpgError::MissingCardinal(format!("grader {}", self.grader)))
    }

    /// Feedback restricted to a subset of this grader's items.
    pub fn restrict(&self, keep: &HashSet<ItemId>) -> Self {
        Self {
            grader: self.grader.clone(),
            items: self.items.iter().filter(|i| keep.contains(*i)).cloned().collect(),
            ordinal: self.ordinal.as_ref().map(|r| r.restrict_to(keep)),
            cardinal: self.cardinal.as_ref().map(|c| {
                c.iter().filter(|(k, _)| keep.contains(*k)).map(|(k, v)| (k.clone(), *v)).collect()
            }),
        }
    }
}

/// Item roster, grader roster and their feedback.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dataset<T> {
    pub items: Vec<ItemId>,
    pub graders: Vec<GraderId>,
    pub feedback: Vec<GraderFeedback<T>>,
    /// Graders known to be lazy (synthetic experiments only).
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub lazy: BTreeSet<GraderId>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        items: Vec<ItemId>,
        graders: Vec<GraderId>,
        feedback: Vec<GraderFeedback<T>>,
    ) -> Result<Self> {
        let ds = Self { items, graders, feedback, lazy: BTreeSet::new() };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let items: HashSet<&ItemId> = self.items.iter().collect();
        if items.len() != self.items.len() {
            return Err(OpgError::InvalidDataset("duplicate item in roster".into()));
        }
        let graders: HashSet<&GraderId> = self.graders.iter().collect();
        if graders.len() != self.graders.len() {
            return Err(OpgError::InvalidDataset("duplicate grader in roster".into()));
        }
        let mut seen = HashSet::new();
        for fb in &self.feedback {
            if !graders.contains(&fb.grader) {
                return Err(OpgError::UnknownGrader(fb.grader.to_string()));
            }
            if !seen.insert(&fb.grader) {
                return Err(OpgError::InvalidDataset(format!(
                    "grader {} has more than one feedback record",
                    fb.grader
                )));
            }
            if let Some(bad) = fb.items.iter().find(|i| !items.contains(i)) {
                return Err(OpgError::UnknownItem(bad.to_string()));
            }
            fb.validate()?;
        }
        if let Some(bad) = self.lazy.iter().find(|g| !graders.contains(g)) {
            return Err(OpgError::UnknownGrader(bad.to_string()));
        }
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn has_ordinal(&self) -> bool {
        !self.feedback.is_empty() && self.feedback.iter().all(|f| f.ordinal.is_some())
    }

    pub fn has_cardinal(&self) -> bool {
        !self.feedback.is_empty() && self.feedback.iter().all(|f| f.cardinal.is_some())
    }

    pub fn item_index(&self) -> HashMap<ItemId, usize> {
        self.items.iter().enumerate().map(|(k, i)| (i.clone(), k)).collect()
    }

    pub fn feedback_of(&self, grader: &GraderId) -> Option<&GraderFeedback<T>> {
        self.feedback.iter().find(|f| &f.grader == grader)
    }

    /// Items no grader assessed.
    pub fn ungraded_items(&self) -> Vec<ItemId> {
        let graded: HashSet<&ItemId> = self.feedback.iter().flat_map(|f| f.items.iter()).collect();
        self.items.iter().filter(|i| !graded.contains(i)).cloned().collect()
    }

    /// Copy keeping only the listed graders (in roster order).
    pub fn with_graders(&self, keep: &HashSet<GraderId>) -> Self {
        Self {
            items: self.items.clone(),
            graders: self.graders.iter().filter(|g| keep.contains(*g)).cloned().collect(),
            feedback: self.feedback.iter().filter(|f| keep.contains(&f.grader)).cloned().collect(),
            lazy: self.lazy.iter().filter(|g| keep.contains(*g)).cloned().collect(),
        }
    }

    /// Index-based view of the ordinal feedback used by the fitting code.
    pub fn compile_ordinal(&self) -> Result<OrdinalView> {
        if self.feedback.is_empty() {
            return Err(OpgError::EmptyDataset);
        }
        let index = self.item_index();
        let mut rankings = Vec::with_capacity(self.feedback.len());
        for fb in &self.feedback {
            let r = fb.ordinal()?;
            let groups: Vec<Vec<usize>> =
                r.groups().iter().map(|g| g.iter().map(|i| index[i]).collect()).collect();
            rankings.push(groups);
        }
        Ok(OrdinalView { n_items: self.items.len(), rankings })
    }
}

/// Ordinal feedback as item indices: one weak ranking per feedback record, in
/// dataset order.
#[derive(Clone, Debug)]
pub struct OrdinalView {
    pub n_items: usize,
    pub rankings: Vec<Vec<Vec<usize>>>,
}

impl OrdinalView {
    /// Weighted preference matrix: `w[a][b]` is the total weight of graders
    /// placing `a` strictly above `b`.
    pub fn preference_matrix<T: Scalar>(&self, weights: &[T]) -> Vec<Vec<T>> {
        let n = self.n_items;
        let mut w = vec![vec![T::zero(); n]; n];
        for (groups, &eta) in self.rankings.iter().zip(weights) {
            for (gi, better) in groups.iter().enumerate() {
                for worse in &groups[gi + 1..] {
                    for &a in better {
                        for &b in worse {
                            w[a][b] += eta;
                        }
                    }
                }
            }
        }
        w
    }

    pub fn graded_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_items];
        for &i in self.rankings.iter().flatten().flatten() {
            mask[i] = true;
        }
        mask
    }
}

/// Output of an estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Estimate<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<BTreeMap<ItemId, T>>,
    pub ranking: WeakRanking,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliabilities: Option<BTreeMap<GraderId, T>>,
    /// Free-form notes about choices made during fitting.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl<T: Scalar> Estimate<T> {
    pub fn from_ranking(ranking: WeakRanking) -> Self {
        Self { scores: None, ranking, reliabilities: None, notes: Vec::new() }
    }

    /// Scores plus the ranking they induce.
    pub fn from_scores(scores: BTreeMap<ItemId, T>, tie_epsilon: T) -> Result<Self> {
        let ranking = ranking_from_scores(scores.iter().map(|(k, v)| (k.clone(), *v)), tie_epsilon)?;
        Ok(Self { scores: Some(scores), ranking, reliabilities: None, notes: Vec::new() })
    }

    /// Percentile rank of each item, `100 (n - midrank) / (n - 1)`, where tied
    /// items share the mean of the positions they occupy.
    pub fn percentile_ranks(&self) -> BTreeMap<ItemId, f64> {
        let n = self.ranking.len();
        let mut out = BTreeMap::new();
        let mut above = 0usize;
        for g in self.ranking.groups() {
            let midrank = above as f64 + (g.len() as f64 + 1.0) / 2.0;
            let pct = if n > 1 { 100.0 * (n as f64 - midrank) / (n as f64 - 1.0) } else { 100.0 };
            for i in g {
                out.insert(i.clone(), pct);
            }
            above += g.len();
        }
        out
    }
}
