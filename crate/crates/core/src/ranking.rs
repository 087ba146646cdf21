//! Weak rankings and the ranking algebra shared by every model and metric.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OpgError, Result};
use crate::scalar::Scalar;

/// Default merge tolerance when turning scores into a ranking.
pub const DEFAULT_TIE_EPSILON: f64 = 1e-9;

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Result<Self> {
                let id = id.into();
                if id.is_empty() {
                    return Err(OpgError::InvalidParameter(
                        concat!(stringify!($name), " must be non-empty").into(),
                    ));
                }
                Ok(Self(id))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", self.0)
            }
        }

        /// Panics on an empty string; use [`Self::new`] for untrusted input.
        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self::new(s).expect("empty id")
            }
        }
    };
}

string_id!(ItemId);
string_id!(GraderId);

/// Bound alias for anything usable as a ranked element.
pub trait RankKey: Clone + Eq + Hash + Ord + fmt::Debug {}
impl<K: Clone + Eq + Hash + Ord + fmt::Debug> RankKey for K {}

/// An ordering with ties: a sequence of non-empty tie groups, best first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeakRanking<I = ItemId> {
    groups: Vec<Vec<I>>,
}

/// `better` is preferred to `worse`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PreferencePair<I = ItemId> {
    pub better: I,
    pub worse: I,
}

impl<I: RankKey> WeakRanking<I> {
    pub fn new(groups: Vec<Vec<I>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for g in &groups {
            if g.is_empty() {
                return Err(OpgError::InvalidRanking("empty tie group".into()));
            }
            for item in g {
                if !seen.insert(item) {
                    return Err(OpgError::InvalidRanking(format!(
                        "item {item:?} appears more than once"
                    )));
                }
            }
        }
        Ok(Self { groups })
    }

    /// A strict order, best first.
    pub fn from_order(order: Vec<I>) -> Result<Self> {
        Self::new(order.into_iter().map(|i| vec![i]).collect())
    }

    /// Everything in one tie group.
    pub fn all_tied(items: Vec<I>) -> Result<Self> {
        if items.is_empty() {
            return Self::new(Vec::new());
        }
        Self::new(vec![items])
    }

    pub fn groups(&self) -> &[Vec<I>] {
        &self.groups
    }

    pub fn into_groups(self) -> Vec<Vec<I>> {
        self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn is_total(&self) -> bool {
        self.groups.iter().all(|g| g.len() == 1)
    }

    pub fn items(&self) -> impl Iterator<Item = &I> {
        self.groups.iter().flatten()
    }

    pub fn item_set(&self) -> BTreeSet<I> {
        self.items().cloned().collect()
    }

    /// Flattened order; tied items keep their stored order.
    pub fn flatten(&self) -> Vec<I> {
        self.items().cloned().collect()
    }

    /// Tie-group index of each item (0 = best group).
    pub fn levels(&self) -> HashMap<I, usize> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(l, g)| g.iter().map(move |i| (i.clone(), l)))
            .collect()
    }

    /// Rank of each item: one plus the number of items in strictly better groups.
    pub fn ranks(&self) -> HashMap<I, usize> {
        let mut out = HashMap::with_capacity(self.len());
        let mut above = 0;
        for g in &self.groups {
            for i in g {
                out.insert(i.clone(), above + 1);
            }
            above += g.len();
        }
        out
    }

    /// Number of pairs in strictly different groups.
    pub fn strict_pair_count(&self) -> usize {
        let n = self.len();
        let tied: usize = self.groups.iter().map(|g| g.len() * (g.len() - 1) / 2).sum();
        n * n.saturating_sub(1) / 2 - tied
    }

    /// Restriction to `keep`, preserving group order and dropping emptied groups.
    pub fn restrict<F: Fn(&I) -> bool>(&self, keep: F) -> Self {
        let groups = self
            .groups
            .iter()
            .map(|g| g.iter().filter(|i| keep(i)).cloned().collect::<Vec<_>>())
            .filter(|g| !g.is_empty())
            .collect();
        Self { groups }
    }

    pub fn restrict_to(&self, subset: &HashSet<I>) -> Self {
        self.restrict(|i| subset.contains(i))
    }

    /// Resolve every tie uniformly at random.
    pub fn break_ties<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut order = Vec::with_capacity(self.len());
        for g in &self.groups {
            let mut g = g.clone();
            g.sort();
            g.shuffle(rng);
            order.extend(g);
        }
        Self { groups: order.into_iter().map(|i| vec![i]).collect() }
    }

    /// Resolve ties by ascending id.
    pub fn break_ties_by_id(&self) -> Self {
        let mut order = Vec::with_capacity(self.len());
        for g in &self.groups {
            let mut g = g.clone();
            g.sort();
            order.extend(g);
        }
        Self { groups: order.into_iter().map(|i| vec![i]).collect() }
    }

    /// Same ranking with ids mapped through `f`.
    pub fn map<J: RankKey>(&self, mut f: impl FnMut(&I) -> J) -> WeakRanking<J> {
        WeakRanking {
            groups: self.groups.iter().map(|g| g.iter().map(&mut f).collect()).collect(),
        }
    }

    /// Append a final group (used for items nobody ranked).
    pub(crate) fn push_group(&mut self, group: Vec<I>) {
        if !group.is_empty() {
            self.groups.push(group);
        }
    }
}

/// All strictly ordered pairs of a weak ranking; tied pairs are omitted.
pub fn extract_preferences<I: RankKey>(r: &WeakRanking<I>) -> Vec<PreferencePair<I>> {
    let mut out = Vec::with_capacity(r.strict_pair_count());
    let groups = r.groups();
    for (gi, better) in groups.iter().enumerate() {
        for worse_group in &groups[gi + 1..] {
            for b in better {
                for w in worse_group {
                    out.push(PreferencePair { better: b.clone(), worse: w.clone() });
                }
            }
        }
    }
    out
}

fn total_positions<I: RankKey>(
    r1: &WeakRanking<I>,
    r2: &WeakRanking<I>,
) -> Result<(Vec<I>, HashMap<I, usize>)> {
    if !r1.is_total() || !r2.is_total() {
        return Err(OpgError::TiesPresent);
    }
    if r1.item_set() != r2.item_set() {
        return Err(OpgError::ItemSetMismatch);
    }
    let pos2: HashMap<I, usize> =
        r2.flatten().into_iter().enumerate().map(|(p, i)| (i, p)).collect();
    Ok((r1.flatten(), pos2))
}

/// Number of pairs ordered oppositely by two total orders.
pub fn kendall_tau_distance<I: RankKey>(r1: &WeakRanking<I>, r2: &WeakRanking<I>) -> Result<usize> {
    let (order1, pos2) = total_positions(r1, r2)?;
    let p: Vec<usize> = order1.iter().map(|i| pos2[i]).collect();
    let mut count = 0;
    for i in 0..p.len() {
        count += p[i + 1..].iter().filter(|&&q| q < p[i]).count();
    }
    Ok(count)
}

/// Kendall distance where each reversed pair costs its score gap.
///
/// `r1` must list items in non-increasing score order.
pub fn score_weighted_kt_distance<I: RankKey, T: Scalar>(
    r1: &WeakRanking<I>,
    r2: &WeakRanking<I>,
    scores: &HashMap<I, T>,
) -> Result<T> {
    let (order1, pos2) = total_positions(r1, r2)?;
    let mut s = Vec::with_capacity(order1.len());
    for i in &order1 {
        let v = *scores.get(i).ok_or_else(|| OpgError::UnknownItem(format!("{i:?}")))?;
        s.push(v);
    }
    if s.windows(2).any(|w| w[0] < w[1]) {
        return Err(OpgError::InconsistentWithScores);
    }
    let mut total = T::zero();
    for a in 0..order1.len() {
        for b in (a + 1)..order1.len() {
            if pos2[&order1[b]] < pos2[&order1[a]] {
                total += s[a] - s[b];
            }
        }
    }
    Ok(total)
}

/// Sort items by descending score; adjacent items within `tie_epsilon` of each
/// other (chained transitively) share a tie group. Group members are listed
/// by id, so the output is deterministic.
pub fn ranking_from_scores<I: RankKey, T: Scalar>(
    scores: impl IntoIterator<Item = (I, T)>,
    tie_epsilon: T,
) -> Result<WeakRanking<I>> {
    let mut v: Vec<(I, T)> = scores.into_iter().collect();
    for (i, s) in &v {
        if !s.is_finite() {
            return Err(OpgError::NonFiniteScore(format!("{i:?}")));
        }
    }
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    let mut groups: Vec<Vec<I>> = Vec::new();
    let mut prev: Option<T> = None;
    for (i, s) in v {
        match prev {
            Some(p) if p - s <= tie_epsilon => groups.last_mut().unwrap().push(i),
            _ => groups.push(vec![i]),
        }
        prev = Some(s);
    }
    for g in &mut groups {
        g.sort();
    }
    WeakRanking::new(groups)
}
