//! Method registry: every estimator under its command-line name.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{ncs_fit, scavg, NcsHyperparams};
use crate::data::{Dataset, Estimate};
use crate::error::{OpgError, Result};
use crate::mallows::{fit_mallows, MallowsAlgorithm, MallowsFit};
use crate::optim::SgdConfig;
use crate::priors::{ReliabilityPrior, ScorePrior};
use crate::ranking::DEFAULT_TIE_EPSILON;
use crate::scalar::Scalar;
use crate::score_models::{fit_score_model, ScoreFitConfig, ScoreModel, DEFAULT_ENUMERATION_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Scavg,
    Ncs,
    NcsG,
    Mal,
    MalG,
    MalBc,
    MalBcG,
    MalK,
    MalKG,
    Mals,
    MalsG,
    Bt,
    BtG,
    Thur,
    ThurG,
    Pl,
    PlG,
}

impl Method {
    pub const ALL: [Method; 17] = [
        Method::Scavg,
        Method::Ncs,
        Method::NcsG,
        Method::Mal,
        Method::MalG,
        Method::MalBc,
        Method::MalBcG,
        Method::MalK,
        Method::MalKG,
        Method::Mals,
        Method::MalsG,
        Method::Bt,
        Method::BtG,
        Method::Thur,
        Method::ThurG,
        Method::Pl,
        Method::PlG,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Scavg => "scavg",
            Method::Ncs => "ncs",
            Method::NcsG => "ncs+g",
            Method::Mal => "mal",
            Method::MalG => "mal+g",
            Method::MalBc => "malbc",
            Method::MalBcG => "malbc+g",
            Method::MalK => "mal+k",
            Method::MalKG => "mal+kg",
            Method::Mals => "mals",
            Method::MalsG => "mals+g",
            Method::Bt => "bt",
            Method::BtG => "bt+g",
            Method::Thur => "thur",
            Method::ThurG => "thur+g",
            Method::Pl => "pl",
            Method::PlG => "pl+g",
        }
    }

    /// Needs cardinal grades.
    pub fn is_cardinal(self) -> bool {
        matches!(self, Method::Scavg | Method::Ncs | Method::NcsG)
    }

    /// Estimates per-grader reliabilities.
    pub fn with_reliability(self) -> bool {
        matches!(
            self,
            Method::NcsG
                | Method::MalG
                | Method::MalBcG
                | Method::MalKG
                | Method::MalsG
                | Method::BtG
                | Method::ThurG
                | Method::PlG
        )
    }

    /// The same estimator with or without reliability estimation, if it
    /// exists.
    pub fn with_reliability_variant(self, on: bool) -> Option<Method> {
        use Method::*;
        let pair = match self {
            Ncs | NcsG => (Ncs, NcsG),
            Mal | MalG => (Mal, MalG),
            MalBc | MalBcG => (MalBc, MalBcG),
            MalK | MalKG => (MalK, MalKG),
            Mals | MalsG => (Mals, MalsG),
            Bt | BtG => (Bt, BtG),
            Thur | ThurG => (Thur, ThurG),
            Pl | PlG => (Pl, PlG),
            Scavg => return if on { None } else { Some(Scavg) },
        };
        Some(if on { pair.1 } else { pair.0 })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = OpgError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| OpgError::InvalidParameter(format!("unknown model `{s}`")))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Everything an estimator may need; each method reads the parts it uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FitConfig<T> {
    pub seed: u64,
    /// Alternating rounds for `+G` methods.
    pub iterations: usize,
    pub tie_epsilon: T,
    pub sgd: SgdConfig<T>,
    pub score_prior: ScorePrior<T>,
    pub reliability_prior: ReliabilityPrior<T>,
    pub ncs: NcsHyperparams<T>,
    pub enumeration_cap: usize,
}

impl<T: Scalar> Default for FitConfig<T> {
    fn default() -> Self {
        Self {
            seed: 0,
            iterations: 10,
            tie_epsilon: T::lit(DEFAULT_TIE_EPSILON),
            sgd: SgdConfig::default(),
            score_prior: ScorePrior::default(),
            reliability_prior: ReliabilityPrior::default(),
            ncs: NcsHyperparams::default(),
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

impl<T: Scalar> FitConfig<T> {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Fit `method` to `data`.
pub fn fit<T: Scalar>(method: Method, data: &Dataset<T>, cfg: &FitConfig<T>) -> Result<Estimate<T>> {
    if data.feedback.is_empty() {
        return Err(OpgError::EmptyDataset);
    }
    if !(cfg.tie_epsilon >= T::zero()) {
        return Err(OpgError::InvalidParameter("tie epsilon must be >= 0".into()));
    }
    if method.is_cardinal() && !data.has_cardinal() {
        return Err(OpgError::MissingCardinal(format!("model {method} needs grades")));
    }
    let g = method.with_reliability();
    use Method::*;
    match method {
        Scavg => scavg(data, cfg.tie_epsilon),
        Ncs | NcsG => Ok(ncs_fit(data, &cfg.ncs, cfg.iterations, g, cfg.tie_epsilon)?.estimate),
        Mal | MalG | MalBc | MalBcG | MalK | MalKG => {
            let algorithm = if matches!(method, MalBc | MalBcG) { MallowsAlgorithm::Borda } else { MallowsAlgorithm::Greedy };
            let mfit = MallowsFit {
                algorithm,
                kemenize: matches!(method, MalK | MalKG),
                with_reliability: g,
                iterations: cfg.iterations,
                prior: cfg.reliability_prior,
            };
            fit_mallows(data, &mfit)
        }
        Mals | MalsG | Bt | BtG | Thur | ThurG | Pl | PlG => {
            let model = match method {
                Mals | MalsG => ScoreModel::ScoreMallows,
                Bt | BtG => ScoreModel::BradleyTerry,
                Thur | ThurG => ScoreModel::Thurstone,
                _ => ScoreModel::PlackettLuce,
            };
            let mut sgd = cfg.sgd.clone();
            sgd.seed = cfg.seed;
            sgd.alternating_iterations = cfg.iterations;
            let scfg = ScoreFitConfig {
                sgd,
                prior: cfg.score_prior,
                reliability_prior: cfg.reliability_prior,
                with_reliability: g,
                enumeration_cap: cfg.enumeration_cap,
                tie_epsilon: cfg.tie_epsilon,
            };
            fit_score_model(model, data, &scfg)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GraderFeedback;
    use crate::ranking::{GraderId, ItemId, WeakRanking};
    use std::collections::BTreeMap;

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::from_str::<Method>(&serde_json::to_string(&m).unwrap()).unwrap(), m);
        }
        assert!("kemeny".parse::<Method>().is_err());
        assert_eq!("MAL+G".parse::<Method>().unwrap(), Method::MalG);
    }

    #[test]
    fn reliability_variants() {
        assert_eq!(Method::Bt.with_reliability_variant(true), Some(Method::BtG));
        assert_eq!(Method::MalKG.with_reliability_variant(false), Some(Method::MalK));
        assert_eq!(Method::Scavg.with_reliability_variant(true), None);
        assert_eq!(Method::ALL.iter().filter(|m| m.with_reliability()).count(), 8);
    }

    #[test]
    fn cardinal_methods_need_grades() {
        let r = WeakRanking::from_order(vec!["a".into(), "b".into()]).unwrap();
        let fb = GraderFeedback::<f64>::from_ordinal("g".into(), r).unwrap();
        let d = Dataset::new(vec!["a".into(), "b".into()], vec!["g".into()], vec![fb]).unwrap();
        assert!(matches!(fit(Method::Scavg, &d, &FitConfig::default()), Err(OpgError::MissingCardinal(_))));
        assert!(fit(Method::Mal, &d, &FitConfig::default()).is_ok());
    }

    #[test]
    fn every_method_runs_on_cardinal_data() {
        let mut fb = Vec::new();
        let grades = [[9.0, 7.0, 5.0], [8.0, 8.5, 4.0], [9.5, 6.0, 6.5]];
        let items: Vec<ItemId> = vec!["a".into(), "b".into(), "c".into()];
        let graders: Vec<GraderId> = vec!["g1".into(), "g2".into(), "g3".into()];
        for (g, row) in graders.iter().zip(grades) {
            let s: BTreeMap<ItemId, f64> = items.iter().cloned().zip(row).collect();
            fb.push(GraderFeedback::from_cardinal(g.clone(), s).unwrap());
        }
        let d = Dataset::new(items, graders, fb).unwrap();
        for m in Method::ALL {
            let est = fit(m, &d, &FitConfig::default()).unwrap();
            assert_eq!(est.ranking.len(), 3, "{m}");
            assert_eq!(est.ranking.groups()[0], vec![ItemId::from("a")], "{m}");
            assert_eq!(est.reliabilities.is_some(), m.with_reliability(), "{m}");
        }
    }
}
