//! File formats: cardinal CSV, ordinal JSON, estimate and ranking JSON.
//!
//! Output numbers are rounded to 12 significant digits and maps are written
//! in key order, so equal inputs give byte-identical files. Files are
//! written to a temporary sibling and renamed into place.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{Dataset, Estimate, GraderFeedback};
use crate::error::{OpgError, Result};
use crate::ranking::{GraderId, ItemId, WeakRanking};
use crate::scalar::Scalar;

pub const CSV_HEADER: [&str; 3] = ["grader_id", "item_id", "score"];
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Parse `grader_id,item_id,score` rows. Each grader's feedback carries the
/// ordering its grades imply, with equal grades tied.
pub fn read_cardinal_csv<T: Scalar>(text: &str) -> Result<Dataset<T>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| OpgError::Parse { line: 1, msg: "missing header".into() })?
        .map_err(csv_error)?;
    if header.iter().ne(CSV_HEADER) {
        return Err(OpgError::Parse { line: 1, msg: format!("header must be `{}`", CSV_HEADER.join(",")) });
    }
    let mut grades: Vec<(GraderId, BTreeMap<ItemId, T>)> = Vec::new();
    let mut items = BTreeSet::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| OpgError::Parse { line, msg };
        let grader = GraderId::new(&rec[0]).map_err(|_| bad("empty grader id".into()))?;
        let item = ItemId::new(&rec[1]).map_err(|_| bad("empty item id".into()))?;
        let score: f64 = rec[2].trim().parse().map_err(|_| bad(format!("invalid score `{}`", &rec[2])))?;
        if !score.is_finite() {
            return Err(bad(format!("non-finite score `{}`", &rec[2])));
        }
        let slot = match grades.iter().position(|(g, _)| *g == grader) {
            Some(k) => k,
            None => {
                grades.push((grader.clone(), BTreeMap::new()));
                grades.len() - 1
            }
        };
        if grades[slot].1.insert(item.clone(), T::lit(score)).is_some() {
            return Err(bad(format!("duplicate grade of {item} by {grader}")));
        }
        items.insert(item);
    }
    let graders = grades.iter().map(|(g, _)| g.clone()).collect();
    let feedback =
        grades.into_iter().map(|(g, s)| GraderFeedback::from_cardinal(g, s)).collect::<Result<Vec<_>>>()?;
    Dataset::new(items.into_iter().collect(), graders, feedback)
}

fn csv_error(e: csv::Error) -> OpgError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    OpgError::Parse { line, msg: e.to_string() }
}

/// Cardinal CSV of every grader with grades, rows in roster order.
pub fn write_cardinal_csv<T: Scalar>(data: &Dataset<T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(|e| OpgError::Format(e.to_string()))?;
    for fb in &data.feedback {
        for (item, score) in fb.cardinal()? {
            w.write_record([fb.grader.as_str(), item.as_str(), &score.as_f64().to_string()])
                .map_err(|e| OpgError::Format(e.to_string()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| OpgError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| OpgError::Format(e.to_string()))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrdinalFile {
    items: Vec<String>,
    graders: Vec<OrdinalGrader>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrdinalGrader {
    id: String,
    ranking: Vec<Vec<String>>,
}

/// Parse `{"items": [...], "graders": [{"id": ..., "ranking": [[...], ...]}]}`.
pub fn read_ordinal_json<T: Scalar>(text: &str) -> Result<Dataset<T>> {
    let file: OrdinalFile = serde_json::from_str(text).map_err(|e| OpgError::Parse { line: e.line(), msg: e.to_string() })?;
    let items = file.items.into_iter().map(ItemId::new).collect::<Result<Vec<_>>>()?;
    let known: HashSet<&ItemId> = items.iter().collect();
    let mut graders = Vec::with_capacity(file.graders.len());
    let mut feedback = Vec::with_capacity(file.graders.len());
    for g in file.graders {
        let id = GraderId::new(g.id)?;
        let groups = g
            .ranking
            .into_iter()
            .map(|grp| grp.into_iter().map(ItemId::new).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        if let Some(unknown) = groups.iter().flatten().find(|i| !known.contains(i)) {
            return Err(OpgError::UnknownItem(format!("{unknown} (ranked by {id})")));
        }
        graders.push(id.clone());
        feedback.push(GraderFeedback::from_ordinal(id, WeakRanking::new(groups)?)?);
    }
    Dataset::new(items, graders, feedback)
}

pub fn write_ordinal_json<T: Scalar>(data: &Dataset<T>) -> Result<String> {
    let graders = data
        .feedback
        .iter()
        .map(|fb| {
            let ranking =
                fb.ordinal()?.groups().iter().map(|g| g.iter().map(|i| i.to_string()).collect()).collect();
            Ok(OrdinalGrader { id: fb.grader.to_string(), ranking })
        })
        .collect::<Result<Vec<_>>>()?;
    let file = OrdinalFile { items: data.items.iter().map(|i| i.to_string()).collect(), graders };
    Ok(serde_json::to_string_pretty(&file).map_err(|e| OpgError::Format(e.to_string()))? + "\n")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Ordinal,
    Cardinal,
}

impl std::str::FromStr for InputFormat {
    type Err = OpgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ordinal" => Ok(Self::Ordinal),
            "cardinal" => Ok(Self::Cardinal),
            _ => Err(OpgError::InvalidParameter(format!("unknown format `{s}` (ordinal or cardinal)"))),
        }
    }
}

pub fn read_dataset<T: Scalar>(path: &Path, format: InputFormat) -> Result<Dataset<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| OpgError::Io(format!("{}: {e}", path.display())))?;
    match format {
        InputFormat::Ordinal => read_ordinal_json(&text),
        InputFormat::Cardinal => read_cardinal_csv(&text),
    }
}

pub fn write_dataset<T: Scalar>(path: &Path, data: &Dataset<T>, format: InputFormat) -> Result<()> {
    let text = match format {
        InputFormat::Ordinal => write_ordinal_json(data)?,
        InputFormat::Cardinal => write_cardinal_csv(data)?,
    };
    write_atomic(path, text.as_bytes())
}

/// Round a float to `SIGNIFICANT_DIGITS` significant digits.
pub fn round_significant(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_significant).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with floats rounded to 12 significant digits.
pub fn to_json_string<S: Serialize>(value: &S) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| OpgError::Format(e.to_string()))?;
    round_value(&mut v);
    Ok(serde_json::to_string_pretty(&v).map_err(|e| OpgError::Format(e.to_string()))? + "\n")
}

/// Estimate file: model output plus the configuration and seed behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile<C> {
    pub model: String,
    pub seed: u64,
    pub config: C,
    pub ranking: WeakRanking,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<BTreeMap<ItemId, f64>>,
    pub percentile_ranks: BTreeMap<ItemId, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliabilities: Option<BTreeMap<GraderId, f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl<C> EstimateFile<C> {
    pub fn new<T: Scalar>(model: String, seed: u64, config: C, est: &Estimate<T>) -> Self {
        Self {
            model,
            seed,
            config,
            ranking: est.ranking.clone(),
            scores: est.scores.as_ref().map(widen),
            percentile_ranks: est.percentile_ranks(),
            reliabilities: est.reliabilities.as_ref().map(widen),
            notes: est.notes.clone(),
        }
    }
}

fn widen<K: Clone + Ord, T: Scalar>(m: &BTreeMap<K, T>) -> BTreeMap<K, f64> {
    m.iter().map(|(k, v)| (k.clone(), v.as_f64())).collect()
}

/// The parts of an estimate or truth file used for evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingFile {
    pub ranking: WeakRanking,
    #[serde(default)]
    pub scores: Option<BTreeMap<ItemId, f64>>,
}

/// Read any JSON file with a `ranking` (and optional `scores`) field.
pub fn read_ranking_file(path: &Path) -> Result<RankingFile> {
    let text = std::fs::read_to_string(path).map_err(|e| OpgError::Io(format!("{}: {e}", path.display())))?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| OpgError::Parse { line: e.line(), msg: e.to_string() })?;
    let groups: Vec<Vec<String>> = serde_json::from_value(raw.get("ranking").cloned().unwrap_or(Value::Null))
        .map_err(|e| OpgError::Parse { line: 0, msg: format!("{}: ranking: {e}", path.display()) })?;
    let groups = groups
        .into_iter()
        .map(|g| g.into_iter().map(ItemId::new).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let scores = match raw.get("scores") {
        None | Some(Value::Null) => None,
        Some(s) => Some(serde_json::from_value(s.clone()).map_err(|e| OpgError::Parse {
            line: 0,
            msg: format!("{}: scores: {e}", path.display()),
        })?),
    };
    Ok(RankingFile { ranking: WeakRanking::new(groups)?, scores })
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| OpgError::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[&str]) -> Vec<ItemId> {
        v.iter().map(|&s| s.into()).collect()
    }

    #[test]
    fn csv_induces_order() {
        let d = read_cardinal_csv::<f64>("grader_id,item_id,score\ng1,a,9\ng1,b,7\n").unwrap();
        assert_eq!(d.feedback[0].ordinal.as_ref().unwrap().groups(), &[ids(&["a"]), ids(&["b"])]);
        let d = read_cardinal_csv::<f64>("grader_id,item_id,score\ng1,a,8\ng1,b,8\n").unwrap();
        assert_eq!(d.feedback[0].ordinal.as_ref().unwrap().groups(), &[ids(&["a", "b"])]);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let e = read_cardinal_csv::<f64>("grader_id,item_id,score\ng1,a,9\ng1,b,7\ng1,a,3\n").unwrap_err();
        assert!(matches!(e, OpgError::Parse { line: 4, .. }), "{e}");
        let e = read_cardinal_csv::<f64>("grader_id,item_id,score\ng1,a,nan\n").unwrap_err();
        assert!(matches!(e, OpgError::Parse { line: 2, .. }), "{e}");
        let e = read_cardinal_csv::<f64>("grader_id,item_id,score\ng1,a\n").unwrap_err();
        assert!(matches!(e, OpgError::Parse { line: 2, .. }), "{e}");
        assert!(read_cardinal_csv::<f64>("grader,item,score\ng1,a,9\n").is_err());
    }

    #[test]
    fn ordinal_json_examples() {
        let d = read_ordinal_json::<f64>(r#"{"items":["a","b","c"],"graders":[{"id":"g","ranking":[["a"],["b","c"]]}]}"#)
            .unwrap();
        assert_eq!(d.feedback[0].ordinal.as_ref().unwrap().groups(), &[ids(&["a"]), ids(&["b", "c"])]);
        assert!(read_ordinal_json::<f64>(r#"{"items":["a","b"],"graders":[{"id":"g","ranking":[["a"],["a","b"]]}]}"#).is_err());
        assert!(read_ordinal_json::<f64>(r#"{"items":["a","b"],"graders":[{"id":"g","ranking":[["a"],[],["b"]]}]}"#).is_err());
        assert!(matches!(
            read_ordinal_json::<f64>(r#"{"items":["a"],"graders":[{"id":"g","ranking":[["a"],["z"]]}]}"#),
            Err(OpgError::UnknownItem(_))
        ));
        let empty = read_ordinal_json::<f64>(r#"{"items":["a"],"graders":[]}"#).unwrap();
        assert!(empty.feedback.is_empty());
    }

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round_significant(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_significant(-123456.7890123456), -123456.789012);
        assert_eq!(round_significant(0.0), 0.0);
        let s = to_json_string(&BTreeMap::from([("x", 2.0f64 / 3.0)])).unwrap();
        assert!(s.contains("0.666666666667"), "{s}");
    }

    #[test]
    fn estimate_file_reads_back_as_ranking_file() {
        let scores: BTreeMap<ItemId, f64> = [("a".into(), 1.5), ("b".into(), -0.25)].into();
        let est = Estimate::from_scores(scores.clone(), 1e-9).unwrap();
        let file = EstimateFile::new("bt".into(), 7, serde_json::json!({"k": 1}), &est);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.json");
        write_atomic(&path, to_json_string(&file).unwrap().as_bytes()).unwrap();
        let back = read_ranking_file(&path).unwrap();
        assert_eq!(back.ranking, est.ranking);
        assert_eq!(back.scores, Some(scores));
    }

    fn dataset_strategy() -> impl Strategy<Value = Dataset<f64>> {
        (2usize..6, 1usize..5)
            .prop_flat_map(|(n, g)| prop::collection::vec(prop::collection::vec(prop_oneof![Just(None), (1u8..=10).prop_map(Some)], n), g))
            .prop_filter_map("every grader grades something", |rows| {
                let items: Vec<ItemId> = (0..rows[0].len()).map(|k| ItemId::from(format!("i{k}").as_str())).collect();
                let mut graders = Vec::new();
                let mut feedback = Vec::new();
                for (g, row) in rows.iter().enumerate() {
                    let s: BTreeMap<ItemId, f64> =
                        row.iter().zip(&items).filter_map(|(v, i)| v.map(|v| (i.clone(), v as f64 / 4.0 + 1.0))).collect();
                    if s.is_empty() {
                        return None;
                    }
                    let id = GraderId::from(format!("g{g}").as_str());
                    graders.push(id.clone());
                    feedback.push(GraderFeedback::from_cardinal(id, s).unwrap());
                }
                let graded: BTreeSet<&ItemId> = feedback.iter().flat_map(|f| f.items.iter()).collect();
                let items = graded.into_iter().cloned().collect();
                Dataset::new(items, graders, feedback).ok()
            })
    }

    proptest! {
        #[test]
        fn cardinal_round_trip(d in dataset_strategy()) {
            prop_assert_eq!(read_cardinal_csv::<f64>(&write_cardinal_csv(&d).unwrap()).unwrap(), d);
        }

        #[test]
        fn ordinal_round_trip(d in dataset_strategy()) {
            let ordinal_only = Dataset::new(
                d.items.clone(),
                d.graders.clone(),
                d.feedback.iter().map(|f| GraderFeedback::from_ordinal(f.grader.clone(), f.ordinal.clone().unwrap()).unwrap()).collect(),
            ).unwrap();
            prop_assert_eq!(read_ordinal_json::<f64>(&write_ordinal_json(&ordinal_only).unwrap()).unwrap(), ordinal_only);
        }
    }
}
