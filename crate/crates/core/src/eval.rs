//! Easy/Medium/Hard retrieval evaluation with junk removal and trapezoidal AP.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("unknown query {0}")]
    UnknownQuery(String),
    #[error("query {0} has no positives under this difficulty")]
    NoPositives(String),
    #[error("every query was excluded")]
    AllQueriesExcluded,
    #[error("invalid ground truth: {0}")]
    InvalidGroundTruth(String),
    #[error("ranking contains duplicate id {0}")]
    DuplicateId(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtQuery {
    pub name: String,
    /// Query region `[x1, y1, x2, y2]` in pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    #[serde(default)]
    pub easy: Vec<String>,
    #[serde(default)]
    pub hard: Vec<String>,
    #[serde(default)]
    pub junk: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub gallery: Vec<String>,
    pub queries: Vec<GtQuery>,
}

impl GroundTruth {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let gt: GroundTruth = serde_json::from_slice(&std::fs::read(path)?)?;
        gt.validate()?;
        Ok(gt)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }

    /// Label sets must be pairwise disjoint and drawn from the gallery roster.
    pub fn validate(&self) -> Result<(), EvalError> {
        let roster: HashSet<&str> = self.gallery.iter().map(String::as_str).collect();
        if roster.len() != self.gallery.len() {
            return Err(EvalError::InvalidGroundTruth("duplicate gallery id".into()));
        }
        let mut names = HashSet::new();
        for q in &self.queries {
            if !names.insert(q.name.as_str()) {
                return Err(EvalError::InvalidGroundTruth(format!("duplicate query {}", q.name)));
            }
            let mut seen = HashSet::new();
            for id in q.easy.iter().chain(&q.hard).chain(&q.junk) {
                if !roster.contains(id.as_str()) {
                    return Err(EvalError::InvalidGroundTruth(format!("query {}: {id} not in gallery", q.name)));
                }
                if !seen.insert(id.as_str()) {
                    return Err(EvalError::InvalidGroundTruth(format!("query {}: {id} in two label sets", q.name)));
                }
            }
        }
        Ok(())
    }

    pub fn query(&self, name: &str) -> Result<&GtQuery, EvalError> {
        self.queries.iter().find(|q| q.name == name).ok_or_else(|| EvalError::UnknownQuery(name.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Difficulty {
    E,
    M,
    H,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::E, Difficulty::M, Difficulty::H];
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "E" | "EASY" => Ok(Difficulty::E),
            "M" | "MEDIUM" => Ok(Difficulty::M),
            "H" | "HARD" => Ok(Difficulty::H),
            _ => Err(format!("unknown difficulty {s:?} (expected E, M or H)")),
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::E => "E",
            Difficulty::M => "M",
            Difficulty::H => "H",
        })
    }
}

/// Positive and ignored ids of one query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labels {
    pub positives: BTreeSet<String>,
    pub ignored: BTreeSet<String>,
}

/// E: easy positive, hard and junk ignored. M: easy and hard positive, junk
/// ignored. H: hard positive, easy and junk ignored.
pub fn resolve_labels(q: &GtQuery, difficulty: Difficulty) -> Labels {
    let set = |lists: &[&Vec<String>]| lists.iter().flat_map(|l| l.iter().cloned()).collect::<BTreeSet<_>>();
    let (positives, ignored) = match difficulty {
        Difficulty::E => (set(&[&q.easy]), set(&[&q.hard, &q.junk])),
        Difficulty::M => (set(&[&q.easy, &q.hard]), set(&[&q.junk])),
        Difficulty::H => (set(&[&q.hard]), set(&[&q.easy, &q.junk])),
    };
    Labels { positives, ignored }
}

/// Trapezoidal AP over the ranking with ignored ids removed. Starting from
/// precision 1 at recall 0, each positive found at cleaned rank `i` (the
/// `k`-th positive) adds `(p_prev + k/i)/2 · 1/|positives|`, where `p_prev` is
/// the precision at the previous positive. Positives never retrieved add
/// nothing.
pub fn average_precision<S: AsRef<str>>(ranked: &[S], positives: &BTreeSet<String>, ignored: &BTreeSet<String>) -> Result<f64, EvalError> {
    if positives.is_empty() {
        return Err(EvalError::NoPositives(String::new()));
    }
    let mut seen = HashSet::with_capacity(ranked.len());
    for id in ranked {
        if !seen.insert(id.as_ref()) {
            return Err(EvalError::DuplicateId(id.as_ref().to_string()));
        }
    }
    let step = 1.0 / positives.len() as f64;
    let (mut ap, mut old_precision, mut found, mut rank) = (0.0, 1.0, 0usize, 0usize);
    for id in ranked.iter().map(AsRef::as_ref) {
        if ignored.contains(id) {
            continue;
        }
        rank += 1;
        if positives.contains(id) {
            found += 1;
            let precision = found as f64 / rank as f64;
            ap += (old_precision + precision) / 2.0 * step;
            old_precision = precision;
        }
    }
    Ok(ap)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryAp {
    pub query: String,
    pub ap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub difficulty: Difficulty,
    pub map: f64,
    pub per_query: Vec<QueryAp>,
    /// Queries without positives under this difficulty.
    pub excluded: Vec<String>,
}

/// Mean AP over queries with at least one positive.
pub fn mean_average_precision<S: AsRef<str>>(
    rankings: &[(String, Vec<S>)],
    gt: &GroundTruth,
    difficulty: Difficulty,
) -> Result<MapReport, EvalError> {
    let mut per_query = Vec::new();
    let mut excluded = Vec::new();
    for (name, ranked) in rankings {
        let q = gt.query(name)?;
        let labels = resolve_labels(q, difficulty);
        match average_precision(ranked, &labels.positives, &labels.ignored) {
            Ok(ap) => per_query.push(QueryAp { query: name.clone(), ap }),
            Err(EvalError::NoPositives(_)) => excluded.push(name.clone()),
            Err(e) => return Err(e),
        }
    }
    if per_query.is_empty() {
        return Err(EvalError::AllQueriesExcluded);
    }
    let map = per_query.iter().map(|q| q.ap).sum::<f64>() / per_query.len() as f64;
    Ok(MapReport { difficulty, map, per_query, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    /// Second implementation: drop ignored ids, list the precision at every
    /// positive, then integrate with the trapezoid rule from precision 1.
    fn naive_ap(ranked: &[String], pos: &BTreeSet<String>, ign: &BTreeSet<String>) -> f64 {
        let clean: Vec<&String> = ranked.iter().filter(|id| !ign.contains(*id)).collect();
        let mut precisions = vec![1.0];
        let mut hits = 0.0;
        for (i, id) in clean.iter().enumerate() {
            if pos.contains(*id) {
                hits += 1.0;
                precisions.push(hits / (i as f64 + 1.0));
            }
        }
        precisions.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum::<f64>() / pos.len() as f64
    }

    fn query() -> GtQuery {
        GtQuery { name: "q".into(), bbox: None, easy: vec!["a".into()], hard: vec!["b".into()], junk: vec!["c".into()] }
    }

    #[test]
    fn label_resolution_table() {
        let cases = [
            (Difficulty::E, set(&["a"]), set(&["b", "c"])),
            (Difficulty::M, set(&["a", "b"]), set(&["c"])),
            (Difficulty::H, set(&["b"]), set(&["a", "c"])),
        ];
        for (d, pos, ign) in cases {
            assert_eq!(resolve_labels(&query(), d), Labels { positives: pos, ignored: ign }, "{d}");
        }
    }

    #[test]
    fn ap_worked_cases() {
        let none = BTreeSet::new();
        assert_eq!(average_precision(&["p"], &set(&["p"]), &none).unwrap(), 1.0);
        let ap = average_precision(&["p1", "n", "p2"], &set(&["p1", "p2"]), &none).unwrap();
        assert!((ap - (0.5 * (1.0 + 1.0) / 2.0 + 0.5 * (1.0 + 2.0 / 3.0) / 2.0)).abs() < 1e-12);
        assert!((ap - 0.91667).abs() < 1e-5);
        assert_eq!(average_precision(&["j", "p"], &set(&["p"]), &set(&["j"])).unwrap(), 1.0);
        assert!(matches!(average_precision(&["x"], &none, &none), Err(EvalError::NoPositives(_))));
        assert!(matches!(average_precision(&["x", "x"], &set(&["x"]), &none), Err(EvalError::DuplicateId(_))));
        // unretrieved positive truncates recall
        assert!((average_precision(&["p"], &set(&["p", "q"]), &none).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn map_and_exclusion() {
        let gt = GroundTruth {
            gallery: ["a", "b", "c", "d"].map(String::from).to_vec(),
            queries: vec![
                GtQuery { name: "q1".into(), bbox: None, easy: vec!["a".into()], hard: vec![], junk: vec![] },
                GtQuery { name: "q2".into(), bbox: None, easy: vec!["b".into()], hard: vec!["c".into()], junk: vec![] },
            ],
        };
        gt.validate().unwrap();
        let r = vec![("q1".to_string(), vec!["a", "b", "c", "d"]), ("q2".to_string(), vec!["a", "b", "d", "c"])];
        let e = mean_average_precision(&r, &gt, Difficulty::E).unwrap();
        // q1: 1.0; q2 (E: pos b, ign c): ranks a,b,d → b at 2 → (1 + 0.5)/2
        assert!((e.map - (1.0 + 0.75) / 2.0).abs() < 1e-12);
        let h = mean_average_precision(&r, &gt, Difficulty::H).unwrap();
        assert_eq!(h.excluded, vec!["q1".to_string()]);
        assert_eq!(h.per_query.len(), 1);
        let only_q1 = vec![("q1".to_string(), vec!["a"])];
        assert!(matches!(mean_average_precision(&only_q1, &gt, Difficulty::H), Err(EvalError::AllQueriesExcluded)));
        let unknown = vec![("zz".to_string(), vec!["a"])];
        assert!(matches!(mean_average_precision(&unknown, &gt, Difficulty::M), Err(EvalError::UnknownQuery(_))));

        let mut bad = gt.clone();
        bad.queries[1].junk.push("b".into());
        assert!(bad.validate().is_err());
        let json = gt.to_json();
        assert_eq!(serde_json::from_str::<GroundTruth>(&json).unwrap(), gt);
    }

    #[test]
    fn two_query_mean() {
        let gt = GroundTruth {
            gallery: ["a", "b"].map(String::from).to_vec(),
            queries: vec![
                GtQuery { name: "x".into(), bbox: None, easy: vec!["a".into()], hard: vec![], junk: vec![] },
                GtQuery { name: "y".into(), bbox: None, easy: vec!["a".into(), "b".into()], hard: vec![], junk: vec![] },
            ],
        };
        // x: 1.0. y: only "a" retrieved → 0.5
        let r = vec![("x".to_string(), vec!["a"]), ("y".to_string(), vec!["a"])];
        assert!((mean_average_precision(&r, &gt, Difficulty::E).unwrap().map - 0.75).abs() < 1e-12);
    }

    fn instance() -> impl Strategy<Value = (Vec<String>, BTreeSet<String>, BTreeSet<String>)> {
        (1usize..=20).prop_flat_map(|n| {
            let ids: Vec<String> = (0..n).map(|i| format!("g{i}")).collect();
            (Just(n), prop::collection::vec(0u8..3, n), Just(ids).prop_shuffle())
        })
        .prop_filter_map("needs a positive", |(_, kinds, ids)| {
            let pos: BTreeSet<String> = ids.iter().zip(&kinds).filter(|(_, k)| **k == 0).map(|(i, _)| i.clone()).collect();
            let ign: BTreeSet<String> = ids.iter().zip(&kinds).filter(|(_, k)| **k == 2).map(|(i, _)| i.clone()).collect();
            (!pos.is_empty()).then_some((ids, pos, ign))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn ap_matches_naive_oracle((ranked, pos, ign) in instance()) {
            let ap = average_precision(&ranked, &pos, &ign).unwrap();
            prop_assert!((ap - naive_ap(&ranked, &pos, &ign)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ap));
        }

        #[test]
        fn ap_is_one_iff_positives_lead((ranked, pos, ign) in instance()) {
            let ap = average_precision(&ranked, &pos, &ign).unwrap();
            let clean: Vec<&String> = ranked.iter().filter(|i| !ign.contains(*i)).collect();
            let lead = clean.iter().take(pos.len()).all(|i| pos.contains(*i));
            prop_assert_eq!((ap - 1.0).abs() < 1e-12, lead);
        }

        #[test]
        fn promoting_a_positive_never_hurts((ranked, pos, ign) in instance(), at in 0usize..20) {
            let mut better = ranked.clone();
            if at + 1 < better.len() && !pos.contains(&better[at]) && pos.contains(&better[at + 1]) {
                better.swap(at, at + 1);
            }
            prop_assert!(average_precision(&better, &pos, &ign).unwrap() >= average_precision(&ranked, &pos, &ign).unwrap() - 1e-12);
        }

        #[test]
        fn ignored_insertions_are_invisible((ranked, pos, ign) in instance(), slots in prop::collection::vec(0usize..25, 1..5)) {
            let mut with = ranked.clone();
            let mut ign2 = ign.clone();
            for (k, s) in slots.iter().enumerate() {
                let id = format!("junk{k}");
                with.insert((*s).min(with.len()), id.clone());
                ign2.insert(id);
            }
            let a = average_precision(&ranked, &pos, &ign).unwrap();
            let b = average_precision(&with, &pos, &ign2).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }

        #[test]
        fn difficulty_partition(kinds in prop::collection::vec(0u8..4, 0..12)) {
            let mut q = GtQuery { name: "q".into(), bbox: None, easy: vec![], hard: vec![], junk: vec![] };
            for (i, k) in kinds.iter().enumerate() {
                let id = format!("g{i}");
                match k { 0 => q.easy.push(id), 1 => q.hard.push(id), 2 => q.junk.push(id), _ => {} }
            }
            let e = resolve_labels(&q, Difficulty::E).positives;
            let m = resolve_labels(&q, Difficulty::M).positives;
            let h = resolve_labels(&q, Difficulty::H).positives;
            prop_assert_eq!(e.union(&h).cloned().collect::<BTreeSet<_>>(), m);
            prop_assert!(e.is_disjoint(&h));
        }
    }
}
