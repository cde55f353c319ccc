//! Target prediction with learned patterns: choosing a small set of
//! representative patterns, running them for a source, and fusing their
//! answers into ranked target lists.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use kodama::{linkage, Method};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bgp::{EvalStatus, SelectQuery, ValuesTable, Variable};
use crate::endpoint::{Endpoint, EndpointError};
use crate::evolution::AcceptedPattern;
use crate::rdf::Term;

/// Precision mass lost when only `selected` patterns are kept:
/// Σ_i (max over all pv_i − max over selected pv_i).
pub fn precision_loss(patterns: &[AcceptedPattern], selected: &[usize]) -> f64 {
    let dims = patterns.first().map_or(0, |p| p.evaluation.pv.len());
    (0..dims)
        .map(|i| {
            let all = patterns
                .iter()
                .map(|p| p.evaluation.pv[i])
                .fold(0.0, f64::max);
            let sel = selected
                .iter()
                .map(|&j| patterns[j].evaluation.pv[i])
                .fold(0.0, f64::max);
            all - sel
        })
        .sum()
}

/// Σ_i max over all patterns of pv_i.
pub fn precision_mass(patterns: &[AcceptedPattern]) -> f64 {
    precision_loss(patterns, &[])
}

/// Orders patterns by score, then by the whole fitness tuple, then by
/// canonical key so the choice is deterministic.
fn better(a: &AcceptedPattern, b: &AcceptedPattern) -> Ordering {
    a.fitness
        .score
        .total_cmp(&b.fitness.score)
        .then(a.fitness.cmp(&b.fitness))
        .then(b.key.cmp(&a.key))
}

/// The best-scoring member of each cluster, sorted by pattern index.
pub fn representatives(patterns: &[AcceptedPattern], clusters: &[Vec<usize>]) -> Vec<usize> {
    let mut reps: Vec<usize> = clusters
        .iter()
        .filter_map(|c| {
            c.iter()
                .copied()
                .max_by(|&a, &b| better(&patterns[a], &patterns[b]))
        })
        .collect();
    reps.sort_unstable();
    reps
}

/// Ward clustering of the rows of `features` cut into `k` clusters.
pub fn ward_clusters(features: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    let n = features.len();
    if k >= n {
        return (0..n).map(|i| vec![i]).collect();
    }
    let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = features[i]
                .iter()
                .zip(&features[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            condensed.push(d.sqrt());
        }
    }
    let dendrogram = linkage(&mut condensed, n, Method::Ward);
    // cluster label -> members; merged clusters get label n + step
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    for step in dendrogram.steps().iter().take(n - k.max(1)) {
        let mut a = members[step.cluster1].take().expect("live cluster");
        let b = members[step.cluster2].take().expect("live cluster");
        a.extend(b);
        a.sort_unstable();
        members.push(Some(a));
    }
    let mut out: Vec<Vec<usize>> = members.into_iter().flatten().collect();
    out.sort();
    out
}

/// Each dimension divided by its maximum over patterns; all-zero
/// dimensions are dropped.
pub fn max_scaled(features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dims = features.first().map_or(0, Vec::len);
    let maxima: Vec<f64> = (0..dims)
        .map(|d| features.iter().map(|f| f[d]).fold(0.0, f64::max))
        .collect();
    features
        .iter()
        .map(|f| {
            f.iter()
                .zip(&maxima)
                .filter(|(_, &m)| m > 0.0)
                .map(|(v, m)| v / m)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    /// Indices of the kept patterns, ascending.
    pub representatives: Vec<usize>,
    pub variant: String,
    pub k: usize,
    pub loss: f64,
    /// Loss of every clustering variant tried.
    pub variants: Vec<(String, f64)>,
}

/// Picks at most `k` representative patterns, trying each clustering
/// variant and keeping the one with the least precision loss.
pub fn reduce_queries(patterns: &[AcceptedPattern], k: usize) -> Reduction {
    let n = patterns.len();
    if k >= n {
        return Reduction {
            representatives: (0..n).collect(),
            variant: "all".into(),
            k,
            loss: 0.0,
            variants: Vec::new(),
        };
    }
    let raw: Vec<Vec<f64>> = patterns.iter().map(|p| p.evaluation.pv.clone()).collect();
    let scaled = max_scaled(&raw);
    let mut best: Option<(String, Vec<usize>, f64)> = None;
    let mut variants = Vec::new();
    for (name, features) in [("ward", &raw), ("ward_scaled", &scaled)] {
        let reps = representatives(patterns, &ward_clusters(features, k.max(1)));
        let loss = precision_loss(patterns, &reps);
        variants.push((name.to_string(), loss));
        if best.as_ref().is_none_or(|b| loss < b.2) {
            best = Some((name.to_string(), reps, loss));
        }
    }
    let (variant, representatives, loss) = best.expect("at least one variant");
    Reduction {
        representatives,
        variant,
        k,
        loss,
        variants,
    }
}

/// Target set of every pattern for one source. Patterns whose query does
/// not complete contribute an empty set.
pub fn predict_targets(
    endpoint: &Endpoint,
    patterns: &[&AcceptedPattern],
    source: &Term,
) -> Result<Vec<BTreeSet<Term>>, EndpointError> {
    let limit = endpoint.config().prediction_limit;
    patterns
        .par_iter()
        .map(|p| {
            let q = SelectQuery::new(p.pattern.clone(), vec![Variable::target()])
                .with_values(ValuesTable::single(Variable::source(), [source.clone()]))
                .with_limit(Some(limit));
            let r = endpoint.run_select(&q)?;
            Ok(if r.status == EvalStatus::Complete {
                r.rows.into_iter().map(|mut row| row.remove(0)).collect()
            } else {
                BTreeSet::new()
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    TargetOccs,
    Scores,
    FMeasures,
    GpPrecisions,
    Precisions,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::TargetOccs,
        Strategy::Scores,
        Strategy::FMeasures,
        Strategy::GpPrecisions,
        Strategy::Precisions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::TargetOccs => "target_occs",
            Strategy::Scores => "scores",
            Strategy::FMeasures => "f_measures",
            Strategy::GpPrecisions => "gp_precisions",
            Strategy::Precisions => "precisions",
        }
    }

    pub fn parse(name: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub source: Term,
    pub rankings: BTreeMap<Strategy, Vec<(Term, f64)>>,
}

impl RankedPrediction {
    pub fn ranking(&self, strategy: Strategy) -> &[(Term, f64)] {
        self.rankings.get(&strategy).map_or(&[], Vec::as_slice)
    }
}

/// Sorts by value, highest first; ties by target. Values are compared at
/// 1e-9 resolution so sums that differ only by rounding tie.
pub fn rank(values: BTreeMap<Term, f64>) -> Vec<(Term, f64)> {
    let mut out: Vec<(Term, f64)> = values.into_iter().collect();
    let level = |v: f64| (v * 1e9).round();
    out.sort_by(|a, b| {
        level(b.1)
            .total_cmp(&level(a.1))
            .then_with(|| a.0.cmp(&b.0))
    });
    out
}

/// Combines per-pattern target sets (`sets[i]` from `patterns[i]`) into
/// one ranked list per fusion strategy.
pub fn fuse(
    source: &Term,
    sets: &[BTreeSet<Term>],
    patterns: &[&AcceptedPattern],
) -> RankedPrediction {
    let mut acc: BTreeMap<Strategy, BTreeMap<Term, f64>> = BTreeMap::new();
    for (set, p) in sets.iter().zip(patterns) {
        let share = 1.0 / set.len() as f64;
        for t in set {
            let contributions = [
                (Strategy::TargetOccs, 1.0),
                (Strategy::Scores, p.fitness.score),
                (Strategy::FMeasures, p.fitness.f1),
                (Strategy::GpPrecisions, p.evaluation.precision),
                (Strategy::Precisions, share),
            ];
            for (s, v) in contributions {
                *acc.entry(s).or_default().entry(t.clone()).or_insert(0.0) += v;
            }
        }
    }
    RankedPrediction {
        source: source.clone(),
        rankings: Strategy::ALL
            .into_iter()
            .map(|s| (s, rank(acc.remove(&s).unwrap_or_default())))
            .collect(),
    }
}
