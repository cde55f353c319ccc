//! Held-out evaluation: train/test split, ranking metrics, graph-centrality
//! baselines and the comparison table.

mod graph;

use std::fmt::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::endpoint::{Endpoint, EndpointError};
use crate::evolution::AcceptedPattern;
use crate::fitness::GroundTruth;
use crate::predict::{
    fuse, predict_targets, reduce_queries, RankedPrediction, Reduction, Strategy,
};
use crate::rdf::{Direction, Term, TripleStore};

pub use graph::{baseline_predict, direction_name, hits, pagerank, GraphScores, Scorer};

/// Row indices of a ground truth split into train and test parts, both in
/// input order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Random split with `floor(ratio * n)` test rows.
pub fn split(n: usize, ratio: f64, seed: u64) -> Split {
    let test_len = ((ratio.clamp(0.0, 1.0) * n as f64).floor() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = index::sample(&mut rng, n, test_len).into_vec();
    test.sort_unstable();
    let mut is_test = vec![false; n];
    for &i in &test {
        is_test[i] = true;
    }
    Split {
        train: (0..n).filter(|&i| !is_test[i]).collect(),
        test,
        seed,
    }
}

/// 1-based rank of `truth` in `ranked`, `None` when absent.
pub fn rank_of_truth<'a>(
    ranked: impl IntoIterator<Item = &'a Term>,
    truth: &Term,
) -> Option<usize> {
    ranked.into_iter().position(|t| t == truth).map(|i| i + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    /// Recall@k for k = 1..=10.
    pub recall_at_k: Vec<f64>,
    pub map: f64,
    pub ndcg: f64,
}

impl MetricReport {
    pub fn recall_at(&self, k: usize) -> f64 {
        self.recall_at_k[k - 1]
    }
}

/// Metrics for one relevant target per query: AP = 1/r, NDCG = 1/log2(r+1).
pub fn metrics(ranks: &[Option<usize>]) -> MetricReport {
    let n = ranks.len();
    let mean = |f: &dyn Fn(usize) -> f64| -> f64 {
        if n == 0 {
            0.0
        } else {
            ranks.iter().map(|r| r.map_or(0.0, f)).sum::<f64>() / n as f64
        }
    };
    MetricReport {
        n,
        recall_at_k: (1..=10)
            .map(|k| mean(&|r| if r <= k { 1.0 } else { 0.0 }))
            .collect(),
        map: mean(&|r| 1.0 / r as f64),
        ndcg: mean(&|r| 1.0 / ((r + 1) as f64).log2()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub ranks: Vec<Option<usize>>,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub test_size: usize,
    pub patterns: usize,
    pub reduction: Reduction,
    /// Baseline rows first, then one row per fusion strategy.
    pub rows: Vec<ReportRow>,
    pub predictions: Vec<RankedPrediction>,
}

impl EvaluationReport {
    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Plain-text table: one row per method, Recall@{1..5,10}, MAP, NDCG.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:>16}", "");
        for h in [
            "Recall@1",
            "Recall@2",
            "Recall@3",
            "Recall@4",
            "Recall@5",
            "Recall@10",
            "MAP",
            "NDCG",
        ] {
            let _ = write!(out, " {h:>9}");
        }
        out.push('\n');
        for row in &self.rows {
            let m = &row.metrics;
            let _ = write!(out, "{:>16}", row.name);
            for v in [1, 2, 3, 4, 5, 10]
                .map(|k| m.recall_at(k))
                .into_iter()
                .chain([m.map, m.ndcg])
            {
                let _ = write!(out, " {v:>9.3}");
            }
            out.push('\n');
        }
        out
    }
}

pub const BASELINE_SCORERS: [Scorer; 4] = [
    Scorer::OutDeg,
    Scorer::InDeg,
    Scorer::PageRank,
    Scorer::HitsAuthority,
];
pub const DIRECTIONS: [Direction; 3] = [Direction::In, Direction::Out, Direction::Bidi];

/// Predicts a target ranking for every test source with the learned
/// patterns (reduced to `k` queries) and, when a store is given, with the
/// neighbourhood baselines; then scores each method.
pub fn evaluate_patterns(
    endpoint: &Endpoint,
    store: Option<&TripleStore>,
    patterns: &[AcceptedPattern],
    test: &GroundTruth,
    k: usize,
) -> Result<EvaluationReport, EndpointError> {
    let reduction = reduce_queries(patterns, k);
    let reps: Vec<&AcceptedPattern> = reduction
        .representatives
        .iter()
        .map(|&i| &patterns[i])
        .collect();
    let mut rows = Vec::new();
    if let Some(store) = store {
        let scores = GraphScores::compute(store);
        for scorer in BASELINE_SCORERS {
            for dir in DIRECTIONS {
                let ranks: Vec<Option<usize>> = test
                    .pairs()
                    .iter()
                    .map(|(s, t)| {
                        let ranked = baseline_predict(store, &scores, s, dir, scorer, usize::MAX);
                        rank_of_truth(ranked.iter().map(|(t, _)| t), t)
                    })
                    .collect();
                rows.push(ReportRow {
                    name: format!("{} {}", scorer.name(), direction_name(dir)),
                    metrics: metrics(&ranks),
                    ranks,
                });
            }
        }
    }
    let mut predictions = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (s, _) in test.pairs() {
        if seen.insert(s) {
            let sets = predict_targets(endpoint, &reps, s)?;
            predictions.push(fuse(s, &sets, &reps));
        }
    }
    for strategy in Strategy::ALL {
        let ranks: Vec<Option<usize>> = test
            .pairs()
            .iter()
            .map(|(s, t)| {
                let p = predictions
                    .iter()
                    .find(|p| &p.source == s)
                    .expect("predicted");
                rank_of_truth(p.ranking(strategy).iter().map(|(t, _)| t), t)
            })
            .collect();
        rows.push(ReportRow {
            name: strategy.name().replace('_', " "),
            metrics: metrics(&ranks),
            ranks,
        });
    }
    Ok(EvaluationReport {
        test_size: test.len(),
        patterns: patterns.len(),
        reduction,
        rows,
        predictions,
    })
}
