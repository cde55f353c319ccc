//! Fitness of a graph pattern with respect to a ground truth, and the
//! cross-run coverage ledger.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bgp::{EvalStatus, GraphPattern, SelectQuery, ValuesTable, Variable};
use crate::endpoint::{Endpoint, EndpointError};
use crate::rdf::Term;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroundTruthError {
    #[error("ground truth is empty")]
    Empty,
    #[error("row {row}: {term} is not an IRI")]
    NotIri { row: usize, term: String },
    #[error("row {row} duplicates row {first}")]
    Duplicate { row: usize, first: usize },
}

/// Ordered, duplicate-free list of source-target IRI pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(Term, Term)>", into = "Vec<(Term, Term)>")]
pub struct GroundTruth {
    pairs: Vec<(Term, Term)>,
}

impl GroundTruth {
    /// Rows are numbered from 1 in errors.
    pub fn new(pairs: Vec<(Term, Term)>) -> Result<GroundTruth, GroundTruthError> {
        if pairs.is_empty() {
            return Err(GroundTruthError::Empty);
        }
        let mut first: HashMap<&(Term, Term), usize> = HashMap::new();
        for (i, pair) in pairs.iter().enumerate() {
            for t in [&pair.0, &pair.1] {
                if !t.is_iri() {
                    return Err(GroundTruthError::NotIri {
                        row: i + 1,
                        term: t.to_string(),
                    });
                }
            }
            if let Some(&f) = first.get(pair) {
                return Err(GroundTruthError::Duplicate {
                    row: i + 1,
                    first: f + 1,
                });
            }
            first.insert(pair, i);
        }
        Ok(GroundTruth { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(Term, Term)] {
        &self.pairs
    }

    /// Distinct sources in first-occurrence order.
    pub fn sources(&self) -> Vec<Term> {
        let mut seen = HashSet::new();
        self.pairs
            .iter()
            .filter(|(s, _)| seen.insert(s))
            .map(|(s, _)| s.clone())
            .collect()
    }

    pub fn subset(&self, idx: &[usize]) -> GroundTruth {
        GroundTruth {
            pairs: idx.iter().map(|&i| self.pairs[i].clone()).collect(),
        }
    }
}

impl TryFrom<Vec<(Term, Term)>> for GroundTruth {
    type Error = GroundTruthError;

    fn try_from(pairs: Vec<(Term, Term)>) -> Result<Self, Self::Error> {
        GroundTruth::new(pairs)
    }
}

impl From<GroundTruth> for Vec<(Term, Term)> {
    fn from(gt: GroundTruth) -> Self {
        gt.pairs
    }
}

/// Best precision reached so far for every ground truth pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageLedger {
    pub best: Vec<f64>,
}

impl CoverageLedger {
    pub fn new(len: usize) -> CoverageLedger {
        CoverageLedger {
            best: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.best.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best.is_empty()
    }

    pub fn remains(&self) -> f64 {
        self.best.iter().map(|b| 1.0 - b).sum()
    }

    /// Elementwise maximum with each precision vector.
    pub fn update<'a>(&mut self, pvs: impl IntoIterator<Item = &'a [f64]>) {
        for pv in pvs {
            for (b, &p) in self.best.iter_mut().zip(pv) {
                if p > *b {
                    *b = p;
                }
            }
        }
    }
}

pub fn update_ledger(
    ledger: &CoverageLedger,
    evaluations: &[&PatternEvaluation],
) -> CoverageLedger {
    let mut next = ledger.clone();
    next.update(evaluations.iter().map(|e| e.pv.as_slice()));
    next
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitnessConfig {
    pub overfit_factor: f64,
    pub overfit_min_sources: usize,
    pub overfit_min_targets: usize,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        FitnessConfig {
            overfit_factor: 0.1,
            overfit_min_sources: 2,
            overfit_min_targets: 2,
        }
    }
}

/// Lexicographically compared fitness record. Fields marked (min) are
/// better when smaller.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct FitnessTuple {
    pub remains: f64,
    pub score: f64,
    pub gain: f64,
    pub f1: f64,
    /// (min)
    pub avg_result_len: f64,
    pub gt_matches: usize,
    /// (min)
    pub pattern_length: usize,
    /// (min)
    pub pattern_vars: usize,
    /// (min)
    pub timeout_penalty: f64,
    /// (min)
    pub query_time_s: f64,
}

impl FitnessTuple {
    /// The worst possible fitness; used for individuals that cannot be
    /// evaluated.
    pub fn worst() -> FitnessTuple {
        FitnessTuple {
            remains: f64::NEG_INFINITY,
            score: f64::NEG_INFINITY,
            gain: f64::NEG_INFINITY,
            f1: f64::NEG_INFINITY,
            avg_result_len: f64::INFINITY,
            gt_matches: 0,
            pattern_length: usize::MAX,
            pattern_vars: usize::MAX,
            timeout_penalty: f64::INFINITY,
            query_time_s: f64::INFINITY,
        }
    }
}

impl Ord for FitnessTuple {
    fn cmp(&self, other: &Self) -> Ordering {
        self.remains
            .total_cmp(&other.remains)
            .then(self.score.total_cmp(&other.score))
            .then(self.gain.total_cmp(&other.gain))
            .then(self.f1.total_cmp(&other.f1))
            .then(other.avg_result_len.total_cmp(&self.avg_result_len))
            .then(self.gt_matches.cmp(&other.gt_matches))
            .then(other.pattern_length.cmp(&self.pattern_length))
            .then(other.pattern_vars.cmp(&self.pattern_vars))
            .then(other.timeout_penalty.total_cmp(&self.timeout_penalty))
            .then(other.query_time_s.total_cmp(&self.query_time_s))
    }
}

impl PartialOrd for FitnessTuple {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for FitnessTuple {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for FitnessTuple {}

/// Per-pair outcome of running a pattern against the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternEvaluation {
    /// Precision per ground truth pair.
    pub pv: Vec<f64>,
    pub covered: Vec<bool>,
    /// Number of predicted targets for each pair's source.
    pub result_lens: Vec<usize>,
    pub recall: f64,
    pub precision: f64,
    pub status: EvalStatus,
}

impl PatternEvaluation {
    fn empty(n: usize, status: EvalStatus) -> PatternEvaluation {
        PatternEvaluation {
            pv: vec![0.0; n],
            covered: vec![false; n],
            result_lens: vec![0; n],
            recall: 0.0,
            precision: 0.0,
            status,
        }
    }

    pub fn gt_matches(&self) -> usize {
        self.covered.iter().filter(|&&c| c).count()
    }
}

/// `gain` scaled down when the covered pairs concentrate on too few
/// sources or targets.
pub fn score(
    gain: f64,
    evaluation: &PatternEvaluation,
    gt: &GroundTruth,
    cfg: &FitnessConfig,
) -> f64 {
    let mut sources = BTreeSet::new();
    let mut targets = BTreeSet::new();
    for ((s, t), &c) in gt.pairs().iter().zip(&evaluation.covered) {
        if c {
            sources.insert(s);
            targets.insert(t);
        }
    }
    if sources.len() < cfg.overfit_min_sources || targets.len() < cfg.overfit_min_targets {
        gain * cfg.overfit_factor
    } else {
        gain
    }
}

/// Fills the per-pair metrics from the predicted target set of every
/// source. Sources missing from the map predict nothing.
pub fn evaluation_from_predictions(
    gt: &GroundTruth,
    predictions: &HashMap<Term, HashSet<Term>>,
    status: EvalStatus,
) -> PatternEvaluation {
    let n = gt.len();
    let mut ev = PatternEvaluation::empty(n, status);
    let mut total_len = 0usize;
    for (i, (s, t)) in gt.pairs().iter().enumerate() {
        let Some(pred) = predictions.get(s) else {
            continue;
        };
        ev.result_lens[i] = pred.len();
        total_len += pred.len();
        if pred.contains(t) {
            ev.covered[i] = true;
            ev.pv[i] = 1.0 / pred.len() as f64;
        }
    }
    ev.recall = ev.gt_matches() as f64 / n as f64;
    let avg = total_len as f64 / n as f64;
    ev.precision = if avg > 0.0 { 1.0 / avg } else { 0.0 };
    ev
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision > 0.0 && recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Builds the fitness tuple of an evaluation against the current ledger.
pub fn fitness_tuple(
    gp: &GraphPattern,
    ev: &PatternEvaluation,
    gt: &GroundTruth,
    ledger: &CoverageLedger,
    query_time_s: f64,
    cfg: &FitnessConfig,
) -> FitnessTuple {
    let n = gt.len().max(1);
    let avg_result_len = ev.result_lens.iter().sum::<usize>() as f64 / n as f64;
    let penalty = ev.status.penalty();
    let gain = if penalty > 0.0 || !gp.is_complete() {
        0.0
    } else {
        ev.pv
            .iter()
            .zip(&ledger.best)
            .map(|(p, b)| (p - b).max(0.0))
            .sum()
    };
    FitnessTuple {
        remains: ledger.remains(),
        score: score(gain, ev, gt, cfg),
        gain,
        f1: f1(ev.precision, ev.recall),
        avg_result_len,
        gt_matches: ev.gt_matches(),
        pattern_length: gp.len(),
        pattern_vars: gp.var_count(),
        timeout_penalty: penalty,
        query_time_s,
    }
}

/// Runs `gp` for every distinct ground truth source in one batched
/// `SELECT ?source ?target` and derives all fitness dimensions.
/// Incomplete patterns are not queried and score zero everywhere.
pub fn evaluate(
    endpoint: &Endpoint,
    gp: &GraphPattern,
    gt: &GroundTruth,
    ledger: &CoverageLedger,
    cfg: &FitnessConfig,
) -> Result<(PatternEvaluation, FitnessTuple), EndpointError> {
    if !gp.is_complete() {
        let ev = PatternEvaluation::empty(gt.len(), EvalStatus::Complete);
        let fit = fitness_tuple(gp, &ev, gt, ledger, 0.0, cfg);
        return Ok((ev, fit));
    }
    let q = SelectQuery::new(gp.clone(), vec![Variable::source(), Variable::target()])
        .with_values(ValuesTable::single(Variable::source(), gt.sources()));
    let r = endpoint.run_select(&q)?;
    let mut predictions: HashMap<Term, HashSet<Term>> = HashMap::new();
    for row in &r.rows {
        predictions
            .entry(row[0].clone())
            .or_default()
            .insert(row[1].clone());
    }
    let ev = evaluation_from_predictions(gt, &predictions, r.status);
    let fit = fitness_tuple(gp, &ev, gt, ledger, r.elapsed, cfg);
    Ok((ev, fit))
}
