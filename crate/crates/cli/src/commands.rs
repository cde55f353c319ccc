//! The `learn`, `predict`, `evaluate` and `report` commands.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::SystemTime;

use anyhow::{bail, Context, Result};
use gplearn::endpoint::{BackendSpec, Endpoint, EndpointError};
use gplearn::evalharness::{evaluate_patterns, split, EvaluationReport, Split};
use gplearn::evolution::{learn, learn_from, AcceptedPattern, EvolutionError, LearnState};
use gplearn::predict::{
    fuse, predict_targets, reduce_queries, RankedPrediction, Reduction, Strategy,
};
use gplearn::rdf::TripleStore;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::gtfile::{parse_sources, read_ground_truth, GtFileError};
use crate::output::{read_json, write_json, RunFile, SessionDir, Timings};
use crate::report::Report;

pub const EXIT_GROUND_TRUTH: i32 = 2;
pub const EXIT_UNREACHABLE: i32 = 3;

/// Process exit code for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<GtFileError>().is_some() {
            return EXIT_GROUND_TRUTH;
        }
        let endpoint = cause.downcast_ref::<EndpointError>().or_else(|| {
            match cause.downcast_ref::<EvolutionError>() {
                Some(EvolutionError::Endpoint(e)) => Some(e),
                _ => None,
            }
        });
        if let Some(EndpointError::Unreachable { .. }) = endpoint {
            return EXIT_UNREACHABLE;
        }
    }
    1
}

/// Where queries go. A store path or URL given here replaces the
/// configured backend.
#[derive(Debug, Clone, Default)]
pub struct Source {
    pub store: Option<PathBuf>,
    pub endpoint: Option<String>,
}

impl Source {
    fn apply(&self, cfg: &mut Config) {
        if let Some(p) = &self.store {
            cfg.endpoint.backend = Some(BackendSpec::Local(p.clone()));
        }
        if let Some(u) = &self.endpoint {
            cfg.endpoint.backend = Some(BackendSpec::Remote(u.clone()));
        }
    }
}

fn connect(cfg: &Config) -> Result<(Endpoint, Option<Arc<TripleStore>>)> {
    Ok(Endpoint::from_config(&cfg.endpoint)?)
}

#[derive(Debug, Clone)]
pub struct LearnArgs {
    pub config: Config,
    pub gt: PathBuf,
    pub source: Source,
    pub out: PathBuf,
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnSummary {
    pub runs: usize,
    pub next_run: usize,
    pub patterns: usize,
    pub remains: f64,
}

pub fn cmd_learn(args: &LearnArgs) -> Result<LearnSummary> {
    let mut cfg = args.config.clone();
    args.source.apply(&mut cfg);
    let gt = read_ground_truth(&args.gt)?;
    let session = SessionDir::new(&args.out);
    let mut state = if args.resume && session.state().exists() {
        let saved = session.read_gt()?;
        if saved != gt {
            bail!(
                "{} holds a session for a different ground truth",
                args.out.display()
            );
        }
        let mut s = session.read_state()?;
        s.finished =
            s.ledger.remains() < cfg.evolution.min_remains || s.next_run > cfg.evolution.max_runs;
        s
    } else {
        if session.runs().exists() {
            std::fs::remove_dir_all(session.runs())
                .with_context(|| format!("clearing {}", session.runs().display()))?;
        }
        LearnState::new(gt.len())
    };
    let (endpoint, _) = connect(&cfg)?;
    write_json(&session.config(), &cfg)?;
    write_json(&session.gt(), &gt)?;
    write_json(&session.state(), &state)?;
    let first = state.next_run;
    let mut started = SystemTime::now();
    learn_from(&endpoint, &gt, &cfg.evolution, &mut state, |state, log| {
        let file = RunFile {
            log: log.clone(),
            timings: Timings::since(started),
        };
        write_json(&session.run(log.run), &file)
            .and_then(|_| write_json(&session.state(), state))
            .map_err(|e| EvolutionError::Output(format!("{e:#}")))?;
        started = SystemTime::now();
        Ok(())
    })?;
    write_json(&session.patterns(), &state.accepted)?;
    write_report(&session, &args.out)?;
    Ok(LearnSummary {
        runs: state.next_run - first,
        next_run: state.next_run,
        patterns: state.accepted.len(),
        remains: state.ledger.remains(),
    })
}

/// Writes `report.json` and `report.html` for a session into `out`.
pub fn write_report(session: &SessionDir, out: &Path) -> Result<Report> {
    let gt = session.read_gt()?;
    let runs = session.read_runs()?;
    let report = Report::build(&gt, &runs);
    write_json(&out.join("report.json"), &report)?;
    std::fs::write(out.join("report.html"), report.to_html()).context("writing report.html")?;
    Ok(report)
}

pub fn cmd_report(session: &Path, out: Option<&Path>) -> Result<Report> {
    write_report(&SessionDir::new(session), out.unwrap_or(session))
}

/// Accepts a session directory or a patterns file.
pub fn load_patterns(path: &Path) -> Result<Vec<AcceptedPattern>> {
    if path.is_dir() {
        SessionDir::new(path).read_patterns()
    } else {
        read_json(path)
    }
}

#[derive(Debug, Clone)]
pub struct PredictArgs {
    pub config: Config,
    pub patterns: PathBuf,
    pub sources: PathBuf,
    pub source: Source,
    pub k: usize,
    pub strategy: Option<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictOutput {
    pub reduction: Reduction,
    pub predictions: Vec<RankedPrediction>,
}

pub fn cmd_predict(args: &PredictArgs) -> Result<PredictOutput> {
    let mut cfg = args.config.clone();
    args.source.apply(&mut cfg);
    let patterns = load_patterns(&args.patterns)?;
    let text = std::fs::read_to_string(&args.sources)
        .with_context(|| format!("reading {}", args.sources.display()))?;
    let sources = parse_sources(&text, &args.sources.display().to_string())?;
    let (endpoint, _) = connect(&cfg)?;
    let reduction = reduce_queries(&patterns, args.k);
    let reps: Vec<&AcceptedPattern> = reduction
        .representatives
        .iter()
        .map(|&i| &patterns[i])
        .collect();
    let mut predictions = Vec::new();
    for s in &sources {
        let sets = predict_targets(&endpoint, &reps, s)?;
        let mut p = fuse(s, &sets, &reps);
        if let Some(only) = args.strategy {
            p.rankings.retain(|k, _| *k == only);
        }
        predictions.push(p);
    }
    Ok(PredictOutput {
        reduction,
        predictions,
    })
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub config: Config,
    pub gt: PathBuf,
    pub source: Source,
    /// Learn on the training split when absent.
    pub patterns: Option<PathBuf>,
    pub ratio: f64,
    pub split_seed: u64,
    pub baselines: bool,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOutput {
    pub split: Split,
    pub report: EvaluationReport,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluateOutput> {
    let mut cfg = args.config.clone();
    args.source.apply(&mut cfg);
    let gt = read_ground_truth(&args.gt)?;
    let sp = split(gt.len(), args.ratio, args.split_seed);
    if sp.test.is_empty() {
        bail!("test split is empty; raise the split ratio");
    }
    let (endpoint, store) = connect(&cfg)?;
    let patterns = match &args.patterns {
        Some(p) => load_patterns(p)?,
        None => {
            if sp.train.is_empty() {
                bail!("training split is empty");
            }
            learn(&endpoint, &gt.subset(&sp.train), &cfg.evolution)?
                .state
                .accepted
        }
    };
    let store = if args.baselines {
        if store.is_none() {
            eprintln!("baselines need a local store; skipping them");
        }
        store
    } else {
        None
    };
    let report = evaluate_patterns(
        &endpoint,
        store.as_deref(),
        &patterns,
        &gt.subset(&sp.test),
        args.k,
    )?;
    Ok(EvaluateOutput { split: sp, report })
}
