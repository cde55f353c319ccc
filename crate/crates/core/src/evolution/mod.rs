//! Evolutionary search for graph patterns over several runs, each run
//! refocusing on ground truth pairs that earlier runs covered poorly.

mod operators;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bgp::{select_query_text, GraphPattern, SelectQuery, Variable};
use crate::canon::canonical_key;
use crate::endpoint::{Endpoint, EndpointError};
use crate::fitness::{
    evaluate, CoverageLedger, FitnessConfig, FitnessTuple, GroundTruth, PatternEvaluation,
};
use crate::simplify::{simplify_verified, VerifyScope};

pub use operators::{
    add_edge, del_triple, expand_node, fit_to_live, fix_var, fragment_pattern, increase_dist,
    initial_patterns, introduce_var, mate, merge_var, mutate, path_pattern, split_var,
};

pub type Rng = ChaCha8Rng;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error("invalid evolution configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Output(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MutationProbs {
    pub introduce_var: f64,
    pub split_var: f64,
    pub merge_var: f64,
    pub del_triple: f64,
    pub expand_node: f64,
    pub add_edge: f64,
    pub increase_dist: f64,
    pub simplify: f64,
    pub fix_var: f64,
}

impl Default for MutationProbs {
    fn default() -> Self {
        MutationProbs {
            introduce_var: 0.05,
            split_var: 0.05,
            merge_var: 0.05,
            del_triple: 0.05,
            expand_node: 0.1,
            add_edge: 0.05,
            increase_dist: 0.05,
            simplify: 0.05,
            fix_var: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub max_runs: usize,
    pub mating_prob: f64,
    /// Keep probability of a dominant parent's own triples.
    pub p_dominant: f64,
    /// Keep probability of a recessive parent's own triples.
    pub p_recessive: f64,
    pub mutation: MutationProbs,
    pub tournament_size: usize,
    pub path_length_max: usize,
    pub fragment_fraction: f64,
    pub init_fix_var_prob: f64,
    pub fix_var_sample: usize,
    pub fix_var_children: usize,
    pub fix_var_limit_per_pair: usize,
    pub max_length: usize,
    pub max_vars: usize,
    pub hof_size: usize,
    pub reintro_fresh: usize,
    pub reintro_hof: usize,
    pub accept_score: f64,
    pub min_remains: f64,
    /// Verify-simplify patterns before accepting them.
    pub simplify_accepted: bool,
    /// Evaluate individuals of a generation on several threads.
    pub parallel: bool,
    /// Best distinct individuals recorded per generation in the run log.
    pub snapshot_size: usize,
    pub seed: u64,
    pub fitness: FitnessConfig,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 200,
            max_generations: 20,
            max_runs: 64,
            mating_prob: 0.5,
            p_dominant: 0.9,
            p_recessive: 0.1,
            mutation: MutationProbs::default(),
            tournament_size: 3,
            path_length_max: 3,
            fragment_fraction: 0.1,
            init_fix_var_prob: 0.9,
            fix_var_sample: 32,
            fix_var_children: 8,
            fix_var_limit_per_pair: 1024,
            max_length: 10,
            max_vars: 6,
            hof_size: 100,
            reintro_fresh: 4,
            reintro_hof: 4,
            accept_score: 2.0,
            min_remains: 0.5,
            simplify_accepted: true,
            parallel: true,
            snapshot_size: 10,
            seed: 1,
            fitness: FitnessConfig::default(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let m = &self.mutation;
        let probs = [
            ("mating_prob", self.mating_prob),
            ("p_dominant", self.p_dominant),
            ("p_recessive", self.p_recessive),
            ("fragment_fraction", self.fragment_fraction),
            ("init_fix_var_prob", self.init_fix_var_prob),
            ("mutation.introduce_var", m.introduce_var),
            ("mutation.split_var", m.split_var),
            ("mutation.merge_var", m.merge_var),
            ("mutation.del_triple", m.del_triple),
            ("mutation.expand_node", m.expand_node),
            ("mutation.add_edge", m.add_edge),
            ("mutation.increase_dist", m.increase_dist),
            ("mutation.simplify", m.simplify),
            ("mutation.fix_var", m.fix_var),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(EvolutionError::Config(format!(
                    "{name} must be in [0, 1], got {p}"
                )));
            }
        }
        let sizes = [
            ("population_size", self.population_size),
            ("max_generations", self.max_generations),
            ("max_runs", self.max_runs),
            ("tournament_size", self.tournament_size),
            ("path_length_max", self.path_length_max),
            ("fix_var_sample", self.fix_var_sample),
            ("fix_var_children", self.fix_var_children),
            ("fix_var_limit_per_pair", self.fix_var_limit_per_pair),
            ("max_length", self.max_length),
            ("max_vars", self.max_vars),
            ("hof_size", self.hof_size),
        ];
        for (name, n) in sizes {
            if n == 0 {
                return Err(EvolutionError::Config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Read-only state shared by the operators of one run.
pub struct Context<'a> {
    pub endpoint: &'a Endpoint,
    pub gt: &'a GroundTruth,
    pub ledger: &'a CoverageLedger,
    pub cfg: &'a EvolutionConfig,
}

#[derive(Debug, Clone)]
pub struct Individual {
    pub pattern: GraphPattern,
    pub key: String,
    pub fitness: Option<FitnessTuple>,
    pub evaluation: Option<Arc<PatternEvaluation>>,
}

impl Individual {
    pub fn new(pattern: GraphPattern) -> Individual {
        let key = canonical_key(&pattern);
        Individual {
            pattern,
            key,
            fitness: None,
            evaluation: None,
        }
    }

    fn fit(&self) -> FitnessTuple {
        self.fitness.unwrap_or_else(FitnessTuple::worst)
    }
}

/// Best individuals seen so far, one per canonical form, best first.
#[derive(Debug, Clone)]
pub struct HallOfFame {
    size: usize,
    entries: Vec<Individual>,
    keys: HashSet<String>,
}

impl HallOfFame {
    pub fn new(size: usize) -> HallOfFame {
        HallOfFame {
            size,
            entries: Vec::new(),
            keys: HashSet::new(),
        }
    }

    pub fn update<'a>(&mut self, individuals: impl IntoIterator<Item = &'a Individual>) {
        for ind in individuals {
            if ind.fitness.is_some() && !self.keys.contains(&ind.key) {
                self.keys.insert(ind.key.clone());
                self.entries.push(ind.clone());
            }
        }
        self.entries
            .sort_by(|a, b| b.fit().cmp(&a.fit()).then_with(|| a.key.cmp(&b.key)));
        for dropped in self.entries.drain(self.size.min(self.entries.len())..) {
            self.keys.remove(&dropped.key);
        }
    }

    pub fn entries(&self) -> &[Individual] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Winner of a tournament of `k` individuals drawn without replacement;
/// ties go to the earliest drawn.
pub fn tournament<'a>(pool: &'a [Individual], k: usize, rng: &mut Rng) -> &'a Individual {
    let picks = index::sample(rng, pool.len(), k.clamp(1, pool.len()));
    let mut best = &pool[picks.index(0)];
    for i in picks.iter().skip(1) {
        if pool[i].fit() > best.fit() {
            best = &pool[i];
        }
    }
    best
}

/// Selection step: tournament winners from the evaluated offspring, plus
/// fresh patterns and the best hall of fame entries, `population_size` in
/// total.
pub fn next_generation(
    offspring: &[Individual],
    fresh: Vec<Individual>,
    hof: &HallOfFame,
    cfg: &EvolutionConfig,
    rng: &mut Rng,
) -> Vec<Individual> {
    let n = cfg.population_size;
    let hof_take: Vec<Individual> = hof
        .entries()
        .iter()
        .take(cfg.reintro_hof)
        .cloned()
        .collect();
    let reintro = fresh.len() + hof_take.len();
    let winners = n.saturating_sub(reintro);
    let mut next: Vec<Individual> = (0..winners)
        .map(|_| tournament(offspring, cfg.tournament_size, rng).clone())
        .collect();
    next.extend(fresh);
    next.extend(hof_take);
    next.truncate(n);
    next
}

/// One recorded pattern with its fitness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRecord {
    pub pattern: GraphPattern,
    pub sparql: String,
    pub key: String,
    pub fitness: FitnessTuple,
    pub pv: Vec<f64>,
}

impl PatternRecord {
    fn from_individual(ind: &Individual) -> PatternRecord {
        PatternRecord {
            pattern: ind.pattern.clone(),
            sparql: pattern_sparql(&ind.pattern),
            key: ind.key.clone(),
            fitness: ind.fit(),
            pv: ind
                .evaluation
                .as_ref()
                .map(|e| e.pv.clone())
                .unwrap_or_default(),
        }
    }
}

pub fn pattern_sparql(gp: &GraphPattern) -> String {
    select_query_text(&SelectQuery::new(
        gp.clone(),
        vec![Variable::source(), Variable::target()],
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSnapshot {
    pub generation: usize,
    pub hof_best: Option<FitnessTuple>,
    pub best: Vec<PatternRecord>,
}

/// A pattern accepted into the result set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedPattern {
    pub run: usize,
    pub pattern: GraphPattern,
    pub sparql: String,
    pub key: String,
    pub fitness: FitnessTuple,
    pub evaluation: PatternEvaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub run: usize,
    pub remains_before: f64,
    pub remains_after: f64,
    pub ledger_after: CoverageLedger,
    pub generations: Vec<GenerationSnapshot>,
    pub hall_of_fame: Vec<PatternRecord>,
    pub accepted: Vec<AcceptedPattern>,
}

/// Everything needed to continue learning after an interruption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnState {
    pub next_run: usize,
    pub ledger: CoverageLedger,
    pub accepted: Vec<AcceptedPattern>,
    pub finished: bool,
}

impl LearnState {
    pub fn new(gt_len: usize) -> LearnState {
        LearnState {
            next_run: 1,
            ledger: CoverageLedger::new(gt_len),
            accepted: Vec::new(),
            finished: false,
        }
    }
}

type Memo = HashMap<String, (Arc<PatternEvaluation>, FitnessTuple)>;

struct Run<'a> {
    ctx: Context<'a>,
    rng: Rng,
    memo: Memo,
}

impl Run<'_> {
    fn evaluate_all(&mut self, individuals: &mut [Individual]) -> Result<(), EndpointError> {
        let mut todo: Vec<&Individual> = Vec::new();
        let mut queued = HashSet::new();
        for ind in individuals.iter() {
            if ind.fitness.is_none() && !self.memo.contains_key(&ind.key) && queued.insert(&ind.key)
            {
                todo.push(ind);
            }
        }
        let ctx = &self.ctx;
        let eval = |ind: &&Individual| {
            evaluate(
                ctx.endpoint,
                &ind.pattern,
                ctx.gt,
                ctx.ledger,
                &ctx.cfg.fitness,
            )
            .map(|(e, f)| (ind.key.clone(), (Arc::new(e), f)))
        };
        let results: Vec<Result<_, EndpointError>> = if ctx.cfg.parallel {
            todo.par_iter().map(eval).collect()
        } else {
            todo.iter().map(eval).collect()
        };
        for r in results {
            let (key, value) = r?;
            self.memo.insert(key, value);
        }
        for ind in individuals.iter_mut() {
            if ind.fitness.is_none() {
                let (e, f) = &self.memo[&ind.key];
                ind.evaluation = Some(e.clone());
                ind.fitness = Some(*f);
            }
        }
        Ok(())
    }

    fn fresh(&mut self, count: usize) -> Result<Vec<Individual>, EndpointError> {
        let patterns = initial_patterns(&self.ctx, count, &mut self.rng)?;
        let mut inds: Vec<Individual> = patterns.into_iter().map(Individual::new).collect();
        self.evaluate_all(&mut inds)?;
        Ok(inds)
    }

    /// Mating and mutation. An offspring failing fit-to-live is replaced by
    /// its parent.
    fn variation(&mut self, population: &[Individual]) -> Result<Vec<Individual>, EndpointError> {
        let cfg = self.ctx.cfg;
        let mut patterns: Vec<GraphPattern> =
            population.iter().map(|i| i.pattern.clone()).collect();
        for i in (1..patterns.len()).step_by(2) {
            if self.rng.gen_bool(cfg.mating_prob) {
                let (a, b) = mate(&patterns[i - 1], &patterns[i], &mut self.rng, cfg);
                patterns[i - 1] = a;
                patterns[i] = b;
            }
        }
        let mut out = Vec::with_capacity(population.len());
        for (parent, gp) in population.iter().zip(patterns) {
            let children: Vec<GraphPattern> = mutate(&gp, &self.ctx, &mut self.rng)?
                .into_iter()
                .filter(|c| fit_to_live(c, cfg))
                .collect();
            if children.is_empty() {
                out.push(parent.clone());
            } else {
                out.extend(children.into_iter().map(Individual::new));
            }
        }
        self.evaluate_all(&mut out)?;
        Ok(out)
    }

    fn snapshot(
        &self,
        generation: usize,
        population: &[Individual],
        hof: &HallOfFame,
    ) -> GenerationSnapshot {
        let mut seen = HashSet::new();
        let mut distinct: Vec<&Individual> =
            population.iter().filter(|i| seen.insert(&i.key)).collect();
        distinct.sort_by(|a, b| b.fit().cmp(&a.fit()).then_with(|| a.key.cmp(&b.key)));
        GenerationSnapshot {
            generation,
            hof_best: hof.entries().first().map(|i| i.fit()),
            best: distinct
                .into_iter()
                .take(self.ctx.cfg.snapshot_size)
                .map(PatternRecord::from_individual)
                .collect(),
        }
    }
}

fn run_rng(seed: u64, run: usize) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

/// One run: evolve a population for `max_generations`, then accept the
/// hall of fame patterns scoring above the threshold.
pub fn run_once(
    endpoint: &Endpoint,
    gt: &GroundTruth,
    cfg: &EvolutionConfig,
    run: usize,
    ledger: &CoverageLedger,
    known: &HashSet<String>,
) -> Result<RunLog, EvolutionError> {
    let mut r = Run {
        ctx: Context {
            endpoint,
            gt,
            ledger,
            cfg,
        },
        rng: run_rng(cfg.seed, run),
        memo: HashMap::new(),
    };
    let mut hof = HallOfFame::new(cfg.hof_size);
    let mut population = r.fresh(cfg.population_size)?;
    hof.update(&population);
    let mut generations = vec![r.snapshot(0, &population, &hof)];
    for generation in 1..=cfg.max_generations {
        let offspring = r.variation(&population)?;
        hof.update(&offspring);
        let fresh = r.fresh(cfg.reintro_fresh)?;
        hof.update(&fresh);
        population = next_generation(&offspring, fresh, &hof, cfg, &mut r.rng);
        generations.push(r.snapshot(generation, &population, &hof));
    }

    let mut accepted = Vec::new();
    let mut keys: HashSet<String> = known.clone();
    let scope = VerifyScope::Sources(gt.sources());
    for ind in hof.entries() {
        if ind.fit().score <= cfg.accept_score {
            continue;
        }
        let mut chosen = ind.clone();
        if cfg.simplify_accepted {
            let simplified = simplify_verified(&ind.pattern, endpoint, &scope)?;
            if simplified != ind.pattern {
                let mut s = vec![Individual::new(simplified)];
                r.evaluate_all(&mut s)?;
                let s = s.pop().expect("one individual");
                if s.fit().score > cfg.accept_score {
                    chosen = s;
                }
            }
        }
        if keys.insert(chosen.key.clone()) {
            accepted.push(AcceptedPattern {
                run,
                sparql: pattern_sparql(&chosen.pattern),
                pattern: chosen.pattern.clone(),
                key: chosen.key.clone(),
                fitness: chosen.fit(),
                evaluation: chosen.evaluation.as_deref().cloned().expect("evaluated"),
            });
        }
    }
    let mut ledger_after = ledger.clone();
    ledger_after.update(accepted.iter().map(|a| a.evaluation.pv.as_slice()));
    Ok(RunLog {
        run,
        remains_before: ledger.remains(),
        remains_after: ledger_after.remains(),
        ledger_after,
        generations,
        hall_of_fame: hof
            .entries()
            .iter()
            .map(PatternRecord::from_individual)
            .collect(),
        accepted,
    })
}

/// Continues learning from `state` until `max_runs` or until the remaining
/// gain drops below `min_remains`. `on_run` sees the state after every
/// completed run, so partial results survive an aborted session.
pub fn learn_from(
    endpoint: &Endpoint,
    gt: &GroundTruth,
    cfg: &EvolutionConfig,
    state: &mut LearnState,
    mut on_run: impl FnMut(&LearnState, &RunLog) -> Result<(), EvolutionError>,
) -> Result<(), EvolutionError> {
    cfg.validate()?;
    if state.ledger.len() != gt.len() {
        return Err(EvolutionError::Config(format!(
            "ledger has {} entries but the ground truth has {} pairs",
            state.ledger.len(),
            gt.len()
        )));
    }
    while !state.finished && state.next_run <= cfg.max_runs {
        let known: HashSet<String> = state.accepted.iter().map(|a| a.key.clone()).collect();
        let log = run_once(endpoint, gt, cfg, state.next_run, &state.ledger, &known)?;
        state.ledger = log.ledger_after.clone();
        state.accepted.extend(log.accepted.iter().cloned());
        state.next_run += 1;
        state.finished = state.ledger.remains() < cfg.min_remains || state.next_run > cfg.max_runs;
        on_run(state, &log)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub state: LearnState,
    pub runs: Vec<RunLog>,
}

pub fn learn(
    endpoint: &Endpoint,
    gt: &GroundTruth,
    cfg: &EvolutionConfig,
) -> Result<LearnOutcome, EvolutionError> {
    let mut state = LearnState::new(gt.len());
    let mut runs = Vec::new();
    learn_from(endpoint, gt, cfg, &mut state, |_, log| {
        runs.push(log.clone());
        Ok(())
    })?;
    Ok(LearnOutcome { state, runs })
}
