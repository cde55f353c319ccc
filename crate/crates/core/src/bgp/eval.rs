use std::collections::{BTreeSet, HashMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    BgpError, Binding, GraphPattern, PatternTerm, SelectQuery, TriplePattern, ValuesTable, Variable,
};
use crate::rdf::{Term, TermId, TripleStore};

/// How evaluation time is measured. `Steps` charges a fixed cost per
/// join step, which makes timings (and therefore timeouts and fitness)
/// reproducible bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Clock {
    Wall,
    Steps { seconds_per_step: f64 },
}

impl Default for Clock {
    fn default() -> Self {
        Clock::Steps {
            seconds_per_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Seconds after which evaluation stops and returns partial rows.
    pub soft_timeout: Option<f64>,
    /// Seconds after which evaluation aborts without rows.
    pub hard_timeout: Option<f64>,
    pub clock: Clock,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            soft_timeout: Some(2.0),
            hard_timeout: Some(10.0),
            clock: Clock::default(),
        }
    }
}

impl EvalOptions {
    pub fn unlimited() -> EvalOptions {
        EvalOptions {
            soft_timeout: None,
            hard_timeout: None,
            clock: Clock::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Complete,
    SoftTimeout,
    HardTimeout,
}

impl EvalStatus {
    /// The more severe of two statuses.
    pub fn worst(self, other: EvalStatus) -> EvalStatus {
        self.max(other)
    }

    pub fn penalty(self) -> f64 {
        match self {
            EvalStatus::Complete => 0.0,
            EvalStatus::SoftTimeout => 0.5,
            EvalStatus::HardTimeout => 1.0,
        }
    }
}

/// Distinct projected solution rows, aligned with `vars`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub vars: Vec<Variable>,
    pub rows: Vec<Vec<Term>>,
    pub elapsed: f64,
    pub status: EvalStatus,
}

impl EvalResult {
    pub fn empty(vars: Vec<Variable>, status: EvalStatus) -> EvalResult {
        EvalResult {
            vars,
            rows: Vec::new(),
            elapsed: 0.0,
            status,
        }
    }

    pub fn bindings(&self) -> impl Iterator<Item = Binding> + '_ {
        self.rows
            .iter()
            .map(|r| self.vars.iter().cloned().zip(r.iter().cloned()).collect())
    }

    pub fn column(&self, var: &Variable) -> Option<usize> {
        self.vars.iter().position(|v| v == var)
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Const(TermId),
    Var(usize),
    /// A fixed term absent from the store; matches nothing.
    Missing,
}

struct Compiled {
    triples: Vec<[Slot; 3]>,
    var_count: usize,
}

/// Greedy selectivity-ordered join plan. `prebound` are variables bound
/// before the first pattern is evaluated (e.g. by VALUES).
pub fn join_plan(
    store: &TripleStore,
    gp: &GraphPattern,
    prebound: &BTreeSet<Variable>,
) -> Vec<TriplePattern> {
    let mut remaining: Vec<&TriplePattern> = gp.triples().collect();
    let mut bound = prebound.clone();
    let mut plan = Vec::with_capacity(remaining.len());
    let distinct = store.distinct_counts();
    let estimate = |t: &TriplePattern, bound: &BTreeSet<Variable>| -> f64 {
        let mut ids = [None; 3];
        for (i, pt) in t.terms().into_iter().enumerate() {
            if let PatternTerm::Term(term) = pt {
                match store.id_of(term) {
                    Some(id) => ids[i] = Some(id),
                    None => return 0.0,
                }
            }
        }
        let mut est = store.count_ids(ids[0], ids[1], ids[2]) as f64;
        let mut seen = Vec::new();
        for (i, pt) in t.terms().into_iter().enumerate() {
            if let PatternTerm::Var(v) = pt {
                if bound.contains(v) && !seen.contains(&v) {
                    est /= distinct[i].max(1) as f64;
                    seen.push(v);
                }
            }
        }
        est
    };
    while !remaining.is_empty() {
        let connected: Vec<usize> = (0..remaining.len())
            .filter(|&i| remaining[i].variables().any(|v| bound.contains(v)))
            .collect();
        let pool: Vec<usize> = if plan.is_empty() || connected.is_empty() {
            (0..remaining.len()).collect()
        } else {
            connected
        };
        let mut best = pool[0];
        let mut best_est = estimate(remaining[best], &bound);
        for &i in &pool[1..] {
            let e = estimate(remaining[i], &bound);
            if e < best_est {
                best = i;
                best_est = e;
            }
        }
        let chosen = remaining.remove(best);
        bound.extend(chosen.variables().cloned());
        plan.push(chosen.clone());
    }
    plan
}

struct Evaluator<'a> {
    store: &'a TripleStore,
    compiled: Compiled,
    projection: Vec<usize>,
    assignment: Vec<Option<TermId>>,
    seen: HashSet<Vec<TermId>>,
    rows: Vec<Vec<TermId>>,
    limit: Option<usize>,
    steps: u64,
    started: Instant,
    opts: EvalOptions,
    status: EvalStatus,
}

enum Flow {
    Continue,
    Stop,
}

impl<'a> Evaluator<'a> {
    fn elapsed(&self) -> f64 {
        match self.opts.clock {
            Clock::Wall => self.started.elapsed().as_secs_f64(),
            Clock::Steps { seconds_per_step } => self.steps as f64 * seconds_per_step,
        }
    }

    fn tick(&mut self) -> Flow {
        self.steps += 1;
        let check = match self.opts.clock {
            Clock::Wall => self.steps.is_multiple_of(256),
            Clock::Steps { .. } => true,
        };
        if check {
            let t = self.elapsed();
            if self.opts.hard_timeout.is_some_and(|h| t >= h) {
                self.status = EvalStatus::HardTimeout;
                return Flow::Stop;
            }
            if self.opts.soft_timeout.is_some_and(|s| t >= s) {
                self.status = EvalStatus::SoftTimeout;
                return Flow::Stop;
            }
        }
        Flow::Continue
    }

    fn emit(&mut self) -> Flow {
        let row: Vec<TermId> = self
            .projection
            .iter()
            .map(|&slot| self.assignment[slot].expect("projected variables are bound"))
            .collect();
        if self.seen.insert(row.clone()) {
            self.rows.push(row);
            if self.limit.is_some_and(|l| self.rows.len() >= l) {
                return Flow::Stop;
            }
        }
        Flow::Continue
    }

    fn search(&mut self, depth: usize) -> Flow {
        if let Flow::Stop = self.tick() {
            return Flow::Stop;
        }
        if depth == self.compiled.triples.len() {
            return self.emit();
        }
        let slots = self.compiled.triples[depth];
        let n_terms = self.store.term_count() as TermId;
        let mut key = [None; 3];
        for (i, slot) in slots.iter().enumerate() {
            key[i] = match *slot {
                Slot::Const(id) => Some(id),
                Slot::Var(v) => self.assignment[v],
                Slot::Missing => return Flow::Continue,
            };
            if key[i].is_some_and(|id| id >= n_terms) {
                // bound to a term from VALUES that the store does not contain
                return Flow::Continue;
            }
        }
        let store = self.store;
        for found in store.match_ids(key[0], key[1], key[2]) {
            let mut newly = [usize::MAX; 3];
            let mut ok = true;
            for i in 0..3 {
                if let Slot::Var(v) = slots[i] {
                    match self.assignment[v] {
                        Some(id) if id != found[i] => {
                            ok = false;
                            break;
                        }
                        Some(_) => {}
                        None => {
                            self.assignment[v] = Some(found[i]);
                            newly[i] = v;
                        }
                    }
                }
            }
            let flow = if ok {
                self.search(depth + 1)
            } else {
                self.tick()
            };
            for v in newly {
                if v != usize::MAX {
                    self.assignment[v] = None;
                }
            }
            if let Flow::Stop = flow {
                return Flow::Stop;
            }
        }
        Flow::Continue
    }
}

/// Evaluates `SELECT DISTINCT projection { VALUES ... gp } LIMIT limit`.
/// Rows are produced in a deterministic order: VALUES rows in table order,
/// then solutions in join-plan / index order.
pub fn select(
    store: &TripleStore,
    query: &SelectQuery,
    opts: &EvalOptions,
) -> Result<EvalResult, BgpError> {
    let started = Instant::now();
    let gp = &query.pattern;
    if gp.is_empty() && query.values.is_none() {
        return Err(BgpError::Degenerate);
    }
    let empty_values;
    let values: &ValuesTable = match &query.values {
        Some(v) => {
            v.validate()?;
            v
        }
        None => {
            empty_values = ValuesTable {
                vars: Vec::new(),
                rows: vec![Vec::new()],
            };
            &empty_values
        }
    };
    let pattern_vars = gp.variables();
    for v in &query.projection {
        if !pattern_vars.contains(v) && !values.vars.contains(v) {
            return Err(BgpError::UnboundProjection(v.name().to_string()));
        }
    }

    let mut var_index: HashMap<Variable, usize> = HashMap::new();
    for v in pattern_vars.iter().chain(values.vars.iter()) {
        let n = var_index.len();
        var_index.entry(v.clone()).or_insert(n);
    }
    let prebound: BTreeSet<Variable> = values.vars.iter().cloned().collect();
    let plan = join_plan(store, gp, &prebound);
    let triples = plan
        .iter()
        .map(|t| {
            let mut slots = [Slot::Missing; 3];
            for (i, pt) in t.terms().into_iter().enumerate() {
                slots[i] = match pt {
                    PatternTerm::Var(v) => Slot::Var(var_index[v]),
                    PatternTerm::Term(term) => match store.id_of(term) {
                        Some(id) => Slot::Const(id),
                        None => Slot::Missing,
                    },
                };
            }
            slots
        })
        .collect();

    // terms from VALUES that the store does not know get ids past the dictionary
    let mut external: Vec<Term> = Vec::new();
    let mut external_ids: HashMap<Term, TermId> = HashMap::new();
    let base = store.term_count() as TermId;
    let mut encode = |t: &Term| -> TermId {
        if let Some(id) = store.id_of(t) {
            return id;
        }
        *external_ids.entry(t.clone()).or_insert_with(|| {
            external.push(t.clone());
            base + external.len() as TermId - 1
        })
    };
    let value_rows: Vec<Vec<(usize, TermId)>> = values
        .rows
        .iter()
        .map(|r| {
            values
                .vars
                .iter()
                .zip(r)
                .map(|(v, t)| (var_index[v], encode(t)))
                .collect()
        })
        .collect();

    let var_count = var_index.len();
    let mut ev = Evaluator {
        store,
        compiled: Compiled { triples, var_count },
        projection: query.projection.iter().map(|v| var_index[v]).collect(),
        assignment: vec![None; var_count],
        seen: HashSet::new(),
        rows: Vec::new(),
        limit: query.limit,
        steps: 0,
        started,
        opts: *opts,
        status: EvalStatus::Complete,
    };

    if opts.hard_timeout.is_some_and(|h| h <= 0.0) {
        return Ok(EvalResult {
            vars: query.projection.clone(),
            rows: Vec::new(),
            elapsed: 0.0,
            status: EvalStatus::HardTimeout,
        });
    }
    if query.limit != Some(0) {
        for row in &value_rows {
            ev.assignment = vec![None; ev.compiled.var_count];
            for &(slot, id) in row {
                ev.assignment[slot] = Some(id);
            }
            if let Flow::Stop = ev.search(0) {
                break;
            }
        }
    }
    let elapsed = ev.elapsed();
    let status = ev.status;
    let decode = |id: TermId| -> Term {
        if id < base {
            store.term(id).clone()
        } else {
            external[(id - base) as usize].clone()
        }
    };
    let rows = if status == EvalStatus::HardTimeout {
        Vec::new()
    } else {
        ev.rows
            .iter()
            .map(|r| r.iter().map(|&id| decode(id)).collect())
            .collect()
    };
    Ok(EvalResult {
        vars: query.projection.clone(),
        rows,
        elapsed,
        status,
    })
}

/// True iff at least one solution exists for the pattern under `binding`.
/// The binding is applied as a one-row VALUES table.
pub fn ask(
    store: &TripleStore,
    gp: &GraphPattern,
    binding: &Binding,
    opts: &EvalOptions,
) -> Result<(bool, EvalStatus), BgpError> {
    let mut values = ValuesTable::new(binding.keys().cloned().collect());
    values.push(binding.values().cloned().collect());
    let query = SelectQuery::new(gp.clone(), Vec::new())
        .with_values(values)
        .with_limit(Some(1));
    let r = select(store, &query, opts)?;
    Ok((!r.rows.is_empty(), r.status))
}
