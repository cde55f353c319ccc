use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;

use super::{Context, EvolutionConfig, Rng as EvoRng};
use crate::bgp::{
    Binding, EvalStatus, GraphPattern, PatternTerm, SelectQuery, TriplePattern, ValuesTable,
    Variable,
};
use crate::endpoint::EndpointError;
use crate::simplify::simplify;

fn var(v: &Variable) -> PatternTerm {
    PatternTerm::Var(v.clone())
}

fn triple(s: PatternTerm, p: PatternTerm, o: PatternTerm) -> Option<TriplePattern> {
    TriplePattern::new(s, p, o).ok()
}

fn reserved() -> [Variable; 2] {
    [Variable::source(), Variable::target()]
}

fn non_reserved(gp: &GraphPattern) -> Vec<Variable> {
    gp.variables()
        .into_iter()
        .filter(|v| !v.is_reserved())
        .collect()
}

/// Structural admission test for offspring.
pub fn fit_to_live(gp: &GraphPattern, cfg: &EvolutionConfig) -> bool {
    !gp.is_empty()
        && gp.len() <= cfg.max_length
        && gp.var_count() <= cfg.max_vars
        && gp.is_complete()
        && gp.is_connected()
}

/// All-variable path of `len` edges from `?source` to `?target`, each edge
/// reversed with probability 1/2.
pub fn path_pattern(len: usize, rng: &mut EvoRng) -> GraphPattern {
    let mut nodes = vec![Variable::source()];
    nodes.extend((1..len).map(|i| Variable::new(format!("n{i}"))));
    nodes.push(Variable::target());
    let mut gp = GraphPattern::default();
    for i in 0..len {
        let p = var(&Variable::new(format!("p{}", i + 1)));
        let (a, b) = (var(&nodes[i]), var(&nodes[i + 1]));
        let t = if rng.gen_bool(0.5) {
            triple(b, p, a)
        } else {
            triple(a, p, b)
        };
        gp.insert(t.expect("variables only"));
    }
    gp
}

/// Single all-variable triple touching `?source` or `?target`.
pub fn fragment_pattern(rng: &mut EvoRng) -> GraphPattern {
    let r = reserved().choose(rng).cloned().expect("nonempty");
    let (p, v) = (var(&Variable::new("p1")), var(&Variable::new("v1")));
    let t = if rng.gen_bool(0.5) {
        triple(var(&r), p, v)
    } else {
        triple(v, p, var(&r))
    };
    GraphPattern::new(t)
}

fn path_length(cfg: &EvolutionConfig, rng: &mut EvoRng) -> usize {
    let weights: Vec<f64> = (1..=cfg.path_length_max)
        .map(|l| 0.5f64.powi(l as i32))
        .collect();
    let dist = rand::distributions::WeightedIndex::new(&weights).expect("positive weights");
    rng.sample(dist) + 1
}

/// `count` new patterns: a fragment share of single triples, the rest
/// paths, most of which are grounded right away by fix-var. A path with
/// fix-var children is replaced by them.
pub fn initial_patterns(
    ctx: &Context,
    count: usize,
    rng: &mut EvoRng,
) -> Result<Vec<GraphPattern>, EndpointError> {
    let cfg = ctx.cfg;
    let fragments = (count as f64 * cfg.fragment_fraction).round() as usize;
    let mut out: Vec<GraphPattern> = (0..fragments.min(count))
        .map(|_| fragment_pattern(rng))
        .collect();
    while out.len() < count {
        let path = path_pattern(path_length(cfg, rng), rng);
        if rng.gen_bool(cfg.init_fix_var_prob) {
            let children = fix_var(&path, ctx, rng)?;
            if !children.is_empty() {
                out.extend(children);
                continue;
            }
        }
        out.push(path);
    }
    out.truncate(count);
    Ok(out)
}

fn child(
    dominant: &GraphPattern,
    recessive: &GraphPattern,
    rng: &mut EvoRng,
    cfg: &EvolutionConfig,
) -> GraphPattern {
    let mut out: GraphPattern = dominant
        .triples()
        .filter(|t| recessive.contains(t))
        .cloned()
        .collect();
    for t in dominant.triples().filter(|t| !recessive.contains(t)) {
        if rng.gen_bool(cfg.p_dominant) {
            out.insert(t.clone());
        }
    }
    let rest: GraphPattern = recessive
        .triples()
        .filter(|t| !dominant.contains(t))
        .cloned()
        .collect();
    let rest = if rng.gen_bool(0.5) {
        let mut avoid: BTreeSet<Variable> = dominant.variables();
        avoid.extend(recessive.variables());
        let mut mapping = BTreeMap::new();
        for v in non_reserved(&rest) {
            let fresh = rest.fresh_var_avoiding("v", &avoid);
            avoid.insert(fresh.clone());
            mapping.insert(v, fresh);
        }
        rest.map_terms(|pt| match pt.as_var().and_then(|v| mapping.get(v)) {
            Some(f) => var(f),
            None => pt.clone(),
        })
    } else {
        rest
    };
    for t in rest.triples() {
        if rng.gen_bool(cfg.p_recessive) {
            out.insert(t.clone());
        }
    }
    out
}

/// Two children, each parent dominant once.
pub fn mate(
    a: &GraphPattern,
    b: &GraphPattern,
    rng: &mut EvoRng,
    cfg: &EvolutionConfig,
) -> (GraphPattern, GraphPattern) {
    let c1 = child(a, b, rng, cfg);
    let c2 = child(b, a, rng, cfg);
    (c1, c2)
}

pub fn introduce_var(gp: &GraphPattern, rng: &mut EvoRng) -> GraphPattern {
    let fixed: Vec<&PatternTerm> = gp
        .triples()
        .flat_map(|t| t.terms())
        .filter(|t| !t.is_var())
        .collect();
    let Some(&target) = fixed.choose(rng) else {
        return gp.clone();
    };
    let target = target.clone();
    let fresh = var(&gp.fresh_var("v"));
    gp.map_terms(|pt| {
        if *pt == target {
            fresh.clone()
        } else {
            pt.clone()
        }
    })
}

pub fn split_var(gp: &GraphPattern, rng: &mut EvoRng) -> GraphPattern {
    let candidates: Vec<Variable> = non_reserved(gp)
        .into_iter()
        .filter(|v| gp.occurrences(v) >= 2)
        .collect();
    let Some(v) = candidates.choose(rng).cloned() else {
        return gp.clone();
    };
    let a = gp.fresh_var("v");
    let b = gp.fresh_var_avoiding("v", &BTreeSet::from([a.clone()]));
    let n = gp.occurrences(&v);
    let sides: Vec<bool> = loop {
        let sides: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        if sides.iter().any(|&s| s) && sides.iter().any(|&s| !s) {
            break sides;
        }
    };
    let mut i = 0;
    gp.map_terms(|pt| match pt.as_var() {
        Some(x) if *x == v => {
            let side = sides[i];
            i += 1;
            var(if side { &a } else { &b })
        }
        _ => pt.clone(),
    })
}

pub fn merge_var(gp: &GraphPattern, rng: &mut EvoRng) -> GraphPattern {
    let vars = non_reserved(gp);
    if vars.len() < 2 {
        return gp.clone();
    }
    let picked: Vec<&Variable> = vars.choose_multiple(rng, 2).collect();
    gp.rename(picked[1], picked[0])
}

pub fn del_triple(gp: &GraphPattern, rng: &mut EvoRng) -> GraphPattern {
    let mut out = gp.clone();
    if let Some(t) = gp.triples().choose(rng) {
        out.remove(t);
    }
    out
}

pub fn expand_node(gp: &GraphPattern, rng: &mut EvoRng) -> GraphPattern {
    let Some(node) = gp.nodes().into_iter().choose(rng) else {
        return gp.clone();
    };
    let p = gp.fresh_var("v");
    let o = gp.fresh_var_avoiding("v", &BTreeSet::from([p.clone()]));
    let outgoing = rng.gen_bool(0.5);
    let t = if outgoing {
        triple(node.clone(), var(&p), var(&o))
    } else {
        triple(var(&o), var(&p), node.clone())
    };
    let mut out = gp.clone();
    if let Some(t) = t.or_else(|| triple(var(&o), var(&p), node)) {
        out.insert(t);
    }
    out
}

pub fn add_edge(gp: &GraphPattern, rng: &mut EvoRng) -> GraphPattern {
    let nodes: Vec<PatternTerm> = gp.nodes().into_iter().collect();
    if nodes.len() < 2 {
        return gp.clone();
    }
    let picked: Vec<&PatternTerm> = nodes.choose_multiple(rng, 2).collect();
    let (a, b) = if rng.gen_bool(0.5) {
        (picked[0], picked[1])
    } else {
        (picked[1], picked[0])
    };
    if gp.triples().any(|t| t.subject == *a && t.object == *b) {
        return gp.clone();
    }
    let mut out = gp.clone();
    if let Some(t) = triple(a.clone(), var(&gp.fresh_var("v")), b.clone()) {
        out.insert(t);
    }
    out
}

pub fn increase_dist(gp: &GraphPattern, rng: &mut EvoRng) -> GraphPattern {
    let present: Vec<Variable> = reserved().into_iter().filter(|v| gp.mentions(v)).collect();
    let Some(r) = present.choose(rng) else {
        return gp.clone();
    };
    let n = gp.fresh_var("v");
    let p = gp.fresh_var_avoiding("v", &BTreeSet::from([n.clone()]));
    let mut out = gp.rename(r, &n);
    let t = if rng.gen_bool(0.5) {
        triple(var(r), var(&p), var(&n))
    } else {
        triple(var(&n), var(&p), var(r))
    };
    out.insert(t.expect("variables only"));
    out
}

/// Grounds one variable with terms observed when the pattern is bound to
/// sampled, poorly covered ground truth pairs. Returns up to
/// `fix_var_children` patterns; none when nothing was found or the query
/// timed out.
pub fn fix_var(
    gp: &GraphPattern,
    ctx: &Context,
    rng: &mut EvoRng,
) -> Result<Vec<GraphPattern>, EndpointError> {
    let cfg = ctx.cfg;
    let vars = non_reserved(gp);
    let Some(v) = vars.choose(rng).cloned() else {
        return Ok(Vec::new());
    };
    let n = ctx.gt.len();
    let weighted: Vec<usize> = (0..n).filter(|&i| ctx.ledger.best[i] < 1.0).collect();
    let mut idx: Vec<usize> = if weighted.is_empty() {
        (0..n).choose_multiple(rng, cfg.fix_var_sample.min(n))
    } else {
        weighted
            .choose_multiple_weighted(rng, cfg.fix_var_sample.min(weighted.len()), |&i| {
                1.0 - ctx.ledger.best[i]
            })
            .expect("valid weights")
            .copied()
            .collect()
    };
    idx.sort_unstable();
    let pairs = idx.iter().map(|&i| ctx.gt.pairs()[i].clone());
    let q = SelectQuery::new(
        gp.clone(),
        vec![Variable::source(), Variable::target(), v.clone()],
    )
    .with_values(ValuesTable::pairs(pairs))
    .with_limit(Some(cfg.fix_var_limit_per_pair * idx.len().max(1)));
    let r = ctx.endpoint.run_select(&q)?;
    if r.status != EvalStatus::Complete {
        return Ok(Vec::new());
    }
    let mut counts: BTreeMap<&crate::rdf::Term, usize> = BTreeMap::new();
    for row in &r.rows {
        if !row[2].is_blank() {
            *counts.entry(&row[2]).or_default() += 1;
        }
    }
    let candidates: Vec<(&crate::rdf::Term, usize)> = counts.into_iter().collect();
    let drawn: Vec<&(&crate::rdf::Term, usize)> = candidates
        .choose_multiple_weighted(rng, cfg.fix_var_children.min(candidates.len()), |c| {
            c.1 as f64
        })
        .expect("valid weights")
        .collect();
    let mut out = Vec::new();
    for (term, _) in drawn {
        let binding = Binding::from([(v.clone(), (*term).clone())]);
        if let Ok(child) = gp.bind(&binding) {
            out.push(child);
        }
    }
    Ok(out)
}

type Step = fn(&GraphPattern, &mut EvoRng) -> GraphPattern;

/// Applies every mutation with its own probability, in a fixed order.
/// Fix-var, the last step, may turn the individual into several children.
pub fn mutate(
    gp: &GraphPattern,
    ctx: &Context,
    rng: &mut EvoRng,
) -> Result<Vec<GraphPattern>, EndpointError> {
    let p = &ctx.cfg.mutation;
    let steps: [(f64, Step); 7] = [
        (p.introduce_var, introduce_var),
        (p.split_var, split_var),
        (p.merge_var, merge_var),
        (p.del_triple, del_triple),
        (p.expand_node, expand_node),
        (p.add_edge, add_edge),
        (p.increase_dist, increase_dist),
    ];
    let mut gp = gp.clone();
    for (prob, op) in steps {
        if rng.gen_bool(prob) {
            gp = op(&gp, rng);
        }
    }
    if rng.gen_bool(p.simplify) && gp.is_complete() && gp.is_connected() {
        gp = simplify(&gp);
    }
    if rng.gen_bool(p.fix_var) {
        let children = fix_var(&gp, ctx, rng)?;
        if !children.is_empty() {
            return Ok(children);
        }
    }
    Ok(vec![gp])
}
