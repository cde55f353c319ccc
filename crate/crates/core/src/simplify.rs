//! Rule-based reduction of a pattern to a smaller one with the same
//! `?source ?target` projection.
//!
//! Rules, applied to a fixpoint in this order:
//! (a) drop a triple that another triple instantiates, where the dropped
//!     triple differs only in variables occurring nowhere else;
//! (b) drop a triple touching a fixed node whose variables all occur
//!     nowhere else;
//! (c) drop a leaf triple `n ?p ?leaf` (either direction) where `?p` and
//!     `?leaf` occur nowhere else.
//!
//! Rule (a) is sound on every graph. Rules (b) and (c) only hold when the
//! dropped triple is satisfiable in the data, so [`simplify_verified`]
//! checks each of their applications against an endpoint.

use std::collections::HashSet;

use crate::bgp::{
    EvalStatus, GraphPattern, PatternTerm, SelectQuery, TriplePattern, ValuesTable, Variable,
};
use crate::endpoint::{Endpoint, EndpointError};
use crate::rdf::Term;

/// Which `?source ?target` rows a verified simplification compares.
#[derive(Debug, Clone, PartialEq)]
pub enum VerifyScope {
    /// The whole projection over the store.
    Full,
    /// The projection restricted to these sources.
    Sources(Vec<Term>),
}

fn fresh(gp: &GraphPattern, t: &PatternTerm) -> bool {
    match t.as_var() {
        Some(v) => !v.is_reserved() && gp.occurrences(v) == 1,
        None => false,
    }
}

/// `general` differs from `specific` only where it has fresh variables.
fn subsumed(gp: &GraphPattern, general: &TriplePattern, specific: &TriplePattern) -> bool {
    general != specific
        && general
            .terms()
            .iter()
            .zip(specific.terms())
            .all(|(g, s)| *g == s || fresh(gp, g))
}

fn rule_a(gp: &GraphPattern) -> Vec<TriplePattern> {
    gp.triples()
        .filter(|t| gp.triples().any(|o| subsumed(gp, t, o)))
        .cloned()
        .collect()
}

fn rule_b(gp: &GraphPattern) -> Vec<TriplePattern> {
    gp.triples()
        .filter(|t| {
            let [s, _, o] = t.terms();
            let touches_fixed = !s.is_var() || !o.is_var();
            touches_fixed && t.terms().iter().all(|x| !x.is_var() || fresh(gp, x))
        })
        .cloned()
        .collect()
}

fn rule_c(gp: &GraphPattern) -> Vec<TriplePattern> {
    gp.triples()
        .filter(|t| {
            let [s, p, o] = t.terms();
            fresh(gp, p) && (fresh(gp, o) ^ fresh(gp, s))
        })
        .cloned()
        .collect()
}

fn structurally_ok(before: &GraphPattern, after: &GraphPattern) -> bool {
    !after.is_empty()
        && (after.is_complete() || !before.is_complete())
        && (after.is_connected() || !before.is_connected())
}

type Rule = fn(&GraphPattern) -> Vec<TriplePattern>;

fn reduce<E>(
    gp: &GraphPattern,
    mut verify: impl FnMut(&GraphPattern) -> Result<bool, E>,
) -> Result<GraphPattern, E> {
    let mut current = gp.clone();
    'outer: loop {
        let rules: [(Rule, bool); 3] = [(rule_a, false), (rule_b, true), (rule_c, true)];
        for (rule, needs_check) in rules {
            for t in rule(&current) {
                let mut next = current.clone();
                next.remove(&t);
                if !structurally_ok(&current, &next) {
                    continue;
                }
                if needs_check && !verify(&next)? {
                    continue;
                }
                current = next;
                continue 'outer;
            }
        }
        return Ok(current);
    }
}

/// Syntactic simplification: all rules, no queries.
pub fn simplify(gp: &GraphPattern) -> GraphPattern {
    match reduce::<std::convert::Infallible>(gp, |_| Ok(true)) {
        Ok(g) => g,
        Err(e) => match e {},
    }
}

fn projection(
    endpoint: &Endpoint,
    gp: &GraphPattern,
    scope: &VerifyScope,
) -> Result<Option<HashSet<Vec<Term>>>, EndpointError> {
    let mut q = SelectQuery::new(gp.clone(), vec![Variable::source(), Variable::target()]);
    if let VerifyScope::Sources(sources) = scope {
        q = q.with_values(ValuesTable::single(
            Variable::source(),
            sources.iter().cloned(),
        ));
    }
    let r = endpoint.run_select(&q)?;
    if r.status != EvalStatus::Complete {
        return Ok(None);
    }
    Ok(Some(r.rows.into_iter().collect()))
}

/// Simplification where every application of rules (b) and (c) must keep
/// the projection unchanged on the endpoint. Applications whose check
/// times out are skipped.
pub fn simplify_verified(
    gp: &GraphPattern,
    endpoint: &Endpoint,
    scope: &VerifyScope,
) -> Result<GraphPattern, EndpointError> {
    let Some(reference) = projection(endpoint, gp, scope)? else {
        return reduce(gp, |_| Ok(false));
    };
    reduce(gp, |candidate| {
        Ok(projection(endpoint, candidate, scope)?.as_ref() == Some(&reference))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endpoint::EndpointConfig;
    use crate::rdf::load_ntriples;
    use std::collections::HashMap;
    use std::sync::Arc;

    fn gp(s: &str) -> GraphPattern {
        let mut p = HashMap::new();
        p.insert(String::new(), "http://ex.org/".to_string());
        GraphPattern::parse_with_prefixes(s, &p).unwrap()
    }

    fn endpoint(data: &str) -> Endpoint {
        let text = format!("@prefix : <http://ex.org/> .\n{data}");
        let store = Arc::new(load_ntriples(text.as_bytes(), None).unwrap());
        Endpoint::local(store, EndpointConfig::default()).unwrap()
    }

    #[test]
    fn parallel_variable_edge() {
        let g = gp("?source :p ?target . ?source ?q ?target");
        assert_eq!(simplify(&g), gp("?source :p ?target"));
    }

    #[test]
    fn minimal_is_fixpoint() {
        let g = gp("?source :p ?target");
        assert_eq!(simplify(&g), g);
        let g = gp("?source ?p ?target");
        assert_eq!(simplify(&g), g);
    }

    #[test]
    fn fixed_branches() {
        let g = gp("?source :p ?target . :X :q :Y . ?source :r :X");
        assert_eq!(simplify(&g), gp("?source :p ?target . ?source :r :X"));
        let g = gp("?source :p ?target . :X ?q ?y . ?source :r :X");
        assert_eq!(simplify(&g), gp("?source :p ?target . ?source :r :X"));
    }

    #[test]
    fn leaf_needs_verification() {
        let g = gp("?source :p ?target . ?target ?x ?leaf");
        assert_eq!(simplify(&g), gp("?source :p ?target"));
        // Germany has no outgoing edge: dropping the leaf adds a row
        let sink = endpoint(":Berlin :p :Germany .\n:Paris :p :France .\n:France :q :Europe .\n");
        assert_eq!(simplify_verified(&g, &sink, &VerifyScope::Full).unwrap(), g);
        let no_sink = endpoint(":Paris :p :France .\n:France :q :Europe .\n");
        assert_eq!(
            simplify_verified(&g, &no_sink, &VerifyScope::Full).unwrap(),
            gp("?source :p ?target")
        );
    }

    #[test]
    fn keeps_completeness_and_connectivity() {
        let g = gp("?source ?p ?x . ?x ?q ?target");
        assert_eq!(simplify(&g), g);
        let g = gp("?source :p :X . :X :q ?target");
        assert_eq!(simplify(&g), g);
    }

    #[test]
    fn idempotent() {
        for text in [
            "?source :p ?target . ?source ?q ?target . ?target ?a ?b . :X :y :Z . ?source :r :X",
            "?source ?p ?target . ?b ?a ?source",
        ] {
            let once = simplify(&gp(text));
            assert_eq!(simplify(&once), once);
        }
    }
}
