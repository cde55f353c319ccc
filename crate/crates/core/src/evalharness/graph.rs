use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::predict::rank;
use crate::rdf::{Direction, Term, TermId, TripleStore};

/// Node scores indexed by term id; terms that are never a subject or
/// object score 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphScores {
    pub pagerank: Vec<f64>,
    pub authority: Vec<f64>,
    pub hub: Vec<f64>,
}

impl GraphScores {
    pub fn compute(store: &TripleStore) -> GraphScores {
        let (authority, hub) = hits(store, 1e-10, 1000);
        GraphScores {
            pagerank: pagerank(store, 0.85, 1e-10, 1000),
            authority,
            hub,
        }
    }
}

/// Nodes (subjects and objects) in id order, with a dense index per node.
fn node_index(
    store: &TripleStore,
    edges: &[(TermId, TermId)],
) -> (Vec<TermId>, Vec<Option<usize>>) {
    let mut is_node = vec![false; store.term_count()];
    for &(s, o) in edges {
        is_node[s as usize] = true;
        is_node[o as usize] = true;
    }
    let nodes: Vec<TermId> = (0..store.term_count() as TermId)
        .filter(|&i| is_node[i as usize])
        .collect();
    let mut index = vec![None; store.term_count()];
    for (i, &n) in nodes.iter().enumerate() {
        index[n as usize] = Some(i);
    }
    (nodes, index)
}

/// PageRank over the distinct subject-object edges. Mass of nodes without
/// out-edges is spread uniformly, so scores sum to 1.
pub fn pagerank(store: &TripleStore, damping: f64, eps: f64, max_iter: usize) -> Vec<f64> {
    let edges = store.edges();
    let (nodes, index) = node_index(store, &edges);
    let n = nodes.len();
    let mut out = vec![0.0; store.term_count()];
    if n == 0 {
        return out;
    }
    let e: Vec<(usize, usize)> = edges
        .iter()
        .map(|&(s, o)| {
            (
                index[s as usize].expect("node"),
                index[o as usize].expect("node"),
            )
        })
        .collect();
    let mut out_deg = vec![0usize; n];
    for &(s, _) in &e {
        out_deg[s] += 1;
    }
    let mut r = vec![1.0 / n as f64; n];
    for _ in 0..max_iter {
        let dangling: f64 = (0..n).filter(|&i| out_deg[i] == 0).map(|i| r[i]).sum();
        let base = (1.0 - damping) / n as f64 + damping * dangling / n as f64;
        let mut next = vec![base; n];
        for &(s, o) in &e {
            next[o] += damping * r[s] / out_deg[s] as f64;
        }
        let delta: f64 = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum();
        r = next;
        if delta < eps {
            break;
        }
    }
    for (i, &node) in nodes.iter().enumerate() {
        out[node as usize] = r[i];
    }
    out
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// HITS (authority, hub) scores with L2 normalisation after each step.
pub fn hits(store: &TripleStore, eps: f64, max_iter: usize) -> (Vec<f64>, Vec<f64>) {
    let edges = store.edges();
    let (nodes, index) = node_index(store, &edges);
    let n = nodes.len();
    let mut auth_out = vec![0.0; store.term_count()];
    let mut hub_out = vec![0.0; store.term_count()];
    if n == 0 {
        return (auth_out, hub_out);
    }
    let e: Vec<(usize, usize)> = edges
        .iter()
        .map(|&(s, o)| {
            (
                index[s as usize].expect("node"),
                index[o as usize].expect("node"),
            )
        })
        .collect();
    let mut hub = vec![1.0; n];
    normalize(&mut hub);
    let mut auth = vec![0.0; n];
    for _ in 0..max_iter {
        let mut next_auth = vec![0.0; n];
        for &(s, o) in &e {
            next_auth[o] += hub[s];
        }
        normalize(&mut next_auth);
        let mut next_hub = vec![0.0; n];
        for &(s, o) in &e {
            next_hub[s] += next_auth[o];
        }
        normalize(&mut next_hub);
        let delta = next_auth
            .iter()
            .zip(&auth)
            .chain(next_hub.iter().zip(&hub))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        auth = next_auth;
        hub = next_hub;
        if delta < eps {
            break;
        }
    }
    for (i, &node) in nodes.iter().enumerate() {
        auth_out[node as usize] = auth[i];
        hub_out[node as usize] = hub[i];
    }
    (auth_out, hub_out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    OutDeg,
    InDeg,
    PageRank,
    HitsAuthority,
    HitsHub,
}

impl Scorer {
    pub fn name(self) -> &'static str {
        match self {
            Scorer::OutDeg => "outdeg",
            Scorer::InDeg => "indeg",
            Scorer::PageRank => "pagerank",
            Scorer::HitsAuthority => "hits",
            Scorer::HitsHub => "hits_hub",
        }
    }
}

pub fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::In => "in",
        Direction::Out => "out",
        Direction::Bidi => "bidi",
    }
}

/// Top `k` one-hop neighbours of `source` by `scorer`, ties by term.
pub fn baseline_predict(
    store: &TripleStore,
    scores: &GraphScores,
    source: &Term,
    neighbourhood: Direction,
    scorer: Scorer,
    k: usize,
) -> Vec<(Term, f64)> {
    let Some(id) = store.id_of(source) else {
        return Vec::new();
    };
    let values: BTreeMap<Term, f64> = store
        .neighbours(id, neighbourhood)
        .into_iter()
        .filter(|&n| n != id)
        .map(|n| {
            let term = store.term(n);
            let v = match scorer {
                Scorer::OutDeg => store.degree(term, Direction::Out) as f64,
                Scorer::InDeg => store.degree(term, Direction::In) as f64,
                Scorer::PageRank => scores.pagerank[n as usize],
                Scorer::HitsAuthority => scores.authority[n as usize],
                Scorer::HitsHub => scores.hub[n as usize],
            };
            (term.clone(), v)
        })
        .collect();
    let mut ranked = rank(values);
    ranked.truncate(k);
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdf::load_ntriples;

    fn store(edges: &[(&str, &str)]) -> TripleStore {
        let text: String = edges
            .iter()
            .map(|(s, o)| format!("<http://e/{s}> <http://e/p> <http://e/{o}> .\n"))
            .collect();
        load_ntriples(text.as_bytes(), None).unwrap()
    }

    fn score_of(store: &TripleStore, v: &[f64], name: &str) -> f64 {
        v[store.id_of(&Term::Iri(format!("http://e/{name}"))).unwrap() as usize]
    }

    #[test]
    fn pagerank_cycle_is_uniform() {
        let s = store(&[("a", "b"), ("b", "c"), ("c", "d"), ("d", "a")]);
        let pr = pagerank(&s, 0.85, 1e-12, 1000);
        for n in ["a", "b", "c", "d"] {
            assert!((score_of(&s, &pr, n) - 0.25).abs() < 1e-9);
        }
        assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pagerank_two_nodes() {
        // reference loop: a -> b, b dangling
        let d = 0.85;
        let (mut a, mut b) = (0.5, 0.5);
        for _ in 0..200 {
            let base = (1.0 - d) / 2.0 + d * b / 2.0;
            (a, b) = (base, base + d * a);
        }
        let s = store(&[("a", "b")]);
        let pr = pagerank(&s, d, 1e-14, 1000);
        assert!((score_of(&s, &pr, "a") - a).abs() < 1e-9);
        assert!((score_of(&s, &pr, "b") - b).abs() < 1e-9);
    }

    #[test]
    fn parallel_predicates_count_once() {
        let text =
            "<http://e/a> <http://e/p> <http://e/b> .\n<http://e/a> <http://e/q> <http://e/b> .\n\
                    <http://e/a> <http://e/p> <http://e/c> .\n";
        let s = load_ntriples(text.as_bytes(), None).unwrap();
        let pr = pagerank(&s, 0.85, 1e-12, 1000);
        assert!((score_of(&s, &pr, "b") - score_of(&s, &pr, "c")).abs() < 1e-12);
    }

    #[test]
    fn hits_bipartite() {
        let s = store(&[
            ("a1", "b1"),
            ("a1", "b2"),
            ("a1", "b3"),
            ("a2", "b1"),
            ("a2", "b2"),
            ("a2", "b3"),
        ]);
        let (auth, hub) = hits(&s, 1e-12, 1000);
        for b in ["b2", "b3"] {
            assert!((score_of(&s, &auth, b) - score_of(&s, &auth, "b1")).abs() < 1e-9);
        }
        assert!((score_of(&s, &hub, "a1") - score_of(&s, &hub, "a2")).abs() < 1e-9);
        assert_eq!(score_of(&s, &auth, "a1"), 0.0);
    }

    #[test]
    fn baselines() {
        // hub h links to leaves with in-degrees 3, 2, 1
        let s = store(&[
            ("h", "l1"),
            ("h", "l2"),
            ("h", "l3"),
            ("x", "l1"),
            ("y", "l1"),
            ("x", "l2"),
        ]);
        let scores = GraphScores::compute(&s);
        let r = baseline_predict(
            &s,
            &scores,
            &Term::Iri("http://e/h".into()),
            Direction::Out,
            Scorer::InDeg,
            10,
        );
        let names: Vec<String> = r.iter().map(|(t, _)| t.value().to_string()).collect();
        assert_eq!(names, ["http://e/l1", "http://e/l2", "http://e/l3"]);
        assert!(baseline_predict(
            &s,
            &scores,
            &Term::Iri("http://e/zz".into()),
            Direction::Bidi,
            Scorer::PageRank,
            10
        )
        .is_empty());

        let cyc = store(&[("a", "b"), ("b", "c"), ("c", "a")]);
        let scores = GraphScores::compute(&cyc);
        let r = baseline_predict(
            &cyc,
            &scores,
            &Term::Iri("http://e/a".into()),
            Direction::Bidi,
            Scorer::PageRank,
            10,
        );
        assert_eq!(r.len(), 2);
        assert!((r[0].1 - 1.0 / 3.0).abs() < 1e-9 && (r[1].1 - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(r[0].0, Term::Iri("http://e/b".into()));
    }
}
