//! Canonical labelling of graph patterns.
//!
//! A pattern is encoded as a vertex-coloured graph: one vertex per distinct
//! term or variable and one auxiliary vertex per triple pattern, linked to
//! its subject, predicate and object by edges labelled with the position.
//! Fixed terms are coloured by their serialization, `?source` and `?target`
//! get colours of their own, all other variables start uncoloured.
//! Colour refinement splits classes by the multiset of labelled neighbour
//! colours; remaining ties among variables are broken by individualizing
//! each member of the first non-singleton class in turn, refining again and
//! keeping the lexicographically smallest serialization over all leaves.
//! Every step depends only on colours, so isomorphic patterns reach the
//! same set of leaves and hence the same key.

use std::collections::{BTreeMap, HashMap};

use crate::bgp::{GraphPattern, PatternTerm, TriplePattern, Variable};

/// Upper bound on search-tree nodes; patterns that pass the size filters
/// stay far below it.
const MAX_SEARCH_NODES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalForm {
    pub key: String,
    /// Original variable → canonical variable. Reserved variables map to
    /// themselves.
    pub mapping: BTreeMap<Variable, Variable>,
}

impl CanonicalForm {
    /// The pattern with variables renamed to their canonical names.
    pub fn apply(&self, gp: &GraphPattern) -> GraphPattern {
        gp.map_terms(|pt| match pt {
            PatternTerm::Var(v) => {
                PatternTerm::Var(self.mapping.get(v).cloned().unwrap_or_else(|| v.clone()))
            }
            other => other.clone(),
        })
    }
}

struct Encoded {
    /// Term vertices first, then one vertex per triple.
    n_terms: usize,
    terms: Vec<PatternTerm>,
    triples: Vec<[usize; 3]>,
    /// Term vertex → list of (position, triple index).
    incident: Vec<Vec<(u8, usize)>>,
    /// Indices of non-reserved variable vertices.
    free_vars: Vec<usize>,
}

fn encode(gp: &GraphPattern) -> (Encoded, Vec<u32>) {
    let mut index: HashMap<&PatternTerm, usize> = HashMap::new();
    let mut terms: Vec<PatternTerm> = Vec::new();
    let mut triples = Vec::with_capacity(gp.len());
    for t in gp.triples() {
        let mut ids = [0; 3];
        for (i, pt) in t.terms().into_iter().enumerate() {
            ids[i] = *index.entry(pt).or_insert_with(|| {
                terms.push(pt.clone());
                terms.len() - 1
            });
        }
        triples.push(ids);
    }
    let n_terms = terms.len();
    let mut incident = vec![Vec::new(); n_terms];
    for (ti, ids) in triples.iter().enumerate() {
        for (pos, &v) in ids.iter().enumerate() {
            incident[v].push((pos as u8, ti));
        }
    }
    let labels: Vec<String> = terms
        .iter()
        .map(|pt| match pt {
            PatternTerm::Var(v) if v.is_reserved() => format!("R{}", v.name()),
            PatternTerm::Var(_) => "V".to_string(),
            PatternTerm::Term(t) => format!("T{t}"),
        })
        .chain(std::iter::repeat_n("#".to_string(), triples.len()))
        .collect();
    let colors = ranks(&labels);
    let free_vars = terms
        .iter()
        .enumerate()
        .filter(|(_, pt)| matches!(pt, PatternTerm::Var(v) if !v.is_reserved()))
        .map(|(i, _)| i)
        .collect();
    (
        Encoded {
            n_terms,
            terms,
            triples,
            incident,
            free_vars,
        },
        colors,
    )
}

/// Dense rank of each element among the sorted distinct values.
fn ranks<T: Ord + Clone>(items: &[T]) -> Vec<u32> {
    let mut sorted: Vec<&T> = items.iter().collect();
    sorted.sort();
    sorted.dedup();
    items
        .iter()
        .map(|x| sorted.binary_search(&x).expect("present") as u32)
        .collect()
}

fn distinct(colors: &[u32]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

fn refine(enc: &Encoded, mut colors: Vec<u32>) -> Vec<u32> {
    let mut classes = distinct(&colors);
    loop {
        let sigs: Vec<(u32, Vec<(u8, u32)>)> = (0..colors.len())
            .map(|v| {
                let mut nb: Vec<(u8, u32)> = if v < enc.n_terms {
                    enc.incident[v]
                        .iter()
                        .map(|&(pos, ti)| (pos, colors[enc.n_terms + ti]))
                        .collect()
                } else {
                    enc.triples[v - enc.n_terms]
                        .iter()
                        .enumerate()
                        .map(|(pos, &tv)| (pos as u8 + 3, colors[tv]))
                        .collect()
                };
                nb.sort_unstable();
                (colors[v], nb)
            })
            .collect();
        let next = ranks(&sigs);
        let n = distinct(&next);
        colors = next;
        if n == classes {
            return colors;
        }
        classes = n;
    }
}

fn serialize(enc: &Encoded, colors: &[u32]) -> (String, BTreeMap<Variable, Variable>) {
    let mut free: Vec<usize> = enc.free_vars.clone();
    free.sort_by_key(|&v| colors[v]);
    let mut names: HashMap<usize, Variable> = HashMap::new();
    let mut mapping = BTreeMap::new();
    for (i, &v) in free.iter().enumerate() {
        let canon = Variable::new(format!("c{i}"));
        if let PatternTerm::Var(orig) = &enc.terms[v] {
            mapping.insert(orig.clone(), canon.clone());
        }
        names.insert(v, canon);
    }
    for pt in &enc.terms {
        if let PatternTerm::Var(v) = pt {
            if v.is_reserved() {
                mapping.insert(v.clone(), v.clone());
            }
        }
    }
    let show = |v: usize| -> String {
        match names.get(&v) {
            Some(n) => n.to_string(),
            None => enc.terms[v].to_string(),
        }
    };
    let mut lines: Vec<String> = enc
        .triples
        .iter()
        .map(|[s, p, o]| format!("{} {} {} .", show(*s), show(*p), show(*o)))
        .collect();
    lines.sort();
    (lines.join("\n"), mapping)
}

struct Search<'a> {
    enc: &'a Encoded,
    best: Option<(String, BTreeMap<Variable, Variable>)>,
    nodes: usize,
}

impl Search<'_> {
    fn run(&mut self, colors: Vec<u32>) {
        self.nodes += 1;
        let colors = refine(self.enc, colors);
        // first non-singleton class (by colour) among free variables
        let mut counts: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for &v in &self.enc.free_vars {
            counts.entry(colors[v]).or_default().push(v);
        }
        let cell = counts.into_values().find(|members| members.len() > 1);
        match cell {
            None => {
                let candidate = serialize(self.enc, &colors);
                if self.best.as_ref().is_none_or(|(k, _)| candidate.0 < *k) {
                    self.best = Some(candidate);
                }
            }
            Some(members) => {
                for v in members {
                    if self.nodes >= MAX_SEARCH_NODES && self.best.is_some() {
                        return;
                    }
                    let individualized: Vec<u32> = colors
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| if i == v { 2 * c } else { 2 * c + 1 })
                        .collect();
                    self.run(individualized);
                }
            }
        }
    }
}

/// Canonical form of a pattern: equal keys iff the patterns are equal up
/// to renaming of non-reserved variables.
pub fn canonicalize(gp: &GraphPattern) -> CanonicalForm {
    let (enc, colors) = encode(gp);
    let mut search = Search {
        enc: &enc,
        best: None,
        nodes: 0,
    };
    search.run(colors);
    let (key, mapping) = search.best.expect("search visits at least one leaf");
    CanonicalForm { key, mapping }
}

/// Shorthand for the canonical key.
pub fn canonical_key(gp: &GraphPattern) -> String {
    canonicalize(gp).key
}

/// Brute-force isomorphism check under bijections of non-reserved
/// variables. Exponential; meant for tests on small patterns.
pub fn isomorphic_brute_force(a: &GraphPattern, b: &GraphPattern) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let va: Vec<Variable> = a
        .variables()
        .into_iter()
        .filter(|v| !v.is_reserved())
        .collect();
    let vb: Vec<Variable> = b
        .variables()
        .into_iter()
        .filter(|v| !v.is_reserved())
        .collect();
    if va.len() != vb.len() || a.variables().len() != b.variables().len() {
        return false;
    }
    let target: std::collections::BTreeSet<&TriplePattern> = b.triples().collect();
    let mut perm: Vec<usize> = (0..vb.len()).collect();
    loop {
        let map: HashMap<&Variable, &Variable> =
            va.iter().zip(perm.iter().map(|&i| &vb[i])).collect();
        let renamed = a.map_terms(|pt| match pt {
            PatternTerm::Var(v) => match map.get(v) {
                Some(w) => PatternTerm::Var((*w).clone()),
                None => pt.clone(),
            },
            other => other.clone(),
        });
        if renamed.triples().collect::<std::collections::BTreeSet<_>>() == target {
            return true;
        }
        if !next_permutation(&mut perm) {
            return false;
        }
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
