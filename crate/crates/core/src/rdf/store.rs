use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Term, Triple};

pub type TermId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
    Bidi,
}

/// Immutable, dictionary-encoded triple store with SPO, POS and OSP
/// orderings. Every bound/unbound combination of a lookup maps to a
/// contiguous range in one of the three indexes.
#[derive(Debug, Clone, Default)]
pub struct TripleStore {
    terms: Vec<Term>,
    ids: HashMap<Term, TermId>,
    spo: Vec<[TermId; 3]>,
    pos: Vec<[TermId; 3]>,
    osp: Vec<[TermId; 3]>,
    distinct: [usize; 3],
}

impl TripleStore {
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> TripleStore {
        let mut store = TripleStore::default();
        let mut spo = Vec::new();
        for t in triples {
            let s = store.intern(t.subject);
            let p = store.intern(t.predicate);
            let o = store.intern(t.object);
            spo.push([s, p, o]);
        }
        spo.sort_unstable();
        spo.dedup();
        let mut pos: Vec<_> = spo.iter().map(|&[s, p, o]| [p, o, s]).collect();
        pos.sort_unstable();
        let mut osp: Vec<_> = spo.iter().map(|&[s, p, o]| [o, s, p]).collect();
        osp.sort_unstable();
        let count_distinct = |v: &[[TermId; 3]]| {
            let mut n = 0;
            let mut last = None;
            for k in v {
                if last != Some(k[0]) {
                    n += 1;
                    last = Some(k[0]);
                }
            }
            n
        };
        store.distinct = [
            count_distinct(&spo),
            count_distinct(&pos),
            count_distinct(&osp),
        ];
        store.spo = spo;
        store.pos = pos;
        store.osp = osp;
        store
    }

    fn intern(&mut self, term: Term) -> TermId {
        if let Some(&id) = self.ids.get(&term) {
            return id;
        }
        let id = self.terms.len() as TermId;
        self.terms.push(term.clone());
        self.ids.insert(term, id);
        id
    }

    pub fn len(&self) -> usize {
        self.spo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spo.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn id_of(&self, term: &Term) -> Option<TermId> {
        self.ids.get(term).copied()
    }

    pub fn term(&self, id: TermId) -> &Term {
        &self.terms[id as usize]
    }

    /// Number of distinct subjects, predicates and objects.
    pub fn distinct_counts(&self) -> [usize; 3] {
        self.distinct
    }

    pub fn index_sizes(&self) -> [usize; 3] {
        [self.spo.len(), self.pos.len(), self.osp.len()]
    }

    /// All triples matching the bound slots, as `[s, p, o]` ids.
    pub fn match_ids(
        &self,
        s: Option<TermId>,
        p: Option<TermId>,
        o: Option<TermId>,
    ) -> impl Iterator<Item = [TermId; 3]> + '_ {
        let (index, prefix, order): (&[[TermId; 3]], Vec<TermId>, u8) = match (s, p, o) {
            (Some(s), Some(p), Some(o)) => (&self.spo, vec![s, p, o], 0),
            (Some(s), Some(p), None) => (&self.spo, vec![s, p], 0),
            (Some(s), None, None) => (&self.spo, vec![s], 0),
            (Some(s), None, Some(o)) => (&self.osp, vec![o, s], 2),
            (None, Some(p), Some(o)) => (&self.pos, vec![p, o], 1),
            (None, Some(p), None) => (&self.pos, vec![p], 1),
            (None, None, Some(o)) => (&self.osp, vec![o], 2),
            (None, None, None) => (&self.spo, vec![], 0),
        };
        let range = prefix_range(index, &prefix);
        index[range].iter().map(move |&k| match order {
            0 => k,
            1 => [k[2], k[0], k[1]],
            _ => [k[1], k[2], k[0]],
        })
    }

    /// Number of triples matching the bound slots, in O(log n).
    pub fn count_ids(&self, s: Option<TermId>, p: Option<TermId>, o: Option<TermId>) -> usize {
        let (index, prefix): (&[[TermId; 3]], Vec<TermId>) = match (s, p, o) {
            (Some(s), Some(p), Some(o)) => (&self.spo, vec![s, p, o]),
            (Some(s), Some(p), None) => (&self.spo, vec![s, p]),
            (Some(s), None, None) => (&self.spo, vec![s]),
            (Some(s), None, Some(o)) => (&self.osp, vec![o, s]),
            (None, Some(p), Some(o)) => (&self.pos, vec![p, o]),
            (None, Some(p), None) => (&self.pos, vec![p]),
            (None, None, Some(o)) => (&self.osp, vec![o]),
            (None, None, None) => return self.spo.len(),
        };
        prefix_range(index, &prefix).len()
    }

    /// Term-level lookup. A bound term unknown to the dictionary (or a
    /// literal in subject position) matches nothing.
    pub fn match_terms<'a>(
        &'a self,
        s: Option<&Term>,
        p: Option<&Term>,
        o: Option<&Term>,
    ) -> Box<dyn Iterator<Item = Triple> + 'a> {
        let resolve = |t: Option<&Term>| match t {
            None => Some(None),
            Some(t) => self.id_of(t).map(Some),
        };
        match (resolve(s), resolve(p), resolve(o)) {
            (Some(s), Some(p), Some(o)) => {
                Box::new(self.match_ids(s, p, o).map(|k| self.decode(k)))
            }
            _ => Box::new(std::iter::empty()),
        }
    }

    pub fn decode(&self, [s, p, o]: [TermId; 3]) -> Triple {
        Triple {
            subject: self.term(s).clone(),
            predicate: self.term(p).clone(),
            object: self.term(o).clone(),
        }
    }

    /// All triples in SPO id order.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.spo.iter().map(|&k| self.decode(k))
    }

    pub fn degree(&self, node: &Term, direction: Direction) -> usize {
        let Some(id) = self.id_of(node) else {
            return 0;
        };
        let out = self.count_ids(Some(id), None, None);
        let inc = self.count_ids(None, None, Some(id));
        match direction {
            Direction::In => inc,
            Direction::Out => out,
            Direction::Bidi => inc + out,
        }
    }

    /// Distinct one-hop neighbours of `node` in the given direction, in id order.
    pub fn neighbours(&self, node: TermId, direction: Direction) -> Vec<TermId> {
        let mut out = Vec::new();
        if matches!(direction, Direction::Out | Direction::Bidi) {
            out.extend(self.match_ids(Some(node), None, None).map(|k| k[2]));
        }
        if matches!(direction, Direction::In | Direction::Bidi) {
            out.extend(self.match_ids(None, None, Some(node)).map(|k| k[0]));
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Distinct `(subject, object)` id pairs, i.e. the store as a simple
    /// directed graph with predicate multiplicity collapsed.
    pub fn edges(&self) -> Vec<(TermId, TermId)> {
        let mut e: Vec<_> = self.spo.iter().map(|k| (k[0], k[2])).collect();
        e.sort_unstable();
        e.dedup();
        e
    }
}

fn prefix_range(index: &[[TermId; 3]], prefix: &[TermId]) -> std::ops::Range<usize> {
    let n = prefix.len();
    if n == 0 {
        return 0..index.len();
    }
    let lo = index.partition_point(|k| k[..n] < *prefix);
    let hi = index.partition_point(|k| k[..n] <= *prefix);
    lo..hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdf::load_ntriples;
    use proptest::prelude::*;

    fn iri(s: &str) -> Term {
        Term::Iri(format!("http://ex.org/{s}"))
    }

    fn capitals() -> TripleStore {
        let text = "\
            <http://ex.org/Berlin> <http://ex.org/capitalOf> <http://ex.org/Germany> .\n\
            <http://ex.org/Paris> <http://ex.org/capitalOf> <http://ex.org/France> .\n\
            <http://ex.org/Rome> <http://ex.org/capitalOf> <http://ex.org/Italy> .\n\
            <http://ex.org/Berlin> <http://ex.org/locatedIn> <http://ex.org/Europe> .\n\
            <http://ex.org/Germany> <http://ex.org/partOf> <http://ex.org/Europe> .\n";
        load_ntriples(text.as_bytes(), None).unwrap()
    }

    #[test]
    fn match_all_and_bound() {
        let g = capitals();
        assert_eq!(g.match_terms(None, None, None).count(), 5);
        let hits: Vec<_> = g
            .match_terms(Some(&iri("Berlin")), Some(&iri("capitalOf")), None)
            .collect();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].object, iri("Germany"));
        assert_eq!(
            g.match_terms(Some(&Term::literal("Berlin")), None, None)
                .count(),
            0
        );
    }

    #[test]
    fn degrees() {
        let text = "\
            <http://ex.org/x> <http://ex.org/p> <http://ex.org/a> .\n\
            <http://ex.org/x> <http://ex.org/p> <http://ex.org/b> .\n\
            <http://ex.org/x> <http://ex.org/q> <http://ex.org/c> .\n\
            <http://ex.org/d> <http://ex.org/p> <http://ex.org/x> .\n\
            <http://ex.org/e> <http://ex.org/q> <http://ex.org/x> .\n\
            <http://ex.org/loop> <http://ex.org/p> <http://ex.org/loop> .\n";
        let g = load_ntriples(text.as_bytes(), None).unwrap();
        assert_eq!(g.degree(&iri("x"), Direction::Out), 3);
        assert_eq!(g.degree(&iri("x"), Direction::In), 2);
        assert_eq!(g.degree(&iri("x"), Direction::Bidi), 5);
        assert_eq!(g.degree(&iri("nowhere"), Direction::Bidi), 0);
        assert_eq!(g.degree(&iri("loop"), Direction::In), 1);
        assert_eq!(g.degree(&iri("loop"), Direction::Out), 1);
        assert_eq!(g.degree(&iri("loop"), Direction::Bidi), 2);
    }

    #[test]
    fn round_trip_through_ntriples() {
        let g = capitals();
        let mut buf = Vec::new();
        crate::rdf::write_ntriples(&mut buf, &g.triples().collect::<Vec<_>>()).unwrap();
        let g2 = load_ntriples(buf.as_slice(), None).unwrap();
        let a: std::collections::BTreeSet<_> = g.triples().collect();
        let b: std::collections::BTreeSet<_> = g2.triples().collect();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn match_equals_brute_force(
            raw in proptest::collection::vec((0u8..6, 0u8..3, 0u8..6), 0..60),
            qs in proptest::option::of(0u8..7),
            qp in proptest::option::of(0u8..4),
            qo in proptest::option::of(0u8..7),
        ) {
            let triples: Vec<Triple> = raw
                .iter()
                .map(|&(s, p, o)| Triple {
                    subject: iri(&format!("n{s}")),
                    predicate: iri(&format!("p{p}")),
                    object: iri(&format!("n{o}")),
                })
                .collect();
            let g = TripleStore::from_triples(triples.clone());
            let sizes = g.index_sizes();
            prop_assert_eq!(sizes[0], sizes[1]);
            prop_assert_eq!(sizes[1], sizes[2]);
            let s = qs.map(|x| iri(&format!("n{x}")));
            let p = qp.map(|x| iri(&format!("p{x}")));
            let o = qo.map(|x| iri(&format!("n{x}")));
            let mut expected: Vec<Triple> = triples
                .iter()
                .filter(|t| s.as_ref().is_none_or(|s| &t.subject == s)
                    && p.as_ref().is_none_or(|p| &t.predicate == p)
                    && o.as_ref().is_none_or(|o| &t.object == o))
                .cloned()
                .collect();
            expected.sort();
            expected.dedup();
            let mut got: Vec<Triple> = g.match_terms(s.as_ref(), p.as_ref(), o.as_ref()).collect();
            let n = got.len();
            got.sort();
            got.dedup();
            prop_assert_eq!(n, got.len());
            prop_assert_eq!(&got, &expected);
            let ids = |t: &Option<Term>| t.as_ref().map(|t| g.id_of(t));
            if let (Some(si), Some(pi), Some(oi)) = (
                ids(&s).map_or(Some(None), |x| x.map(Some)),
                ids(&p).map_or(Some(None), |x| x.map(Some)),
                ids(&o).map_or(Some(None), |x| x.map(Some)),
            ) {
                prop_assert_eq!(g.count_ids(si, pi, oi), expected.len());
            }
        }
    }
}
