use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use gplearn::bgp::{
    select, Binding, Clock, EvalOptions, EvalStatus, GraphPattern, PatternTerm, SelectQuery,
    TriplePattern, Variable,
};
use gplearn::canon::canonical_key;
use gplearn::endpoint::{Endpoint, EndpointConfig};
use gplearn::evalharness::{metrics, split};
use gplearn::evolution::{AcceptedPattern, HallOfFame, Individual};
use gplearn::fitness::{
    evaluation_from_predictions, fitness_tuple, CoverageLedger, FitnessConfig, FitnessTuple,
    GroundTruth, PatternEvaluation,
};
use gplearn::predict::{fuse, precision_loss, reduce_queries, Strategy};
use gplearn::rdf::{Term, Triple, TripleStore};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn iri(s: &str) -> Term {
    Term::Iri(format!("http://ex.org/{s}"))
}

fn store(rng: &mut ChaCha8Rng, entities: usize, preds: usize, size: usize) -> Vec<Triple> {
    let mut out: Vec<Triple> = (0..size)
        .map(|_| Triple {
            subject: iri(&format!("e{}", rng.gen_range(0..entities))),
            predicate: iri(&format!("p{}", rng.gen_range(0..preds))),
            object: iri(&format!("e{}", rng.gen_range(0..entities))),
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

fn pattern(rng: &mut ChaCha8Rng, len: usize) -> GraphPattern {
    let names = ["source", "target", "a", "b"];
    let node = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.8) {
            PatternTerm::var(names.choose(rng).unwrap())
        } else {
            PatternTerm::Term(iri(&format!("e{}", rng.gen_range(0..12))))
        }
    };
    let mut gp = GraphPattern::default();
    while gp.len() < len {
        let p = if rng.gen_bool(0.3) {
            PatternTerm::var("p")
        } else {
            PatternTerm::Term(iri(&format!("p{}", rng.gen_range(0..3))))
        };
        let (s, o) = (node(rng), node(rng));
        if let Ok(t) = TriplePattern::new(s, p, o) {
            gp.insert(t);
        }
    }
    gp
}

fn gt(rng: &mut ChaCha8Rng, n: usize) -> GroundTruth {
    let mut pairs = BTreeSet::new();
    while pairs.len() < n {
        pairs.insert((
            iri(&format!("e{}", rng.gen_range(0..12))),
            iri(&format!("e{}", rng.gen_range(0..12))),
        ));
    }
    GroundTruth::new(pairs.into_iter().collect()).unwrap()
}

fn pv(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| *[0.0, 0.0, 0.25, 1.0 / 3.0, 0.5, 1.0].choose(rng).unwrap())
        .collect()
}

fn accepted(i: usize, pv: Vec<f64>, score: f64) -> AcceptedPattern {
    let pattern = GraphPattern::parse(&format!("?source <http://ex.org/q{i}> ?target")).unwrap();
    AcceptedPattern {
        run: 1,
        sparql: String::new(),
        key: canonical_key(&pattern),
        pattern,
        fitness: FitnessTuple {
            score,
            f1: score / 10.0,
            ..FitnessTuple::default()
        },
        evaluation: PatternEvaluation {
            covered: pv.iter().map(|&p| p > 0.0).collect(),
            result_lens: vec![1; pv.len()],
            pv,
            recall: 0.0,
            precision: score / 7.0,
            status: EvalStatus::Complete,
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ledger_only_improves(seed: u64, n in 1usize..12, runs in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ledger = CoverageLedger::new(n);
        let mut remains = ledger.remains();
        prop_assert_eq!(remains, n as f64);
        for _ in 0..runs {
            let before = ledger.clone();
            let pvs: Vec<Vec<f64>> = (0..rng.gen_range(0..4)).map(|_| pv(&mut rng, n)).collect();
            ledger.update(pvs.iter().map(Vec::as_slice));
            for (b, a) in before.best.iter().zip(&ledger.best) {
                prop_assert!(a >= b);
            }
            let r = ledger.remains();
            prop_assert!(r <= remains && r >= 0.0 && r <= n as f64);
            remains = r;
        }
    }

    #[test]
    fn precision_vector_definition(seed: u64, n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = gt(&mut rng, n);
        let mut predictions: HashMap<Term, HashSet<Term>> = HashMap::new();
        for s in gt.sources() {
            if rng.gen_bool(0.8) {
                let k = rng.gen_range(0..5);
                let set = (0..k).map(|_| iri(&format!("e{}", rng.gen_range(0..12)))).collect();
                predictions.insert(s, set);
            }
        }
        let ev = evaluation_from_predictions(&gt, &predictions, EvalStatus::Complete);
        for (i, (s, t)) in gt.pairs().iter().enumerate() {
            let set = predictions.get(s);
            let want = match set {
                Some(set) if set.contains(t) => 1.0 / set.len() as f64,
                _ => 0.0,
            };
            prop_assert_eq!(ev.pv[i], want);
        }
        let ledger = CoverageLedger { best: pv(&mut rng, n) };
        let gp = GraphPattern::parse("?source <http://ex.org/p0> ?target").unwrap();
        let fit = fitness_tuple(&gp, &ev, &gt, &ledger, 0.0, &FitnessConfig::default());
        prop_assert!(fit.gain <= fit.remains + 1e-12);
        prop_assert!(fit.score <= fit.gain + 1e-12);
        prop_assert!(fit.f1 >= 0.0 && fit.f1 <= 1.0);
    }

    #[test]
    fn binding_leaves_unbound_variables(seed: u64, len in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gp = pattern(&mut rng, len);
        let vars: Vec<Variable> = gp.variables().into_iter().collect();
        let mut binding = Binding::new();
        for v in &vars {
            if rng.gen_bool(0.5) {
                binding.insert(v.clone(), iri(&format!("e{}", rng.gen_range(0..12))));
            }
        }
        let Ok(bound) = gp.bind(&binding) else { return Ok(()) };
        for v in &vars {
            prop_assert_eq!(bound.mentions(v), !binding.contains_key(v));
        }
    }

    #[test]
    fn timeouts_truncate_results(seed: u64, budget in 1u32..400) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let triples = store(&mut rng, 12, 3, 60);
        let store = TripleStore::from_triples(triples);
        let len = rng.gen_range(1..4);
        let gp = pattern(&mut rng, len);
        let projection: Vec<Variable> = gp.variables().into_iter().collect();
        if projection.is_empty() {
            return Ok(());
        }
        let q = SelectQuery::new(gp, projection);
        let full = select(&store, &q, &EvalOptions::unlimited()).unwrap();
        let clock = Clock::Steps { seconds_per_step: 1e-3 };
        let t = budget as f64 * 1e-3;
        let soft = select(&store, &q, &EvalOptions { soft_timeout: Some(t), hard_timeout: None, clock }).unwrap();
        let all: HashSet<&Vec<Term>> = full.rows.iter().collect();
        prop_assert!(soft.rows.iter().all(|r| all.contains(r)));
        if soft.status == EvalStatus::Complete {
            prop_assert_eq!(soft.rows.len(), full.rows.len());
        }
        let hard = select(&store, &q, &EvalOptions { soft_timeout: None, hard_timeout: Some(t), clock }).unwrap();
        if hard.status == EvalStatus::HardTimeout {
            prop_assert!(hard.rows.is_empty());
        } else {
            prop_assert_eq!(hard.rows.len(), full.rows.len());
        }
    }

    #[test]
    fn cached_results_are_identical(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = Arc::new(TripleStore::from_triples(store(&mut rng, 12, 3, 60)));
        let endpoint = Endpoint::local(store, EndpointConfig::default()).unwrap();
        let gp = pattern(&mut rng, 2);
        let projection: Vec<Variable> = gp.variables().into_iter().collect();
        if projection.is_empty() {
            return Ok(());
        }
        let q = SelectQuery::new(gp, projection);
        let first = endpoint.run_select(&q).unwrap();
        let second = endpoint.run_select(&q).unwrap();
        prop_assert_eq!(first, second);
        prop_assert!(endpoint.stats().cache_hits >= 1);
    }

    #[test]
    fn hall_of_fame_keeps_distinct_improving_entries(seed: u64, size in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hof = HallOfFame::new(size);
        let mut best: Option<FitnessTuple> = None;
        for _ in 0..6 {
            let batch: Vec<Individual> = (0..rng.gen_range(1..6))
                .map(|_| {
                    let len = rng.gen_range(1..3);
                    let mut ind = Individual::new(pattern(&mut rng, len));
                    ind.fitness = Some(FitnessTuple {
                        score: rng.gen_range(0..5) as f64,
                        pattern_length: ind.pattern.len(),
                        ..FitnessTuple::default()
                    });
                    ind
                })
                .collect();
            hof.update(&batch);
            prop_assert!(hof.len() <= size);
            let keys: HashSet<&String> = hof.entries().iter().map(|i| &i.key).collect();
            prop_assert_eq!(keys.len(), hof.len());
            let top = hof.entries()[0].fitness.unwrap();
            if let Some(b) = best {
                prop_assert!(top >= b);
            }
            best = Some(top);
        }
    }

    #[test]
    fn reduction_keeps_a_subset(seed: u64, n in 1usize..30, k in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = rng.gen_range(1..10);
        let patterns: Vec<AcceptedPattern> = (0..n)
            .map(|i| accepted(i, pv(&mut rng, dims), rng.gen_range(2..20) as f64))
            .collect();
        let r = reduce_queries(&patterns, k);
        prop_assert!(r.representatives.len() <= k.min(n));
        prop_assert!(r.representatives.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(r.representatives.iter().all(|&i| i < n));
        prop_assert!(r.loss >= 0.0);
        prop_assert!((r.loss - precision_loss(&patterns, &r.representatives)).abs() < 1e-9);
    }

    #[test]
    fn fused_lists_are_sorted_and_distinct(seed: u64, n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patterns: Vec<AcceptedPattern> =
            (0..n).map(|i| accepted(i, vec![], rng.gen_range(2..20) as f64 / 3.0)).collect();
        let sets: Vec<BTreeSet<Term>> = (0..n)
            .map(|_| (0..rng.gen_range(1..5)).map(|_| iri(&format!("t{}", rng.gen_range(0..8)))).collect())
            .collect();
        let refs: Vec<&AcceptedPattern> = patterns.iter().collect();
        let fused = fuse(&iri("s"), &sets, &refs);
        let union: BTreeSet<&Term> = sets.iter().flatten().collect();
        for s in Strategy::ALL {
            let list = fused.ranking(s);
            let targets: BTreeSet<&Term> = list.iter().map(|(t, _)| t).collect();
            prop_assert_eq!(targets.len(), list.len());
            prop_assert_eq!(&targets, &union);
            for w in list.windows(2) {
                let (a, b) = ((w[0].1 * 1e9).round(), (w[1].1 * 1e9).round());
                prop_assert!(a > b || (a == b && w[0].0 < w[1].0));
            }
        }
    }

    #[test]
    fn split_partitions_rows(n in 0usize..500, ratio in 0.0f64..=1.0, seed: u64) {
        let s = split(n, ratio, seed);
        prop_assert_eq!(s.test.len(), (ratio * n as f64).floor() as usize);
        let train: BTreeSet<usize> = s.train.iter().copied().collect();
        let test: BTreeSet<usize> = s.test.iter().copied().collect();
        prop_assert!(train.is_disjoint(&test));
        prop_assert_eq!(train.len() + test.len(), n);
        prop_assert!(train.union(&test).copied().eq(0..n));
    }

    #[test]
    fn recall_grows_with_k(ranks in prop::collection::vec(prop::option::of(1usize..15), 0..40)) {
        let m = metrics(&ranks);
        prop_assert!(m.recall_at_k.windows(2).all(|w| w[0] <= w[1]));
        for v in m.recall_at_k.iter().chain([&m.map, &m.ndcg]) {
            prop_assert!((0.0..=1.0).contains(v));
        }
        prop_assert!(m.map <= m.ndcg + 1e-12);
    }
}

#[test]
fn ledger_survives_serialization() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ledger = CoverageLedger::new(20);
    ledger.update([pv(&mut rng, 20).as_slice(), pv(&mut rng, 20).as_slice()]);
    let text = serde_json::to_string(&ledger).unwrap();
    let back: CoverageLedger = serde_json::from_str(&text).unwrap();
    assert_eq!(back, ledger);
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
}
