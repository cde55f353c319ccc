//! Synthetic benchmark graphs: a random graph with hub nodes and decoy
//! edges, plus one or two planted relations whose pairs form the ground
//! truth.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bgp::GraphPattern;
use crate::fitness::GroundTruth;
use crate::rdf::{Term, Triple, TripleStore, RDF_TYPE};

pub const NS: &str = "http://example.org/synth/";

/// Shape of the BGP generating the planted pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// `?source :rel ?target`
    Direct,
    /// `?source :rel ?target . ?target a :Class`
    Typed,
    /// `?source :hop1 ?x . ?x :hop2 ?target`
    Path,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub seed: u64,
    /// Ground truth size per relation.
    pub pairs: usize,
    pub shape: Shape,
    /// Plant a second relation, disjoint from the first, covering as many
    /// pairs again.
    pub second: Option<Shape>,
    pub entities: usize,
    pub hubs: usize,
    pub decoy_predicates: usize,
    /// Random decoy triples per planted triple.
    pub decoy_factor: usize,
    /// Further decoys are added until the graph has this many triples.
    pub min_triples: usize,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            seed: 1,
            pairs: 30,
            shape: Shape::Direct,
            second: None,
            entities: 400,
            hubs: 5,
            decoy_predicates: 8,
            decoy_factor: 12,
            min_triples: 1500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Planted {
    pub triples: Vec<Triple>,
    pub gt: GroundTruth,
    /// Generating pattern of each relation, in planting order.
    pub generators: Vec<GraphPattern>,
    /// Ground truth row indices produced by each generator.
    pub blocks: Vec<Vec<usize>>,
}

impl Planted {
    pub fn store(&self) -> TripleStore {
        TripleStore::from_triples(self.triples.iter().cloned())
    }

    pub fn to_ntriples(&self) -> String {
        self.triples.iter().map(|t| format!("{t}\n")).collect()
    }

    /// Ground truth in the tab-separated file format.
    pub fn gt_tsv(&self) -> String {
        self.gt
            .pairs()
            .iter()
            .map(|(s, t)| format!("{s}\t{t}\n"))
            .collect()
    }
}

fn iri(local: &str) -> Term {
    Term::Iri(format!("{NS}{local}"))
}

fn t(s: &Term, p: &Term, o: &Term) -> Triple {
    Triple {
        subject: s.clone(),
        predicate: p.clone(),
        object: o.clone(),
    }
}

fn generator(shape: Shape, tag: &str) -> GraphPattern {
    let text = match shape {
        Shape::Direct => format!("?source <{NS}{tag}rel> ?target"),
        Shape::Typed => {
            format!("?source <{NS}{tag}rel> ?target . ?target <{RDF_TYPE}> <{NS}{tag}Class>")
        }
        Shape::Path => format!("?source <{NS}{tag}hop1> ?x . ?x <{NS}{tag}hop2> ?target"),
    };
    GraphPattern::parse(&text).expect("valid generator")
}

/// Plants the relation for `sources[i] -> targets[i]` and adds
/// distractors that share its predicates but not its full shape.
fn plant(
    shape: Shape,
    tag: &str,
    sources: &[Term],
    targets: &[Term],
    pool: &[Term],
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Triple>,
) {
    let rel = iri(&format!("{tag}rel"));
    match shape {
        Shape::Direct => {
            for (s, o) in sources.iter().zip(targets) {
                out.push(t(s, &rel, o));
            }
        }
        Shape::Typed => {
            let class = iri(&format!("{tag}Class"));
            let other = iri(&format!("{tag}OtherClass"));
            let ty = Term::Iri(RDF_TYPE.to_string());
            for (s, o) in sources.iter().zip(targets) {
                out.push(t(s, &rel, o));
                out.push(t(o, &ty, &class));
                // same predicate, wrong type: excluded by the type constraint
                let decoy = pool.choose(rng).expect("nonempty pool");
                out.push(t(s, &rel, decoy));
                out.push(t(decoy, &ty, &other));
            }
        }
        Shape::Path => {
            let (h1, h2) = (iri(&format!("{tag}hop1")), iri(&format!("{tag}hop2")));
            for (i, (s, o)) in sources.iter().zip(targets).enumerate() {
                let mid = iri(&format!("{tag}mid{i}"));
                out.push(t(s, &h1, &mid));
                out.push(t(&mid, &h2, o));
            }
            for _ in 0..sources.len() / 2 {
                let a = pool.choose(rng).expect("nonempty pool");
                let b = pool.choose(rng).expect("nonempty pool");
                out.push(t(a, &h1, b));
            }
        }
    }
}

fn decoy(entities: &[Term], hubs: &[Term], preds: &[Term], rng: &mut ChaCha8Rng) -> Triple {
    let s = entities.choose(rng).expect("entities");
    let p = preds.choose(rng).expect("decoy predicates");
    let o = if rng.gen_bool(0.3) && !hubs.is_empty() {
        hubs.choose(rng).expect("hubs")
    } else {
        entities.choose(rng).expect("entities")
    };
    t(s, p, o)
}

pub fn planted(cfg: &PlantedConfig) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let relations: Vec<Shape> = std::iter::once(cfg.shape).chain(cfg.second).collect();
    let needed = 2 * cfg.pairs * relations.len() + 2 * cfg.hubs;
    let mut entities: Vec<Term> = (0..cfg.entities.max(needed))
        .map(|i| iri(&format!("e{i}")))
        .collect();
    entities.shuffle(&mut rng);
    let hubs: Vec<Term> = (0..cfg.hubs).map(|i| iri(&format!("hub{i}"))).collect();
    let decoy_preds: Vec<Term> = (0..cfg.decoy_predicates)
        .map(|i| iri(&format!("d{i}")))
        .collect();

    let mut triples = Vec::new();
    let mut pairs = Vec::new();
    let mut generators = Vec::new();
    let mut blocks = Vec::new();
    let mut cursor = 0;
    let pool: Vec<Term> = entities[needed.min(entities.len())..].to_vec();
    let pool = if pool.is_empty() {
        entities.clone()
    } else {
        pool
    };
    for (r, shape) in relations.iter().enumerate() {
        let tag = if r == 0 {
            String::new()
        } else {
            format!("r{r}")
        };
        let sources = entities[cursor..cursor + cfg.pairs].to_vec();
        let targets = entities[cursor + cfg.pairs..cursor + 2 * cfg.pairs].to_vec();
        cursor += 2 * cfg.pairs;
        let before = triples.len();
        plant(
            *shape,
            &tag,
            &sources,
            &targets,
            &pool,
            &mut rng,
            &mut triples,
        );
        let planted_count = triples.len() - before;
        // hub edges make the hubs the best-connected neighbours of every source
        for s in &sources {
            for h in hubs.choose_multiple(&mut rng, 2.min(hubs.len())) {
                triples.push(t(
                    s,
                    decoy_preds.choose(&mut rng).expect("decoy predicates"),
                    h,
                ));
            }
        }
        for _ in 0..planted_count * cfg.decoy_factor {
            triples.push(decoy(&entities, &hubs, &decoy_preds, &mut rng));
        }
        let start = pairs.len();
        pairs.extend(sources.into_iter().zip(targets));
        blocks.push((start..pairs.len()).collect());
        generators.push(generator(*shape, &tag));
    }
    while triples.len() < cfg.min_triples {
        triples.push(decoy(&entities, &hubs, &decoy_preds, &mut rng));
    }
    triples.sort();
    triples.dedup();
    Planted {
        triples,
        gt: GroundTruth::new(pairs).expect("distinct generated pairs"),
        generators,
        blocks,
    }
}
