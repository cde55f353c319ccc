//! SPARQL basic graph patterns and their evaluation over a local store.

mod eval;
mod sparql;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rdf::{Node, Parser, RdfError, Term};

pub use eval::{ask, join_plan, select, Clock, EvalOptions, EvalResult, EvalStatus};
pub use sparql::{ask_query_text, select_query_text};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BgpError {
    #[error("degenerate query: pattern has no triples and no VALUES table")]
    Degenerate,
    #[error("projected variable ?{0} occurs neither in the pattern nor in VALUES")]
    UnboundProjection(String),
    #[error("VALUES row has {got} entries, expected {expected}")]
    ValuesArity { expected: usize, got: usize },
    #[error("variable ?{0} appears twice in the VALUES header")]
    DuplicateValuesVar(String),
    #[error("invalid triple pattern: {0}")]
    InvalidPattern(String),
    #[error(transparent)]
    Parse(#[from] RdfError),
}

pub const SOURCE: &str = "source";
pub const TARGET: &str = "target";

/// A SPARQL variable, stored without its `?` sigil.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Variable(String);

impl Variable {
    pub fn new(name: impl Into<String>) -> Variable {
        let name = name.into();
        Variable(name.strip_prefix('?').map(str::to_string).unwrap_or(name))
    }

    pub fn source() -> Variable {
        Variable(SOURCE.to_string())
    }

    pub fn target() -> Variable {
        Variable(TARGET.to_string())
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    /// `?source` and `?target` carry the learning task's meaning and are
    /// never renamed, merged or instantiated.
    pub fn is_reserved(&self) -> bool {
        self.0 == SOURCE || self.0 == TARGET
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternTerm {
    Var(Variable),
    Term(Term),
}

impl PatternTerm {
    pub fn var(name: &str) -> PatternTerm {
        PatternTerm::Var(Variable::new(name))
    }

    pub fn iri(iri: &str) -> PatternTerm {
        PatternTerm::Term(Term::Iri(iri.to_string()))
    }

    pub fn as_var(&self) -> Option<&Variable> {
        match self {
            PatternTerm::Var(v) => Some(v),
            PatternTerm::Term(_) => None,
        }
    }

    pub fn as_term(&self) -> Option<&Term> {
        match self {
            PatternTerm::Term(t) => Some(t),
            PatternTerm::Var(_) => None,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, PatternTerm::Var(_))
    }
}

impl fmt::Display for PatternTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternTerm::Var(v) => v.fmt(f),
            PatternTerm::Term(t) => t.fmt(f),
        }
    }
}

impl From<Variable> for PatternTerm {
    fn from(v: Variable) -> Self {
        PatternTerm::Var(v)
    }
}

impl From<Term> for PatternTerm {
    fn from(t: Term) -> Self {
        PatternTerm::Term(t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn new(
        subject: impl Into<PatternTerm>,
        predicate: impl Into<PatternTerm>,
        object: impl Into<PatternTerm>,
    ) -> Result<TriplePattern, BgpError> {
        let t = TriplePattern {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<(), BgpError> {
        if matches!(&self.subject, PatternTerm::Term(t) if t.is_literal()) {
            return Err(BgpError::InvalidPattern(format!(
                "literal subject in {self}"
            )));
        }
        if matches!(&self.predicate, PatternTerm::Term(t) if !t.is_iri()) {
            return Err(BgpError::InvalidPattern(format!(
                "non-IRI predicate in {self}"
            )));
        }
        Ok(())
    }

    pub fn terms(&self) -> [&PatternTerm; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    pub fn terms_mut(&mut self) -> [&mut PatternTerm; 3] {
        [&mut self.subject, &mut self.predicate, &mut self.object]
    }

    pub fn variables(&self) -> impl Iterator<Item = &Variable> {
        self.terms().into_iter().filter_map(PatternTerm::as_var)
    }

    pub fn mentions(&self, v: &Variable) -> bool {
        self.variables().any(|x| x == v)
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

/// Assignment of variables to terms.
pub type Binding = BTreeMap<Variable, Term>;

/// A VALUES table: a header of variables and rows of bound terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ValuesTable {
    pub vars: Vec<Variable>,
    pub rows: Vec<Vec<Term>>,
}

impl ValuesTable {
    pub fn new(vars: Vec<Variable>) -> ValuesTable {
        ValuesTable {
            vars,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Term>) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn pairs(pairs: impl IntoIterator<Item = (Term, Term)>) -> ValuesTable {
        ValuesTable {
            vars: vec![Variable::source(), Variable::target()],
            rows: pairs.into_iter().map(|(s, t)| vec![s, t]).collect(),
        }
    }

    pub fn single(var: Variable, terms: impl IntoIterator<Item = Term>) -> ValuesTable {
        ValuesTable {
            vars: vec![var],
            rows: terms.into_iter().map(|t| vec![t]).collect(),
        }
    }

    /// Splits the rows into consecutive chunks of at most `size` rows.
    pub fn chunks(&self, size: usize) -> Vec<ValuesTable> {
        self.rows
            .chunks(size.max(1))
            .map(|c| ValuesTable {
                vars: self.vars.clone(),
                rows: c.to_vec(),
            })
            .collect()
    }

    fn validate(&self) -> Result<(), BgpError> {
        let mut seen = BTreeSet::new();
        for v in &self.vars {
            if !seen.insert(v) {
                return Err(BgpError::DuplicateValuesVar(v.name().to_string()));
            }
        }
        for r in &self.rows {
            if r.len() != self.vars.len() {
                return Err(BgpError::ValuesArity {
                    expected: self.vars.len(),
                    got: r.len(),
                });
            }
        }
        Ok(())
    }
}

/// A set of triple patterns; duplicates collapse and iteration order is
/// the total order on triple patterns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct GraphPattern {
    triples: BTreeSet<TriplePattern>,
}

impl GraphPattern {
    pub fn new(triples: impl IntoIterator<Item = TriplePattern>) -> GraphPattern {
        GraphPattern {
            triples: triples.into_iter().collect(),
        }
    }

    /// Parses triple patterns in Turtle-like syntax (`?x <p> ?y . ...`).
    /// Blank node labels become variables.
    pub fn parse(text: &str) -> Result<GraphPattern, BgpError> {
        Self::parse_with_prefixes(text, &HashMap::new())
    }

    pub fn parse_with_prefixes(
        text: &str,
        prefixes: &HashMap<String, String>,
    ) -> Result<GraphPattern, BgpError> {
        let mut parser = Parser::new(text).with_variables().with_prefixes(prefixes);
        let mut triples = BTreeSet::new();
        let to_pt = |n: Node| match n {
            Node::Var(v) => PatternTerm::Var(Variable::new(v)),
            Node::Term(Term::BlankNode(b)) => PatternTerm::Var(Variable::new(format!("_{b}"))),
            Node::Term(t) => PatternTerm::Term(t),
        };
        while let Some(stmt) = parser.statement(true)? {
            for [s, p, o] in stmt {
                triples.insert(TriplePattern::new(to_pt(s), to_pt(p), to_pt(o))?);
            }
        }
        Ok(GraphPattern { triples })
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> impl Iterator<Item = &TriplePattern> + Clone {
        self.triples.iter()
    }

    pub fn contains(&self, t: &TriplePattern) -> bool {
        self.triples.contains(t)
    }

    pub fn insert(&mut self, t: TriplePattern) -> bool {
        self.triples.insert(t)
    }

    pub fn remove(&mut self, t: &TriplePattern) -> bool {
        self.triples.remove(t)
    }

    pub fn variables(&self) -> BTreeSet<Variable> {
        self.triples
            .iter()
            .flat_map(|t| t.variables().cloned())
            .collect()
    }

    pub fn var_count(&self) -> usize {
        self.variables().len()
    }

    pub fn mentions(&self, v: &Variable) -> bool {
        self.triples.iter().any(|t| t.mentions(v))
    }

    /// Number of slot occurrences of `v` over all triples.
    pub fn occurrences(&self, v: &Variable) -> usize {
        self.triples
            .iter()
            .map(|t| t.variables().filter(|x| *x == v).count())
            .sum()
    }

    pub fn is_complete(&self) -> bool {
        self.mentions(&Variable::source()) && self.mentions(&Variable::target())
    }

    /// Connectivity of the undirected graph whose vertices are the subject
    /// and object nodes, with each triple an s-o edge and a predicate
    /// variable attached to its triple's edge.
    pub fn is_connected(&self) -> bool {
        if self.triples.is_empty() {
            return false;
        }
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut index: HashMap<&PatternTerm, usize> = HashMap::new();
        for t in &self.triples {
            let mut vertices = vec![&t.subject, &t.object];
            if t.predicate.is_var() {
                vertices.push(&t.predicate);
            }
            for v in vertices {
                let n = index.len();
                index.entry(v).or_insert(n);
            }
        }
        let mut parent: Vec<usize> = (0..index.len()).collect();
        for t in &self.triples {
            let o = index[&t.object];
            let mut others = vec![index[&t.subject]];
            if t.predicate.is_var() {
                others.push(index[&t.predicate]);
            }
            for x in others {
                let (a, b) = (find(&mut parent, x), find(&mut parent, o));
                parent[a] = b;
            }
        }
        let root = find(&mut parent, 0);
        (0..parent.len()).all(|i| find(&mut parent, i) == root)
    }

    /// Applies a binding: bound variables are substituted, others kept.
    /// Substitutions that would produce an invalid triple (a literal
    /// subject, a non-IRI predicate) are an error.
    pub fn bind(&self, binding: &Binding) -> Result<GraphPattern, BgpError> {
        let mut out = BTreeSet::new();
        for t in &self.triples {
            let mut t = t.clone();
            for slot in t.terms_mut() {
                if let PatternTerm::Var(v) = slot {
                    if let Some(term) = binding.get(v) {
                        *slot = PatternTerm::Term(term.clone());
                    }
                }
            }
            t.validate()?;
            out.insert(t);
        }
        Ok(GraphPattern { triples: out })
    }

    /// Renames every occurrence of `from` to `to`.
    pub fn rename(&self, from: &Variable, to: &Variable) -> GraphPattern {
        self.map_terms(|pt| match pt {
            PatternTerm::Var(v) if v == from => PatternTerm::Var(to.clone()),
            other => other.clone(),
        })
    }

    pub fn map_terms(&self, mut f: impl FnMut(&PatternTerm) -> PatternTerm) -> GraphPattern {
        GraphPattern {
            triples: self
                .triples
                .iter()
                .map(|t| TriplePattern {
                    subject: f(&t.subject),
                    predicate: f(&t.predicate),
                    object: f(&t.object),
                })
                .collect(),
        }
    }

    /// A variable name not used in this pattern, of the form `{prefix}{n}`
    /// with the smallest such `n`.
    pub fn fresh_var(&self, prefix: &str) -> Variable {
        self.fresh_var_avoiding(prefix, &BTreeSet::new())
    }

    pub fn fresh_var_avoiding(&self, prefix: &str, avoid: &BTreeSet<Variable>) -> Variable {
        let used = self.variables();
        (0..)
            .map(|n| Variable::new(format!("{prefix}{n}")))
            .find(|v| !used.contains(v) && !avoid.contains(v) && !v.is_reserved())
            .expect("unbounded range")
    }

    /// Subject and object nodes, deduplicated.
    pub fn nodes(&self) -> BTreeSet<PatternTerm> {
        self.triples
            .iter()
            .flat_map(|t| [t.subject.clone(), t.object.clone()])
            .collect()
    }

    /// Triple patterns one per line, in set order.
    pub fn to_text(&self) -> String {
        self.triples
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl fmt::Display for GraphPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.triples.iter().map(|t| t.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

impl FromIterator<TriplePattern> for GraphPattern {
    fn from_iter<I: IntoIterator<Item = TriplePattern>>(iter: I) -> Self {
        GraphPattern::new(iter)
    }
}

impl Serialize for GraphPattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_text())
    }
}

impl<'de> Deserialize<'de> for GraphPattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        GraphPattern::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// A SELECT DISTINCT query over a basic graph pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelectQuery {
    pub pattern: GraphPattern,
    pub projection: Vec<Variable>,
    pub values: Option<ValuesTable>,
    pub limit: Option<usize>,
}

impl SelectQuery {
    pub fn new(pattern: GraphPattern, projection: Vec<Variable>) -> SelectQuery {
        SelectQuery {
            pattern,
            projection,
            values: None,
            limit: None,
        }
    }

    pub fn with_values(mut self, values: ValuesTable) -> SelectQuery {
        self.values = Some(values);
        self
    }

    pub fn with_limit(mut self, limit: Option<usize>) -> SelectQuery {
        self.limit = limit;
        self
    }
}
