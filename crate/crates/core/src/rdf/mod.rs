//! RDF data model, N-Triples / Turtle-subset ingestion and the indexed
//! in-memory triple store.

mod parser;
mod store;

use std::fmt;

use thiserror::Error;

pub use parser::{load_ntriples, load_path, parse_term, Node, Parser};
pub use store::{Direction, TermId, TripleStore};

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const XSD_DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";
pub const XSD_DOUBLE: &str = "http://www.w3.org/2001/XMLSchema#double";
pub const XSD_BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RdfError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid IRI <{iri}> at line {line}, column {column}")]
    InvalidIri {
        iri: String,
        line: usize,
        column: usize,
    },
    #[error("unterminated literal starting at line {line}, column {column}")]
    UnterminatedLiteral { line: usize, column: usize },
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for RdfError {
    fn from(e: std::io::Error) -> Self {
        RdfError::Io(e.to_string())
    }
}

/// An RDF node. Equality is structural over all fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(String),
    BlankNode(String),
    Literal(Literal),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub value: String,
    pub datatype: Option<String>,
    pub language: Option<String>,
}

impl Term {
    /// Builds an IRI term, checking that it is absolute.
    pub fn iri(value: impl Into<String>) -> Result<Term, RdfError> {
        let value = value.into();
        if is_absolute_iri(&value) {
            Ok(Term::Iri(value))
        } else {
            Err(RdfError::InvalidIri {
                iri: value,
                line: 0,
                column: 0,
            })
        }
    }

    pub fn blank(label: impl Into<String>) -> Term {
        Term::BlankNode(label.into())
    }

    pub fn literal(value: impl Into<String>) -> Term {
        Term::Literal(Literal {
            value: value.into(),
            datatype: None,
            language: None,
        })
    }

    pub fn typed_literal(value: impl Into<String>, datatype: impl Into<String>) -> Term {
        Term::Literal(Literal {
            value: value.into(),
            datatype: Some(datatype.into()),
            language: None,
        })
    }

    pub fn lang_literal(value: impl Into<String>, language: impl Into<String>) -> Term {
        Term::Literal(Literal {
            value: value.into(),
            datatype: None,
            language: Some(language.into()),
        })
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri(_))
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal(_))
    }

    pub fn is_blank(&self) -> bool {
        matches!(self, Term::BlankNode(_))
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(v) => Some(v),
            _ => None,
        }
    }

    /// The lexical value without any syntax decoration.
    pub fn value(&self) -> &str {
        match self {
            Term::Iri(v) | Term::BlankNode(v) => v,
            Term::Literal(l) => &l.value,
        }
    }
}

impl serde::Serialize for Term {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Term {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Term, D::Error> {
        let text = String::deserialize(d)?;
        parse_term(&text, &Default::default()).map_err(serde::de::Error::custom)
    }
}

/// N-Triples serialization; also valid SPARQL term syntax.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(v) => write!(f, "<{}>", escape_iri(v)),
            Term::BlankNode(v) => write!(f, "_:{v}"),
            Term::Literal(l) => {
                write!(f, "\"{}\"", escape_literal(&l.value))?;
                if let Some(lang) = &l.language {
                    write!(f, "@{lang}")
                } else if let Some(dt) = &l.datatype {
                    write!(f, "^^<{}>", escape_iri(dt))
                } else {
                    Ok(())
                }
            }
        }
    }
}

fn escape_iri(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    for c in v.chars() {
        match c {
            '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\' | '\u{0}'..='\u{20}' => {
                out.push_str(&format!("\\u{:04X}", c as u32))
            }
            _ => out.push(c),
        }
    }
    out
}

fn escape_literal(v: &str) -> String {
    let mut out = String::with_capacity(v.len() + 2);
    for c in v.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            _ => out.push(c),
        }
    }
    out
}

/// `scheme:rest` with a syntactically valid scheme and a non-empty rest.
pub fn is_absolute_iri(value: &str) -> bool {
    let Some(colon) = value.find(':') else {
        return false;
    };
    let scheme = &value[..colon];
    let mut chars = scheme.chars();
    let starts_alpha = chars.next().is_some_and(|c| c.is_ascii_alphabetic());
    starts_alpha
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
        && colon + 1 < value.len()
        && !value
            .chars()
            .any(|c| c.is_whitespace() || c == '<' || c == '>' || c == '"')
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Result<Triple, RdfError> {
        if subject.is_literal() {
            return Err(RdfError::InvalidTriple(format!(
                "literal {subject} in subject position"
            )));
        }
        if !predicate.is_iri() {
            return Err(RdfError::InvalidTriple(format!(
                "non-IRI predicate {predicate}"
            )));
        }
        Ok(Triple {
            subject,
            predicate,
            object,
        })
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

/// Writes triples as N-Triples, one statement per line.
pub fn write_ntriples<'a, W: std::io::Write>(
    mut out: W,
    triples: impl IntoIterator<Item = &'a Triple>,
) -> std::io::Result<()> {
    for t in triples {
        writeln!(out, "{t}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absolute_iri_check() {
        assert!(is_absolute_iri("http://example.org/a"));
        assert!(is_absolute_iri("urn:x"));
        assert!(!is_absolute_iri("s"));
        assert!(!is_absolute_iri("1http://x"));
        assert!(!is_absolute_iri("http:"));
        assert!(!is_absolute_iri(""));
    }

    #[test]
    fn literal_subject_rejected() {
        let err = Triple::new(
            Term::literal("x"),
            Term::iri("http://e/p").unwrap(),
            Term::literal("y"),
        );
        assert!(err.is_err());
        let err = Triple::new(
            Term::iri("http://e/s").unwrap(),
            Term::blank("b"),
            Term::literal("y"),
        );
        assert!(err.is_err());
    }

    #[test]
    fn display_escapes() {
        let t = Term::lang_literal("a \"b\"\n", "en");
        assert_eq!(t.to_string(), "\"a \\\"b\\\"\\n\"@en");
        let t = Term::typed_literal("1", XSD_INTEGER);
        assert_eq!(
            t.to_string(),
            "\"1\"^^<http://www.w3.org/2001/XMLSchema#integer>"
        );
    }
}
