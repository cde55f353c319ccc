//! Ground truth files: one `source<TAB>target` pair per line, `#` comment
//! lines, and optional `@prefix p: <iri> .` declarations before the first
//! pair. Terms are `<iri>`, prefixed names or bare absolute IRIs.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use gplearn::fitness::{GroundTruth, GroundTruthError};
use gplearn::rdf::{is_absolute_iri, parse_term, Term};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

/// All problems found in a ground truth file, with 1-based line numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GtFileError {
    pub source: String,
    pub rows: Vec<RowError>,
}

impl fmt::Display for GtFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid ground truth {}", self.source)?;
        for r in &self.rows {
            write!(f, "\n  line {}: {}", r.line, r.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for GtFileError {}

fn parse_prefix(line: &str) -> Option<(String, String)> {
    let rest = line
        .strip_prefix("@prefix")
        .or_else(|| line.strip_prefix("PREFIX"))
        .or_else(|| line.strip_prefix("prefix"))?;
    let rest = rest.trim().trim_end_matches('.').trim();
    let (name, iri) = rest.split_once(':')?;
    let iri = iri.trim().strip_prefix('<')?.strip_suffix('>')?;
    Some((name.trim().to_string(), iri.to_string()))
}

fn parse_field(field: &str, prefixes: &HashMap<String, String>) -> Result<Term, String> {
    let declared = field
        .split_once(':')
        .is_some_and(|(p, _)| prefixes.contains_key(p));
    let term = if field.starts_with('<')
        || declared
        || field.starts_with('"')
        || field.starts_with("_:")
    {
        parse_term(field, prefixes).map_err(|e| e.to_string())?
    } else if is_absolute_iri(field) {
        Term::Iri(field.to_string())
    } else {
        return Err(format!(
            "{field:?} is neither an absolute IRI nor a declared prefixed name"
        ));
    };
    match &term {
        Term::Iri(v) if is_absolute_iri(v) => Ok(term),
        Term::Iri(v) => Err(format!("<{v}> is not an absolute IRI")),
        _ => Err(format!("{term} is not an IRI")),
    }
}

pub fn parse_ground_truth(text: &str, source: &str) -> Result<GroundTruth, GtFileError> {
    let mut prefixes = HashMap::new();
    let mut pairs = Vec::new();
    let mut lines = Vec::new();
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((p, iri)) = parse_prefix(line) {
            if !pairs.is_empty() {
                rows.push(RowError {
                    line: i + 1,
                    message: "prefix declarations must precede the pairs".into(),
                });
            }
            prefixes.insert(p, iri);
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t')
                .map(str::trim)
                .filter(|f| !f.is_empty())
                .collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() != 2 {
            rows.push(RowError {
                line: i + 1,
                message: format!("expected 2 fields, found {}", fields.len()),
            });
            continue;
        }
        match (
            parse_field(fields[0], &prefixes),
            parse_field(fields[1], &prefixes),
        ) {
            (Ok(s), Ok(t)) => {
                pairs.push((s, t));
                lines.push(i + 1);
            }
            (Err(e), _) | (_, Err(e)) => rows.push(RowError {
                line: i + 1,
                message: e,
            }),
        }
    }
    let fail = |rows| GtFileError {
        source: source.to_string(),
        rows,
    };
    if !rows.is_empty() {
        return Err(fail(rows));
    }
    GroundTruth::new(pairs).map_err(|e| {
        let row = match e {
            GroundTruthError::Empty => RowError {
                line: 0,
                message: "no source-target pairs".into(),
            },
            GroundTruthError::NotIri { row, term } => RowError {
                line: lines[row - 1],
                message: format!("{term} is not an IRI"),
            },
            GroundTruthError::Duplicate { row, first } => RowError {
                line: lines[row - 1],
                message: format!("duplicate of line {}", lines[first - 1]),
            },
        };
        fail(vec![row])
    })
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth, GtFileError> {
    let text = std::fs::read_to_string(path).map_err(|e| GtFileError {
        source: path.display().to_string(),
        rows: vec![RowError {
            line: 0,
            message: e.to_string(),
        }],
    })?;
    parse_ground_truth(&text, &path.display().to_string())
}

/// One term per line, same syntax as ground truth fields.
pub fn parse_sources(text: &str, source: &str) -> Result<Vec<Term>, GtFileError> {
    let mut prefixes = HashMap::new();
    let mut out = Vec::new();
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((p, iri)) = parse_prefix(line) {
            prefixes.insert(p, iri);
            continue;
        }
        match parse_field(line, &prefixes) {
            Ok(t) => out.push(t),
            Err(message) => rows.push(RowError {
                line: i + 1,
                message,
            }),
        }
    }
    if rows.is_empty() {
        Ok(out)
    } else {
        Err(GtFileError {
            source: source.to_string(),
            rows,
        })
    }
}
