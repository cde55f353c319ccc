use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use super::{
    is_absolute_iri, Literal, RdfError, Term, Triple, TripleStore, RDF_TYPE, XSD_BOOLEAN,
    XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER,
};

/// A parsed node: an RDF term, or a `?var` when variables are enabled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Term(Term),
    Var(String),
}

/// Cursor-based parser for N-Triples and the Turtle subset (prefixes,
/// `a`, predicate and object lists, anonymous `[]` nodes, numeric and
/// boolean shorthands). With `allow_variables` it also accepts `?x` / `$x`,
/// which is how graph patterns are read.
pub struct Parser<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
    prefixes: HashMap<String, String>,
    base: Option<url::Url>,
    allow_variables: bool,
    anon_counter: usize,
}

impl<'a> Parser<'a> {
    pub fn new(src: &'a str) -> Self {
        Parser {
            src,
            pos: 0,
            line: 1,
            col: 1,
            prefixes: HashMap::new(),
            base: None,
            allow_variables: false,
            anon_counter: 0,
        }
    }

    pub fn with_base(mut self, base: Option<&str>) -> Result<Self, RdfError> {
        self.base = match base {
            Some(b) => Some(url::Url::parse(b).map_err(|_| RdfError::InvalidIri {
                iri: b.to_string(),
                line: 0,
                column: 0,
            })?),
            None => None,
        };
        Ok(self)
    }

    pub fn with_variables(mut self) -> Self {
        self.allow_variables = true;
        self
    }

    pub fn with_prefixes(mut self, prefixes: &HashMap<String, String>) -> Self {
        self.prefixes
            .extend(prefixes.iter().map(|(k, v)| (k.clone(), v.clone())));
        self
    }

    pub fn prefixes(&self) -> &HashMap<String, String> {
        &self.prefixes
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        self.src[self.pos..].starts_with(s)
    }

    fn starts_with_keyword(&self, kw: &str) -> bool {
        let rest = &self.src[self.pos..];
        rest.len() >= kw.len()
            && rest[..kw.len()].eq_ignore_ascii_case(kw)
            && rest[kw.len()..]
                .chars()
                .next()
                .is_none_or(|c| c.is_whitespace() || c == '<')
    }

    fn err(&self, message: impl Into<String>) -> RdfError {
        RdfError::Syntax {
            line: self.line,
            column: self.col,
            message: message.into(),
        }
    }

    pub fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    pub fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.src.len()
    }

    fn expect(&mut self, c: char) -> Result<(), RdfError> {
        self.skip_ws();
        match self.peek() {
            Some(x) if x == c => {
                self.bump();
                Ok(())
            }
            Some(x) => Err(self.err(format!("expected '{c}', found '{x}'"))),
            None => Err(self.err(format!("expected '{c}', found end of input"))),
        }
    }

    /// Consumes `@prefix`, `PREFIX`, `@base` and `BASE` directives. Returns
    /// whether one was consumed.
    pub fn directive(&mut self) -> Result<bool, RdfError> {
        self.skip_ws();
        let (turtle_style, is_prefix) = if self.starts_with("@prefix") {
            (true, true)
        } else if self.starts_with("@base") {
            (true, false)
        } else if self.starts_with_keyword("PREFIX") {
            (false, true)
        } else if self.starts_with_keyword("BASE") {
            (false, false)
        } else {
            return Ok(false);
        };
        let kw_len = match (turtle_style, is_prefix) {
            (true, true) => 7,
            (true, false) => 5,
            (false, true) => 6,
            (false, false) => 4,
        };
        for _ in 0..kw_len {
            self.bump();
        }
        self.skip_ws();
        if is_prefix {
            let mut name = String::new();
            while let Some(c) = self.peek() {
                if c == ':' {
                    break;
                }
                if !is_pn_char(c) {
                    return Err(self.err(format!("invalid prefix name character '{c}'")));
                }
                name.push(c);
                self.bump();
            }
            self.expect(':')?;
            self.skip_ws();
            let iri = self.iri_ref()?;
            self.prefixes.insert(name, iri);
        } else {
            let iri = self.iri_ref()?;
            self.base = url::Url::parse(&iri).ok();
        }
        if turtle_style {
            self.expect('.')?;
        }
        Ok(true)
    }

    fn iri_ref(&mut self) -> Result<String, RdfError> {
        let (line, column) = (self.line, self.col);
        if self.peek() != Some('<') {
            return Err(self.err("expected '<'"));
        }
        self.bump();
        let mut raw = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(self.err("unterminated IRI")),
                Some('>') => break,
                Some('\\') => {
                    let c = self.unicode_escape()?;
                    raw.push(c);
                }
                Some(c) if c == ' ' || c == '<' || c == '"' => {
                    return Err(RdfError::InvalidIri {
                        iri: raw,
                        line,
                        column,
                    })
                }
                Some(c) => raw.push(c),
            }
        }
        self.resolve(raw, line, column)
    }

    fn resolve(&self, raw: String, line: usize, column: usize) -> Result<String, RdfError> {
        if is_absolute_iri(&raw) {
            return Ok(raw);
        }
        match &self.base {
            Some(base) => {
                base.join(&raw)
                    .map(|u| u.to_string())
                    .map_err(|_| RdfError::InvalidIri {
                        iri: raw,
                        line,
                        column,
                    })
            }
            None => Err(RdfError::InvalidIri {
                iri: raw,
                line,
                column,
            }),
        }
    }

    fn unicode_escape(&mut self) -> Result<char, RdfError> {
        let n = match self.bump() {
            Some('u') => 4,
            Some('U') => 8,
            _ => return Err(self.err("invalid escape in IRI")),
        };
        self.hex_char(n)
    }

    fn hex_char(&mut self, n: usize) -> Result<char, RdfError> {
        let mut v = 0u32;
        for _ in 0..n {
            let d = self
                .bump()
                .and_then(|c| c.to_digit(16))
                .ok_or_else(|| self.err("invalid hex escape"))?;
            v = v * 16 + d;
        }
        char::from_u32(v).ok_or_else(|| self.err("escape is not a valid code point"))
    }

    fn pname(&mut self) -> Result<String, RdfError> {
        let (line, column) = (self.line, self.col);
        let mut prefix = String::new();
        while let Some(c) = self.peek() {
            if c == ':' {
                break;
            }
            if !is_pn_char(c) {
                return Err(self.err(format!("unexpected character '{c}'")));
            }
            prefix.push(c);
            self.bump();
        }
        if self.peek() != Some(':') {
            return Err(self.err(format!("unexpected token '{prefix}'")));
        }
        self.bump();
        let mut local = String::new();
        while let Some(c) = self.peek() {
            if is_pn_char(c)
                || c == ':'
                || c == '%'
                || (c == '.' && self.peek_at(1).is_some_and(|n| is_pn_char(n) || n == ':'))
            {
                local.push(c);
                self.bump();
            } else if c == '\\' {
                self.bump();
                if let Some(e) = self.bump() {
                    local.push(e);
                }
            } else {
                break;
            }
        }
        let ns = self.prefixes.get(&prefix).ok_or_else(|| RdfError::Syntax {
            line,
            column,
            message: format!("undeclared prefix '{prefix}:'"),
        })?;
        let iri = format!("{ns}{local}");
        self.resolve(iri, line, column)
    }

    fn string_literal(&mut self) -> Result<String, RdfError> {
        let (line, column) = (self.line, self.col);
        let quote = self.bump().expect("caller checked quote");
        let long = self.peek() == Some(quote) && self.peek_at(1) == Some(quote);
        if long {
            self.bump();
            self.bump();
        }
        let mut out = String::new();
        loop {
            let Some(c) = self.bump() else {
                return Err(RdfError::UnterminatedLiteral { line, column });
            };
            match c {
                '\\' => {
                    let e = self
                        .bump()
                        .ok_or(RdfError::UnterminatedLiteral { line, column })?;
                    match e {
                        't' => out.push('\t'),
                        'b' => out.push('\u{8}'),
                        'n' => out.push('\n'),
                        'r' => out.push('\r'),
                        'f' => out.push('\u{c}'),
                        '"' => out.push('"'),
                        '\'' => out.push('\''),
                        '\\' => out.push('\\'),
                        'u' => out.push(self.hex_char(4)?),
                        'U' => out.push(self.hex_char(8)?),
                        other => return Err(self.err(format!("invalid escape '\\{other}'"))),
                    }
                }
                '\n' if !long => return Err(RdfError::UnterminatedLiteral { line, column }),
                c if c == quote => {
                    if !long {
                        break;
                    }
                    if self.peek() == Some(quote) && self.peek_at(1) == Some(quote) {
                        self.bump();
                        self.bump();
                        break;
                    }
                    out.push(c);
                }
                c => out.push(c),
            }
        }
        Ok(out)
    }

    fn literal(&mut self) -> Result<Term, RdfError> {
        let value = self.string_literal()?;
        if self.peek() == Some('@') {
            self.bump();
            let mut lang = String::new();
            while let Some(c) = self.peek() {
                if c.is_ascii_alphanumeric() || c == '-' {
                    lang.push(c);
                    self.bump();
                } else {
                    break;
                }
            }
            if lang.is_empty() {
                return Err(self.err("empty language tag"));
            }
            return Ok(Term::Literal(Literal {
                value,
                datatype: None,
                language: Some(lang),
            }));
        }
        if self.starts_with("^^") {
            self.bump();
            self.bump();
            let dt = if self.peek() == Some('<') {
                self.iri_ref()?
            } else {
                self.pname()?
            };
            return Ok(Term::Literal(Literal {
                value,
                datatype: Some(dt),
                language: None,
            }));
        }
        Ok(Term::literal(value))
    }

    fn numeric(&mut self) -> Result<Term, RdfError> {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            let ok = c.is_ascii_digit()
                || matches!(c, '+' | '-')
                || c == 'e'
                || c == 'E'
                || (c == '.' && self.peek_at(1).is_some_and(|n| n.is_ascii_digit()));
            if !ok {
                break;
            }
            s.push(c);
            self.bump();
        }
        let dt = if s.contains(['e', 'E']) {
            XSD_DOUBLE
        } else if s.contains('.') {
            XSD_DECIMAL
        } else {
            XSD_INTEGER
        };
        if s.is_empty() || s == "+" || s == "-" {
            return Err(self.err("invalid numeric literal"));
        }
        Ok(Term::typed_literal(s, dt))
    }

    fn blank_label(&mut self) -> Result<String, RdfError> {
        // at "_:"
        self.bump();
        self.bump();
        let mut label = String::new();
        while let Some(c) = self.peek() {
            if is_pn_char(c) || (c == '.' && self.peek_at(1).is_some_and(is_pn_char)) {
                label.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if label.is_empty() {
            return Err(self.err("empty blank node label"));
        }
        Ok(label)
    }

    fn variable(&mut self) -> Result<String, RdfError> {
        self.bump();
        let mut name = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' {
                name.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if name.is_empty() {
            return Err(self.err("empty variable name"));
        }
        Ok(name)
    }

    /// Parses one node in any position.
    pub fn node(&mut self) -> Result<Node, RdfError> {
        self.skip_ws();
        let c = self
            .peek()
            .ok_or_else(|| self.err("unexpected end of input"))?;
        match c {
            '<' => Ok(Node::Term(Term::Iri(self.iri_ref()?))),
            '"' | '\'' => Ok(Node::Term(self.literal()?)),
            '_' if self.peek_at(1) == Some(':') => {
                Ok(Node::Term(Term::BlankNode(self.blank_label()?)))
            }
            '[' => {
                self.bump();
                self.skip_ws();
                if self.peek() != Some(']') {
                    return Err(self.err("only empty anonymous nodes '[]' are supported"));
                }
                self.bump();
                self.anon_counter += 1;
                Ok(Node::Term(Term::BlankNode(format!(
                    "anon{}",
                    self.anon_counter
                ))))
            }
            '?' | '$' if self.allow_variables => Ok(Node::Var(self.variable()?)),
            '?' | '$' => Err(self.err("variables are not allowed here")),
            c if c.is_ascii_digit() || c == '+' || c == '-' || c == '.' => {
                Ok(Node::Term(self.numeric()?))
            }
            _ => {
                let rest = &self.src[self.pos..];
                for kw in ["true", "false"] {
                    if rest.starts_with(kw)
                        && !rest[kw.len()..].chars().next().is_some_and(is_pn_char)
                        && !rest[kw.len()..].starts_with(':')
                    {
                        for _ in 0..kw.len() {
                            self.bump();
                        }
                        return Ok(Node::Term(Term::typed_literal(kw, XSD_BOOLEAN)));
                    }
                }
                if rest.starts_with('a')
                    && rest[1..]
                        .chars()
                        .next()
                        .is_none_or(|n| n.is_whitespace() || n == '<' || n == '?' || n == '$')
                {
                    self.bump();
                    return Ok(Node::Term(Term::Iri(RDF_TYPE.to_string())));
                }
                Ok(Node::Term(Term::Iri(self.pname()?)))
            }
        }
    }

    /// Parses one statement (subject with predicate/object lists, ending in
    /// `.`). Directives encountered first are consumed. `terminator_optional`
    /// lets graph patterns omit the final dot.
    pub fn statement(
        &mut self,
        terminator_optional: bool,
    ) -> Result<Option<Vec<[Node; 3]>>, RdfError> {
        while self.directive()? {}
        if self.at_end() {
            return Ok(None);
        }
        let subject = self.node()?;
        let mut out = Vec::new();
        loop {
            let predicate = self.node()?;
            loop {
                let object = self.node()?;
                out.push([subject.clone(), predicate.clone(), object]);
                self.skip_ws();
                if self.peek() == Some(',') {
                    self.bump();
                } else {
                    break;
                }
            }
            self.skip_ws();
            if self.peek() == Some(';') {
                while self.peek() == Some(';') {
                    self.bump();
                    self.skip_ws();
                }
                if matches!(self.peek(), Some('.') | None) {
                    break;
                }
            } else {
                break;
            }
        }
        self.skip_ws();
        match self.peek() {
            Some('.') => {
                self.bump();
            }
            None | Some('}') if terminator_optional => {}
            Some(c) => return Err(self.err(format!("expected '.', found '{c}'"))),
            None => return Err(self.err("expected '.', found end of input")),
        }
        Ok(Some(out))
    }

    pub fn position(&self) -> (usize, usize) {
        (self.line, self.col)
    }
}

fn is_pn_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == '\u{b7}'
}

/// Parses N-Triples (or the Turtle subset) into a fresh store. Relative
/// IRIs are an error unless `base` is given or declared in the input.
pub fn load_ntriples<R: Read>(mut input: R, base: Option<&str>) -> Result<TripleStore, RdfError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let text = String::from_utf8(bytes).map_err(|e| {
        let valid = &e.as_bytes()[..e.utf8_error().valid_up_to()];
        let line = valid.iter().filter(|b| **b == b'\n').count() + 1;
        let column = valid.iter().rev().take_while(|b| **b != b'\n').count() + 1;
        RdfError::Syntax {
            line,
            column,
            message: "input is not valid UTF-8".into(),
        }
    })?;
    let mut parser = Parser::new(&text).with_base(base)?;
    let mut triples = Vec::new();
    while let Some(stmt) = parser.statement(false)? {
        for [s, p, o] in stmt {
            let (line, column) = parser.position();
            let as_term = |n: Node| match n {
                Node::Term(t) => Ok(t),
                Node::Var(v) => Err(RdfError::Syntax {
                    line,
                    column,
                    message: format!("unexpected variable ?{v}"),
                }),
            };
            let triple = Triple::new(as_term(s)?, as_term(p)?, as_term(o)?).map_err(|e| {
                RdfError::Syntax {
                    line,
                    column,
                    message: e.to_string(),
                }
            })?;
            triples.push(triple);
        }
    }
    Ok(TripleStore::from_triples(triples))
}

/// Loads a file, transparently decompressing `.gz` input.
pub fn load_path(path: &Path, base: Option<&str>) -> Result<TripleStore, RdfError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    if path.extension().is_some_and(|e| e == "gz") {
        load_ntriples(flate2::read::GzDecoder::new(reader), base)
    } else {
        load_ntriples(reader, base)
    }
}

/// Parses a single term in N-Triples syntax, or a prefixed name when
/// `prefixes` declares it.
pub fn parse_term(text: &str, prefixes: &HashMap<String, String>) -> Result<Term, RdfError> {
    let mut p = Parser::new(text).with_prefixes(prefixes);
    let node = p.node()?;
    if !p.at_end() {
        return Err(p.err("trailing input after term"));
    }
    match node {
        Node::Term(t) => Ok(t),
        Node::Var(_) => unreachable!("variables disabled"),
    }
}
