use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::header;
use serde::Deserialize;

use super::{Backend, EndpointConfig, EndpointError};
use crate::bgp::{select_query_text, EvalOptions, EvalResult, EvalStatus, SelectQuery};
use crate::rdf::{Literal, Term};

/// SPARQL 1.1 protocol client: form-encoded POST, JSON results.
pub struct RemoteBackend {
    url: String,
    client: Client,
    retries: usize,
    backoff: f64,
    timeout_param: bool,
}

impl RemoteBackend {
    pub fn new(url: &str, cfg: &EndpointConfig) -> Result<RemoteBackend, EndpointError> {
        url::Url::parse(url)
            .map_err(|e| EndpointError::Config(format!("invalid endpoint URL {url}: {e}")))?;
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(cfg.hard_timeout.max(0.001)))
            .user_agent(concat!("gplearn/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| EndpointError::Config(e.to_string()))?;
        Ok(RemoteBackend {
            url: url.to_string(),
            client,
            retries: cfg.retries,
            backoff: cfg.retry_backoff,
            timeout_param: cfg.remote_timeout_param,
        })
    }
}

impl Backend for RemoteBackend {
    fn select(&self, query: &SelectQuery, opts: &EvalOptions) -> Result<EvalResult, EndpointError> {
        let text = select_query_text(query);
        let mut form: Vec<(&str, String)> = vec![("query", text)];
        if self.timeout_param {
            if let Some(soft) = opts.soft_timeout {
                form.push(("timeout", format!("{}", (soft * 1000.0) as u64)));
            }
        }
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let response = self
                .client
                .post(&self.url)
                .header(header::ACCEPT, "application/sparql-results+json")
                .form(&form)
                .send();
            match response {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_server_error() {
                        let mut r =
                            EvalResult::empty(query.projection.clone(), EvalStatus::HardTimeout);
                        r.elapsed = started.elapsed().as_secs_f64();
                        return Ok(r);
                    }
                    if !status.is_success() {
                        return Err(EndpointError::Protocol(format!(
                            "HTTP {status} from {}",
                            self.url
                        )));
                    }
                    // Virtuoso flags partial (anytime) results with this header
                    let partial = resp.headers().contains_key("x-sql-state");
                    let body = match resp.text() {
                        Ok(b) => b,
                        Err(e) if e.is_timeout() => {
                            let mut r = EvalResult::empty(
                                query.projection.clone(),
                                EvalStatus::HardTimeout,
                            );
                            r.elapsed = started.elapsed().as_secs_f64();
                            return Ok(r);
                        }
                        Err(e) => return Err(EndpointError::Protocol(e.to_string())),
                    };
                    let mut r = parse_sparql_json(&body, query)?;
                    r.elapsed = started.elapsed().as_secs_f64();
                    if partial {
                        r.status = EvalStatus::SoftTimeout;
                    }
                    return Ok(r);
                }
                Err(e) if e.is_timeout() => {
                    let mut r =
                        EvalResult::empty(query.projection.clone(), EvalStatus::HardTimeout);
                    r.elapsed = started.elapsed().as_secs_f64();
                    return Ok(r);
                }
                Err(e) => {
                    if attempt > self.retries {
                        return Err(EndpointError::Unreachable {
                            attempts: attempt,
                            message: e.to_string(),
                        });
                    }
                    let wait = self.backoff * 2f64.powi(attempt as i32 - 1);
                    std::thread::sleep(Duration::from_secs_f64(wait));
                }
            }
        }
    }

    fn deterministic(&self) -> bool {
        false
    }
}

#[derive(Deserialize)]
struct JsonResults {
    #[allow(dead_code)]
    head: JsonHead,
    results: Option<JsonBindings>,
    boolean: Option<bool>,
}

#[derive(Deserialize)]
struct JsonHead {
    #[serde(default)]
    #[allow(dead_code)]
    vars: Vec<String>,
}

#[derive(Deserialize)]
struct JsonBindings {
    bindings: Vec<HashMap<String, JsonTerm>>,
}

#[derive(Deserialize)]
struct JsonTerm {
    #[serde(rename = "type")]
    kind: String,
    value: String,
    #[serde(rename = "xml:lang")]
    lang: Option<String>,
    datatype: Option<String>,
}

impl JsonTerm {
    fn into_term(self) -> Result<Term, EndpointError> {
        match self.kind.as_str() {
            "uri" => Ok(Term::Iri(self.value)),
            "bnode" => Ok(Term::BlankNode(self.value)),
            "literal" | "typed-literal" => Ok(Term::Literal(Literal {
                value: self.value,
                datatype: if self.lang.is_some() {
                    None
                } else {
                    self.datatype
                },
                language: self.lang,
            })),
            other => Err(EndpointError::Protocol(format!(
                "unknown RDF term type '{other}'"
            ))),
        }
    }
}

/// Parses a SPARQL JSON results document into rows aligned with the
/// query's projection. Rows with unbound projected variables are dropped
/// and duplicates removed.
pub fn parse_sparql_json(body: &str, query: &SelectQuery) -> Result<EvalResult, EndpointError> {
    let doc: JsonResults = serde_json::from_str(body)
        .map_err(|e| EndpointError::Protocol(format!("invalid SPARQL JSON: {e}")))?;
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    if let Some(results) = doc.results {
        'rows: for mut b in results.bindings {
            let mut row = Vec::with_capacity(query.projection.len());
            for v in &query.projection {
                match b.remove(v.name()) {
                    Some(t) => row.push(t.into_term()?),
                    None => continue 'rows,
                }
            }
            if seen.insert(row.clone()) {
                rows.push(row);
            }
        }
    } else if doc.boolean == Some(true) && query.projection.is_empty() {
        rows.push(Vec::new());
    }
    Ok(EvalResult {
        vars: query.projection.clone(),
        rows,
        elapsed: 0.0,
        status: EvalStatus::Complete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgp::{GraphPattern, Variable};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    fn query() -> SelectQuery {
        SelectQuery::new(
            GraphPattern::parse("?source <http://e/p> ?target").unwrap(),
            vec![Variable::source(), Variable::target()],
        )
    }

    #[test]
    fn parses_standard_json() {
        let body = r#"{
            "head": {"vars": ["source", "target"]},
            "results": {"bindings": [
                {"source": {"type": "uri", "value": "http://e/a"},
                 "target": {"type": "literal", "value": "x", "xml:lang": "en"}},
                {"source": {"type": "uri", "value": "http://e/a"},
                 "target": {"type": "typed-literal", "value": "1",
                            "datatype": "http://www.w3.org/2001/XMLSchema#integer"}},
                {"source": {"type": "bnode", "value": "b0"}},
                {"source": {"type": "uri", "value": "http://e/a"},
                 "target": {"type": "literal", "value": "x", "xml:lang": "en"}}
            ]}
        }"#;
        let r = parse_sparql_json(body, &query()).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[0][1], Term::lang_literal("x", "en"));
        assert_eq!(
            r.rows[1][1],
            Term::typed_literal("1", "http://www.w3.org/2001/XMLSchema#integer")
        );
        assert!(parse_sparql_json("not json", &query()).is_err());
    }

    /// Minimal HTTP server answering each request with a canned response;
    /// records request bodies.
    fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut headers = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    headers.push_str(&line);
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                log.lock()
                    .unwrap()
                    .push(format!("{headers}\n{}", String::from_utf8_lossy(&buf)));
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/sparql-results+json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/sparql"), seen)
    }

    #[test]
    fn round_trip_over_http() {
        let body = r#"{"head":{"vars":["source","target"]},"results":{"bindings":[
            {"source":{"type":"uri","value":"http://e/a"},"target":{"type":"uri","value":"http://e/b"}}]}}"#;
        let (url, seen) = serve(vec![(200, body.to_string()), (503, String::new())]);
        let backend = RemoteBackend::new(&url, &EndpointConfig::default()).unwrap();
        let r = backend.select(&query(), &EvalOptions::default()).unwrap();
        assert_eq!(r.status, EvalStatus::Complete);
        assert_eq!(
            r.rows,
            vec![vec![
                Term::Iri("http://e/a".into()),
                Term::Iri("http://e/b".into())
            ]]
        );
        let req = seen.lock().unwrap()[0].clone();
        assert!(req
            .to_ascii_lowercase()
            .contains("accept: application/sparql-results+json"));
        assert!(req.contains("query=SELECT+DISTINCT+%3Fsource+%3Ftarget"));
        // 5xx is a hard timeout, not an error
        let r = backend.select(&query(), &EvalOptions::default()).unwrap();
        assert_eq!(r.status, EvalStatus::HardTimeout);
        assert!(r.rows.is_empty());
    }

    #[test]
    fn unreachable_after_retries() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let cfg = EndpointConfig {
            retries: 2,
            retry_backoff: 0.001,
            ..EndpointConfig::default()
        };
        let backend = RemoteBackend::new(&format!("http://{addr}/sparql"), &cfg).unwrap();
        match backend.select(&query(), &EvalOptions::default()) {
            Err(EndpointError::Unreachable { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
