//! Uniform query interface over a local store or a remote SPARQL endpoint,
//! with VALUES batching, an in-flight request limit and a client-side
//! cache keyed by the canonical form of the pattern.

mod remote;

use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use lru::LruCache;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bgp::{
    self, BgpError, Clock, EvalOptions, EvalResult, EvalStatus, GraphPattern, SelectQuery,
    ValuesTable, Variable,
};
use crate::canon::canonicalize;
use crate::rdf::{RdfError, Term, TripleStore};

pub use remote::{parse_sparql_json, RemoteBackend};

/// Environment variable that overrides the configured endpoint URL.
pub const ENDPOINT_ENV: &str = "GPLEARN_ENDPOINT";

#[derive(Debug, Error)]
pub enum EndpointError {
    #[error("endpoint unreachable after {attempts} attempts: {message}")]
    Unreachable { attempts: usize, message: String },
    #[error("endpoint protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Query(#[from] BgpError),
    #[error("failed to load store: {0}")]
    Store(#[from] RdfError),
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "location")]
pub enum BackendSpec {
    Local(PathBuf),
    Remote(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub backend: Option<BackendSpec>,
    /// Concurrent backend requests; unset means 1 for remote endpoints and
    /// the CPU count (at most 8) locally.
    pub max_inflight: Option<usize>,
    pub soft_timeout: f64,
    pub hard_timeout: f64,
    /// Timing source for the local engine; remote requests always use
    /// wall time.
    pub clock: Clock,
    pub cache_capacity: usize,
    /// Entry lifetime in seconds for remote backends; local results never
    /// expire.
    pub cache_ttl: f64,
    pub batch_size: usize,
    pub prediction_limit: usize,
    pub retries: usize,
    pub retry_backoff: f64,
    /// Send a `timeout` request parameter (milliseconds, soft timeout) as
    /// understood by Virtuoso, which then returns partial results.
    pub remote_timeout_param: bool,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            backend: None,
            max_inflight: None,
            soft_timeout: 2.0,
            hard_timeout: 10.0,
            clock: Clock::default(),
            cache_capacity: 100_000,
            cache_ttl: 3600.0,
            batch_size: 384,
            prediction_limit: 1024,
            retries: 3,
            retry_backoff: 0.5,
            remote_timeout_param: false,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), EndpointError> {
        if self.max_inflight == Some(0) {
            return Err(EndpointError::Config("max_inflight must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(EndpointError::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn inflight_limit(&self, remote: bool) -> usize {
        self.max_inflight.unwrap_or_else(|| {
            if remote {
                1
            } else {
                std::thread::available_parallelism().map_or(4, |n| n.get().min(8))
            }
        })
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            soft_timeout: Some(self.soft_timeout),
            hard_timeout: Some(self.hard_timeout),
            clock: self.clock,
        }
    }
}

/// Something that answers select queries. Implementations need not cache
/// or batch; the [`Endpoint`] facade does both.
pub trait Backend: Send + Sync {
    fn select(&self, query: &SelectQuery, opts: &EvalOptions) -> Result<EvalResult, EndpointError>;

    /// Whether identical queries always yield identical results.
    fn deterministic(&self) -> bool;
}

pub struct LocalBackend {
    store: Arc<TripleStore>,
}

impl LocalBackend {
    pub fn new(store: Arc<TripleStore>) -> LocalBackend {
        LocalBackend { store }
    }
}

impl Backend for LocalBackend {
    fn select(&self, query: &SelectQuery, opts: &EvalOptions) -> Result<EvalResult, EndpointError> {
        Ok(bgp::select(&self.store, query, opts)?)
    }

    fn deterministic(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointStats {
    pub backend_requests: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub max_inflight_observed: u64,
}

struct Limiter {
    max: usize,
    current: Mutex<usize>,
    cond: Condvar,
    peak: AtomicU64,
}

impl Limiter {
    fn acquire(&self) -> LimiterGuard<'_> {
        let mut n = self.current.lock().expect("limiter poisoned");
        while *n >= self.max {
            n = self.cond.wait(n).expect("limiter poisoned");
        }
        *n += 1;
        self.peak.fetch_max(*n as u64, Ordering::SeqCst);
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.current.lock().expect("limiter poisoned");
        *n -= 1;
        self.limiter.cond.notify_one();
    }
}

struct CacheEntry {
    result: EvalResult,
    inserted: Instant,
}

/// Which kind of request a cached result answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    Select,
    Coverage,
}

/// Per-pair coverage of a pattern over ground-truth pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub covered: Vec<bool>,
    pub status: EvalStatus,
    pub elapsed: f64,
}

pub struct Endpoint {
    backend: Box<dyn Backend>,
    cfg: EndpointConfig,
    cache: Option<Mutex<LruCache<String, CacheEntry>>>,
    limiter: Limiter,
    requests: AtomicU64,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Endpoint {
    pub fn new(backend: Box<dyn Backend>, cfg: EndpointConfig) -> Result<Endpoint, EndpointError> {
        cfg.validate()?;
        let cache = NonZeroUsize::new(cfg.cache_capacity).map(|cap| Mutex::new(LruCache::new(cap)));
        let max = cfg.inflight_limit(!backend.deterministic());
        Ok(Endpoint {
            backend,
            limiter: Limiter {
                max,
                current: Mutex::new(0),
                cond: Condvar::new(),
                peak: AtomicU64::new(0),
            },
            cfg,
            cache,
            requests: AtomicU64::new(0),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn local(store: Arc<TripleStore>, cfg: EndpointConfig) -> Result<Endpoint, EndpointError> {
        Endpoint::new(Box::new(LocalBackend::new(store)), cfg)
    }

    /// Builds the endpoint named by `cfg.backend`, honouring the
    /// [`ENDPOINT_ENV`] override. Remote endpoints default to a single
    /// in-flight request unless configured otherwise.
    pub fn from_config(
        cfg: &EndpointConfig,
    ) -> Result<(Endpoint, Option<Arc<TripleStore>>), EndpointError> {
        let mut cfg = cfg.clone();
        if let Ok(url) = std::env::var(ENDPOINT_ENV) {
            if !url.is_empty() {
                cfg.backend = Some(BackendSpec::Remote(url));
            }
        }
        match cfg.backend.clone() {
            Some(BackendSpec::Local(path)) => {
                let store = Arc::new(crate::rdf::load_path(&path, None)?);
                Ok((Endpoint::local(store.clone(), cfg)?, Some(store)))
            }
            Some(BackendSpec::Remote(url)) => {
                let backend = RemoteBackend::new(&url, &cfg)?;
                Ok((Endpoint::new(Box::new(backend), cfg)?, None))
            }
            None => Err(EndpointError::Config("no backend configured".into())),
        }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    pub fn stats(&self) -> EndpointStats {
        EndpointStats {
            backend_requests: self.requests.load(Ordering::SeqCst),
            cache_hits: self.hits.load(Ordering::SeqCst),
            cache_misses: self.misses.load(Ordering::SeqCst),
            max_inflight_observed: self.limiter.peak.load(Ordering::SeqCst),
        }
    }

    /// Cache key: canonical pattern key plus the query kind, projection,
    /// VALUES content (all with variables renamed canonically) and limit.
    pub fn cache_key(kind: QueryKind, q: &SelectQuery) -> String {
        let canon = canonicalize(&q.pattern);
        let name = |v: &Variable| -> String {
            match canon.mapping.get(v) {
                Some(c) => c.to_string(),
                None => format!("!{}", v.name()),
            }
        };
        let projection: Vec<String> = q.projection.iter().map(name).collect();
        let mut hasher = Sha256::new();
        if let Some(values) = &q.values {
            for v in &values.vars {
                hasher.update(name(v).as_bytes());
                hasher.update([0]);
            }
            hasher.update([1]);
            for row in &values.rows {
                for t in row {
                    hasher.update(t.to_string().as_bytes());
                    hasher.update([0]);
                }
                hasher.update([1]);
            }
        }
        let digest: String = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        format!(
            "{kind:?}|{}|{}|{}|{}|{:?}",
            canon.key,
            projection.join(" "),
            q.values.is_some(),
            digest,
            q.limit
        )
    }

    fn cache_get(&self, key: &str) -> Option<EvalResult> {
        let cache = self.cache.as_ref()?;
        let mut cache = cache.lock().expect("cache poisoned");
        let expired = {
            let e = cache.get(key)?;
            !self.backend.deterministic() && e.inserted.elapsed().as_secs_f64() > self.cfg.cache_ttl
        };
        if expired {
            cache.pop(key);
            return None;
        }
        cache.get(key).map(|e| e.result.clone())
    }

    fn cache_put(&self, key: String, result: &EvalResult) {
        if let Some(cache) = &self.cache {
            cache.lock().expect("cache poisoned").put(
                key,
                CacheEntry {
                    result: result.clone(),
                    inserted: Instant::now(),
                },
            );
        }
    }

    fn backend_select(&self, q: &SelectQuery) -> Result<EvalResult, EndpointError> {
        let _guard = self.limiter.acquire();
        self.requests.fetch_add(1, Ordering::SeqCst);
        self.backend.select(q, &self.cfg.eval_options())
    }

    fn run(&self, kind: QueryKind, q: &SelectQuery) -> Result<EvalResult, EndpointError> {
        let key = Endpoint::cache_key(kind, q);
        if let Some(mut hit) = self.cache_get(&key) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            hit.vars = q.projection.clone();
            return Ok(hit);
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let result = self.run_batched(q)?;
        self.cache_put(key, &result);
        Ok(result)
    }

    fn run_batched(&self, q: &SelectQuery) -> Result<EvalResult, EndpointError> {
        let chunks = match &q.values {
            Some(v) if v.len() > self.cfg.batch_size => v.chunks(self.cfg.batch_size),
            _ => return self.backend_select(q),
        };
        let mut merged = EvalResult::empty(q.projection.clone(), EvalStatus::Complete);
        let mut seen = std::collections::HashSet::new();
        for chunk in chunks {
            let sub = SelectQuery {
                pattern: q.pattern.clone(),
                projection: q.projection.clone(),
                values: Some(chunk),
                limit: q.limit,
            };
            let r = self.backend_select(&sub)?;
            merged.elapsed += r.elapsed;
            merged.status = merged.status.worst(r.status);
            if r.status == EvalStatus::HardTimeout {
                merged.rows.clear();
                return Ok(merged);
            }
            for row in r.rows {
                if seen.insert(row.clone()) {
                    merged.rows.push(row);
                }
            }
            if q.limit.is_some_and(|l| merged.rows.len() >= l) {
                merged.rows.truncate(q.limit.unwrap_or(usize::MAX));
                break;
            }
        }
        Ok(merged)
    }

    /// Runs a select query, batching its VALUES table and consulting the
    /// cache.
    pub fn run_select(&self, q: &SelectQuery) -> Result<EvalResult, EndpointError> {
        self.run(QueryKind::Select, q)
    }

    /// Per-pair coverage of a complete pattern, computed with one batched
    /// `SELECT ?source ?target` over a VALUES table of the pairs. On a hard
    /// timeout every pair is reported uncovered.
    pub fn run_ask_coverage(
        &self,
        gp: &GraphPattern,
        pairs: &[(Term, Term)],
    ) -> Result<Coverage, EndpointError> {
        if pairs.is_empty() {
            return Ok(Coverage {
                covered: Vec::new(),
                status: EvalStatus::Complete,
                elapsed: 0.0,
            });
        }
        let q = SelectQuery::new(gp.clone(), vec![Variable::source(), Variable::target()])
            .with_values(ValuesTable::pairs(pairs.iter().cloned()));
        let r = self.run(QueryKind::Coverage, &q)?;
        let rows: std::collections::HashSet<(&Term, &Term)> =
            r.rows.iter().map(|row| (&row[0], &row[1])).collect();
        let covered = if r.status == EvalStatus::HardTimeout {
            vec![false; pairs.len()]
        } else {
            pairs.iter().map(|(s, t)| rows.contains(&(s, t))).collect()
        };
        Ok(Coverage {
            covered,
            status: r.status,
            elapsed: r.elapsed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdf::load_ntriples;
    use std::sync::atomic::AtomicUsize;

    fn iri(s: &str) -> Term {
        Term::Iri(format!("http://ex.org/{s}"))
    }

    fn capitals() -> Arc<TripleStore> {
        let text = "\
            @prefix : <http://ex.org/> .\n\
            :Berlin :capitalOf :Germany .\n\
            :Paris :capitalOf :France .\n\
            :Rome :capitalOf :Italy .\n\
            :Berlin :locatedIn :Europe .\n";
        Arc::new(load_ntriples(text.as_bytes(), None).unwrap())
    }

    fn gp(s: &str) -> GraphPattern {
        let mut p = std::collections::HashMap::new();
        p.insert(String::new(), "http://ex.org/".to_string());
        GraphPattern::parse_with_prefixes(s, &p).unwrap()
    }

    #[test]
    fn cache_hit_on_identical_and_renamed() {
        let ep = Endpoint::local(capitals(), EndpointConfig::default()).unwrap();
        let q = SelectQuery::new(gp("?source ?v0 ?v1"), vec![Variable::new("v1")]);
        let a = ep.run_select(&q).unwrap();
        assert_eq!(ep.stats().backend_requests, 1);
        let b = ep.run_select(&q).unwrap();
        assert_eq!(ep.stats().backend_requests, 1);
        assert_eq!(a, b);
        let renamed = SelectQuery::new(gp("?source ?v1 ?v0"), vec![Variable::new("v0")]);
        assert_eq!(
            Endpoint::cache_key(QueryKind::Select, &q),
            Endpoint::cache_key(QueryKind::Select, &renamed)
        );
        let c = ep.run_select(&renamed).unwrap();
        assert_eq!(ep.stats().backend_requests, 1);
        assert_eq!(c.rows, a.rows);
        assert_eq!(c.vars, vec![Variable::new("v0")]);
    }

    #[test]
    fn coverage_vectors() {
        let ep = Endpoint::local(capitals(), EndpointConfig::default()).unwrap();
        let p = gp("?source :capitalOf ?target");
        let cov = ep
            .run_ask_coverage(
                &p,
                &[
                    (iri("Berlin"), iri("Germany")),
                    (iri("Berlin"), iri("France")),
                ],
            )
            .unwrap();
        assert_eq!(cov.covered, vec![true, false]);
        let all = ep
            .run_ask_coverage(
                &p,
                &[
                    (iri("Berlin"), iri("Germany")),
                    (iri("Paris"), iri("France")),
                    (iri("Rome"), iri("Italy")),
                ],
            )
            .unwrap();
        assert_eq!(all.covered, vec![true, true, true]);
        assert!(ep.run_ask_coverage(&p, &[]).unwrap().covered.is_empty());
    }

    struct Counting {
        inner: LocalBackend,
        calls: AtomicUsize,
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl Backend for Counting {
        fn select(&self, q: &SelectQuery, opts: &EvalOptions) -> Result<EvalResult, EndpointError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(2));
            let r = self.inner.select(q, opts);
            self.current.fetch_sub(1, Ordering::SeqCst);
            r
        }
        fn deterministic(&self) -> bool {
            true
        }
    }

    fn counting(store: Arc<TripleStore>) -> Arc<Counting> {
        Arc::new(Counting {
            inner: LocalBackend::new(store),
            calls: AtomicUsize::new(0),
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        })
    }

    impl Backend for Arc<Counting> {
        fn select(&self, q: &SelectQuery, opts: &EvalOptions) -> Result<EvalResult, EndpointError> {
            self.as_ref().select(q, opts)
        }
        fn deterministic(&self) -> bool {
            true
        }
    }

    #[test]
    fn batching_is_transparent() {
        let store = capitals();
        let backend = counting(store.clone());
        let cfg = EndpointConfig {
            batch_size: 300,
            ..EndpointConfig::default()
        };
        let ep = Endpoint::new(Box::new(backend.clone()), cfg).unwrap();
        let mut values = ValuesTable::new(vec![Variable::source(), Variable::target()]);
        let subjects = ["Berlin", "Paris", "Rome", "Nowhere"];
        for i in 0..700 {
            values.push(vec![iri(subjects[i % 4]), iri(&format!("T{i}"))]);
        }
        values.rows[5] = vec![iri("Paris"), iri("France")];
        values.rows[650] = vec![iri("Rome"), iri("Italy")];
        let q = SelectQuery::new(
            gp("?source :capitalOf ?target"),
            vec![Variable::source(), Variable::target()],
        )
        .with_values(values);
        let batched = ep.run_select(&q).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
        let whole = bgp::select(&store, &q, &EvalOptions::unlimited()).unwrap();
        assert_eq!(batched.rows, whole.rows);
        assert_eq!(batched.rows.len(), 2);
    }

    #[test]
    fn inflight_limit_respected() {
        let store = capitals();
        let backend = counting(store);
        let cfg = EndpointConfig {
            max_inflight: Some(2),
            cache_capacity: 0,
            ..EndpointConfig::default()
        };
        let ep = Endpoint::new(Box::new(backend.clone()), cfg).unwrap();
        std::thread::scope(|s| {
            for i in 0..8 {
                let ep = &ep;
                s.spawn(move || {
                    let q = SelectQuery::new(
                        gp(&format!("?source ?p{i} ?target")),
                        vec![Variable::source()],
                    );
                    ep.run_select(&q).unwrap();
                });
            }
        });
        assert_eq!(backend.calls.load(Ordering::SeqCst), 8);
        assert!(backend.peak.load(Ordering::SeqCst) <= 2);
        assert!(ep.stats().max_inflight_observed <= 2);
    }

    #[test]
    fn invalid_config() {
        let cfg = EndpointConfig {
            max_inflight: Some(0),
            ..EndpointConfig::default()
        };
        assert!(Endpoint::local(capitals(), cfg).is_err());
        let cfg = EndpointConfig {
            batch_size: 0,
            ..EndpointConfig::default()
        };
        assert!(Endpoint::local(capitals(), cfg).is_err());
    }
}
