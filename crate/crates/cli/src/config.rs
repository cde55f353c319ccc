//! Flat `key = value` configuration covering every evolution and endpoint
//! setting. Nested fields use dotted keys (`mutation.fix_var`), endpoint
//! settings are prefixed with `endpoint.`.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use gplearn::endpoint::EndpointConfig;
use gplearn::evolution::EvolutionConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    #[serde(flatten)]
    pub evolution: EvolutionConfig,
    pub endpoint: EndpointConfig,
}

impl Config {
    /// Reads an optional config file, then applies `key=value` overrides in
    /// order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
        let mut entries = Vec::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) =
                    split_entry(line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
                entries.push((k, v));
            }
        }
        for o in overrides {
            entries.push(split_entry(o)?);
        }
        Config::from_entries(&entries)
    }

    pub fn from_entries(entries: &[(String, String)]) -> Result<Config> {
        let mut value = serde_json::to_value(Config::default())?;
        for (k, v) in entries {
            set(&mut value, k, v)?;
        }
        let cfg: Config = serde_json::from_value(value).context("invalid configuration")?;
        cfg.evolution.validate()?;
        cfg.endpoint.validate()?;
        Ok(cfg)
    }

    /// Every addressable key with its current value, in `key = value` form.
    pub fn to_flat(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        flatten(
            "",
            &serde_json::to_value(self).expect("config serializes"),
            &mut out,
        );
        out
    }
}

fn split_entry(line: &str) -> Result<(String, String)> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| anyhow!("expected key = value, got {line:?}"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) if !is_leaf_object(prefix) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        _ => out.push((prefix.to_string(), render(prefix, v))),
    }
}

fn is_leaf_object(key: &str) -> bool {
    matches!(key, "endpoint.clock" | "endpoint.backend")
}

fn render(key: &str, v: &Value) -> String {
    match (key, v) {
        ("endpoint.clock", Value::Object(m)) => match m.get("seconds_per_step") {
            Some(s) => format!("steps:{s}"),
            None => "wall".into(),
        },
        ("endpoint.backend", Value::Object(m)) => m
            .get("location")
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string(),
        (_, Value::Null) => "none".into(),
        (_, Value::String(s)) => s.clone(),
        _ => v.to_string(),
    }
}

fn parse_value(key: &str, raw: &str, current: &Value) -> Result<Value> {
    if key == "endpoint.clock" {
        return match raw.split_once(':') {
            None if raw == "wall" => Ok(serde_json::json!({"kind": "wall"})),
            None if raw == "steps" => {
                Ok(serde_json::json!({"kind": "steps", "seconds_per_step": 1e-6}))
            }
            Some(("steps", s)) => {
                let s: f64 = s
                    .parse()
                    .with_context(|| format!("bad seconds per step {s:?}"))?;
                Ok(serde_json::json!({"kind": "steps", "seconds_per_step": s}))
            }
            _ => bail!("endpoint.clock must be wall, steps or steps:<seconds>"),
        };
    }
    if key == "endpoint.backend" {
        return Ok(if raw == "none" || raw.is_empty() {
            Value::Null
        } else if raw.starts_with("http://") || raw.starts_with("https://") {
            serde_json::json!({"kind": "remote", "location": raw})
        } else {
            serde_json::json!({"kind": "local", "location": raw})
        });
    }
    if raw == "none" && (current.is_null() || key == "endpoint.max_inflight") {
        return Ok(Value::Null);
    }
    match serde_json::from_str::<Value>(raw) {
        Ok(v @ (Value::Number(_) | Value::Bool(_))) => Ok(v),
        _ => Ok(Value::String(raw.to_string())),
    }
}

fn set(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let mut node = &mut *root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("unknown config key {key:?}"))?;
        let child = map
            .get_mut(*part)
            .ok_or_else(|| anyhow!("unknown config key {key:?}"))?;
        let path = parts[..=i].join(".");
        if i + 1 == parts.len() || is_leaf_object(&path) {
            if i + 1 != parts.len() {
                bail!("unknown config key {key:?}");
            }
            *child = parse_value(key, raw, child)?;
            return Ok(());
        }
        node = child;
    }
    unreachable!("split yields at least one part")
}

#[cfg(test)]
mod tests {
    use super::*;
    use gplearn::bgp::Clock;
    use gplearn::endpoint::BackendSpec;

    fn entries(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn overrides_every_level() {
        let cfg = Config::from_entries(&entries(&[
            ("population_size", "12"),
            ("mutation.fix_var", "0.5"),
            ("fitness.overfit_factor", "0.2"),
            ("parallel", "false"),
            ("endpoint.soft_timeout", "1.5"),
            ("endpoint.max_inflight", "3"),
            ("endpoint.clock", "wall"),
            ("endpoint.backend", "https://dbpedia.org/sparql"),
        ]))
        .unwrap();
        assert_eq!(cfg.evolution.population_size, 12);
        assert_eq!(cfg.evolution.mutation.fix_var, 0.5);
        assert_eq!(cfg.evolution.fitness.overfit_factor, 0.2);
        assert!(!cfg.evolution.parallel);
        assert_eq!(cfg.endpoint.soft_timeout, 1.5);
        assert_eq!(cfg.endpoint.max_inflight, Some(3));
        assert_eq!(cfg.endpoint.clock, Clock::Wall);
        assert_eq!(
            cfg.endpoint.backend,
            Some(BackendSpec::Remote("https://dbpedia.org/sparql".into()))
        );
    }

    #[test]
    fn flat_round_trip() {
        let mut cfg = Config::default();
        cfg.endpoint.max_inflight = Some(2);
        cfg.endpoint.clock = Clock::Steps {
            seconds_per_step: 2e-6,
        };
        cfg.endpoint.backend = Some(BackendSpec::Local("data/g.nt".into()));
        cfg.evolution.seed = 9;
        let flat = cfg.to_flat();
        assert!(flat.iter().any(|(k, _)| k == "mutation.simplify"));
        assert_eq!(Config::from_entries(&flat).unwrap(), cfg);
        assert_eq!(
            Config::from_entries(&Config::default().to_flat()).unwrap(),
            Config::default()
        );
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(Config::from_entries(&entries(&[("populaton_size", "3")])).is_err());
        assert!(Config::from_entries(&entries(&[("mutation", "3")])).is_err());
        assert!(Config::from_entries(&entries(&[("population_size", "many")])).is_err());
        assert!(Config::from_entries(&entries(&[("endpoint.clock.kind", "wall")])).is_err());
        assert!(Config::from_entries(&entries(&[("endpoint.max_inflight", "0")])).is_err());
    }

    #[test]
    fn file_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# small run\npopulation_size = 20\n\nseed=4\n").unwrap();
        let cfg = Config::load(Some(&path), &["seed=5".into()]).unwrap();
        assert_eq!((cfg.evolution.population_size, cfg.evolution.seed), (20, 5));
    }
}
