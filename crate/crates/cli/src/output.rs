//! On-disk layout of a learning session:
//!
//! ```text
//! out/config.json      configuration echo
//! out/gt.json          ground truth pairs
//! out/state.json       resumable state (ledger, accepted patterns)
//! out/runs/run-NNN.json one log per run
//! out/patterns.json    final accepted patterns
//! out/report.json, out/report.html
//! ```
//!
//! Wall-clock data only appears under `timings` keys, which
//! [`strip_timings`] removes for comparisons.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use gplearn::evolution::{AcceptedPattern, LearnState, RunLog};
use gplearn::fitness::GroundTruth;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix_s: f64,
    pub elapsed_s: f64,
}

impl Timings {
    pub fn since(start: SystemTime) -> Timings {
        Timings {
            started_unix_s: start
                .duration_since(UNIX_EPOCH)
                .map_or(0.0, |d| d.as_secs_f64()),
            elapsed_s: start.elapsed().map_or(0.0, |d| d.as_secs_f64()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    #[serde(flatten)]
    pub log: RunLog,
    pub timings: Timings,
}

pub struct SessionDir {
    pub root: PathBuf,
}

impl SessionDir {
    pub fn new(root: impl Into<PathBuf>) -> SessionDir {
        SessionDir { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }
    pub fn gt(&self) -> PathBuf {
        self.root.join("gt.json")
    }
    pub fn state(&self) -> PathBuf {
        self.root.join("state.json")
    }
    pub fn patterns(&self) -> PathBuf {
        self.root.join("patterns.json")
    }
    pub fn runs(&self) -> PathBuf {
        self.root.join("runs")
    }
    pub fn run(&self, run: usize) -> PathBuf {
        self.runs().join(format!("run-{run:03}.json"))
    }

    pub fn read_runs(&self) -> Result<Vec<RunFile>> {
        let mut paths: Vec<PathBuf> = match std::fs::read_dir(self.runs()) {
            Ok(entries) => entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect(),
            Err(_) => Vec::new(),
        };
        paths.sort();
        paths.iter().map(|p| read_json(p)).collect()
    }

    pub fn read_state(&self) -> Result<LearnState> {
        read_json(&self.state())
    }

    pub fn read_gt(&self) -> Result<GroundTruth> {
        read_json(&self.gt())
    }

    pub fn read_patterns(&self) -> Result<Vec<AcceptedPattern>> {
        read_json(&self.patterns())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    // write then rename so an interrupted session never leaves half a file
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Removes every `timings` member, recursively.
pub fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("timings");
            map.values_mut().for_each(strip_timings);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}
