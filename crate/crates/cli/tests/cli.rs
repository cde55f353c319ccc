use std::path::Path;
use std::process::{Command, Output};

use gplearn::bgp::{EvalStatus, GraphPattern};
use gplearn::canon::canonical_key;
use gplearn::evolution::{pattern_sparql, AcceptedPattern};
use gplearn::fitness::{FitnessTuple, PatternEvaluation};
use gplearn::synth::{planted, PlantedConfig};
use gplearn_cli::output::strip_timings;
use serde_json::Value;

const SMALL: &[&str] = &["population_size=60", "max_generations=6", "max_runs=2"];

fn gplearn(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gplearn"));
    cmd.args(args).env_remove("GPLEARN_ENDPOINT");
    cmd.output().expect("binary runs")
}

fn with_set(mut args: Vec<String>, sets: &[&str]) -> Vec<String> {
    for s in sets {
        args.push("--set".into());
        args.push(s.to_string());
    }
    args
}

fn run(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    gplearn(&refs)
}

fn fixture(dir: &Path, seed: u64) -> (String, String) {
    let p = planted(&PlantedConfig {
        seed,
        ..PlantedConfig::default()
    });
    let store = dir.join("graph.nt");
    let gt = dir.join("gt.tsv");
    std::fs::write(&store, p.to_ntriples()).unwrap();
    std::fs::write(&gt, format!("# planted relation\n{}", p.gt_tsv())).unwrap();
    (store.display().to_string(), gt.display().to_string())
}

fn learn_args(store: &str, gt: &str, out: &Path) -> Vec<String> {
    let base = [
        "learn",
        "--store",
        store,
        "--gt",
        gt,
        "--out",
        &out.display().to_string(),
    ]
    .map(String::from)
    .to_vec();
    with_set(base, SMALL)
}

fn stripped_json(dir: &Path) -> Vec<(String, Value)> {
    let mut files = Vec::new();
    for entry in walk(dir) {
        if entry.extension().is_some_and(|e| e == "json") {
            let mut v: Value =
                serde_json::from_str(&std::fs::read_to_string(&entry).unwrap()).unwrap();
            strip_timings(&mut v);
            files.push((entry.strip_prefix(dir).unwrap().display().to_string(), v));
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn learn_is_reproducible_and_finds_generator() {
    let dir = tempfile::tempdir().unwrap();
    let (store, gt) = fixture(dir.path(), 2);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&learn_args(&store, &gt, out));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ja, jb) = (stripped_json(&a), stripped_json(&b));
    assert!(
        ja.iter().any(|(n, _)| n == "patterns.json")
            && ja.iter().any(|(n, _)| n.starts_with("runs"))
    );
    assert_eq!(ja, jb);
    assert_eq!(
        std::fs::read(a.join("report.html")).unwrap(),
        std::fs::read(b.join("report.html")).unwrap()
    );

    let generator = canonical_key(
        &planted(&PlantedConfig {
            seed: 2,
            ..PlantedConfig::default()
        })
        .generators[0],
    );
    let patterns: Vec<AcceptedPattern> =
        serde_json::from_str(&std::fs::read_to_string(a.join("patterns.json")).unwrap()).unwrap();
    assert!(patterns.iter().any(|p| p.key == generator && p.run == 1));
}

#[test]
fn report_cells_match_run_log() {
    let dir = tempfile::tempdir().unwrap();
    let (store, gt) = fixture(dir.path(), 3);
    let out = dir.path().join("out");
    assert!(run(&learn_args(&store, &gt, &out)).status.success());
    let html = std::fs::read_to_string(out.join("report.html")).unwrap();
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();

    // cells in document order, grouped by grid
    let mut grids: Vec<(String, Vec<String>)> = Vec::new();
    for line in html.lines() {
        if let Some(rest) = line.split("class=\"grid\" id=\"").nth(1) {
            grids.push((rest.split('"').next().unwrap().to_string(), Vec::new()));
        }
        if let Some(rest) = line.split("data-precision=\"").nth(1) {
            grids
                .last_mut()
                .unwrap()
                .1
                .push(rest.split('"').next().unwrap().to_string());
        }
    }
    let cells = |id: &str| -> Vec<String> {
        grids
            .iter()
            .find(|g| g.0 == id)
            .unwrap_or_else(|| panic!("{id}"))
            .1
            .clone()
    };
    let as_text = |v: &Value| -> Vec<String> {
        v.as_array()
            .unwrap()
            .iter()
            .map(|x| x.to_string())
            .collect()
    };

    assert_eq!(cells("accumulated"), as_text(&report["accumulated"]));
    let log: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("runs/run-001.json")).unwrap())
            .unwrap();
    let accepted = log["accepted"].as_array().unwrap();
    assert!(!accepted.is_empty());
    for (i, a) in accepted.iter().enumerate() {
        assert_eq!(
            cells(&format!("run-1-accepted-{i}")),
            as_text(&a["evaluation"]["pv"])
        );
    }
    let generation = &log["generations"][0];
    for (i, r) in generation["best"].as_array().unwrap().iter().enumerate() {
        assert_eq!(
            cells(&format!("run-1-gen-{}-{i}", generation["generation"])),
            as_text(&r["pv"])
        );
    }
}

#[test]
fn resume_continues_at_next_run() {
    let dir = tempfile::tempdir().unwrap();
    let (store, gt) = fixture(dir.path(), 1);
    let out = dir.path().join("out");
    let once = with_set(
        learn_args(&store, &gt, &out),
        &["max_runs=1", "min_remains=0"],
    );
    assert!(run(&once).status.success());
    let state: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("state.json")).unwrap()).unwrap();
    assert_eq!(state["next_run"], 2);

    let mut again = with_set(
        learn_args(&store, &gt, &out),
        &["max_runs=2", "min_remains=0"],
    );
    again.push("--resume".into());
    let o = run(&again);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("runs/run-001.json").exists() && out.join("runs/run-002.json").exists());
    let state: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("state.json")).unwrap()).unwrap();
    assert_eq!(state["next_run"], 3);
    let log2: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("runs/run-002.json")).unwrap())
            .unwrap();
    let log1: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("runs/run-001.json")).unwrap())
            .unwrap();
    assert_eq!(log2["remains_before"], log1["remains_after"]);
}

#[test]
fn ground_truth_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (store, _) = fixture(dir.path(), 1);
    let empty = dir.path().join("empty.tsv");
    std::fs::write(&empty, "# nothing\n").unwrap();
    let out = dir.path().join("out").display().to_string();
    let o = gplearn(&[
        "learn",
        "--store",
        &store,
        "--gt",
        &empty.display().to_string(),
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.tsv");
    std::fs::write(
        &bad,
        "<http://e/a>\t<http://e/b>\n<http://e/a>\tnot an iri\n",
    )
    .unwrap();
    let o = gplearn(&[
        "learn",
        "--store",
        &store,
        "--gt",
        &bad.display().to_string(),
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn unreachable_endpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let (_, gt) = fixture(dir.path(), 1);
    let out = dir.path().join("out").display().to_string();
    let o = gplearn(&[
        "learn",
        "--endpoint",
        "http://127.0.0.1:9/sparql",
        "--gt",
        &gt,
        "--out",
        &out,
        "--set",
        "endpoint.retries=0",
        "--set",
        "endpoint.hard_timeout=2",
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn capital_pattern(text: &str) -> AcceptedPattern {
    let pattern = GraphPattern::parse(text).unwrap();
    AcceptedPattern {
        run: 1,
        sparql: pattern_sparql(&pattern),
        key: canonical_key(&pattern),
        pattern,
        fitness: FitnessTuple::default(),
        evaluation: PatternEvaluation {
            pv: vec![1.0; 3],
            covered: vec![true; 3],
            result_lens: vec![1; 3],
            recall: 1.0,
            precision: 1.0,
            status: EvalStatus::Complete,
        },
    }
}

#[test]
fn predict_ranks_fixture_targets() {
    let dir = tempfile::tempdir().unwrap();
    let ex = "http://example.org/";
    let store = dir.path().join("capitals.nt");
    let mut nt = String::new();
    for (c, k) in [
        ("Berlin", "Germany"),
        ("Paris", "France"),
        ("Rome", "Italy"),
    ] {
        nt += &format!(
            "<{ex}{c}> <{ex}capitalOf> <{ex}{k}> .\n<{ex}{c}> <{ex}country> <{ex}{k}> .\n"
        );
    }
    std::fs::write(&store, nt).unwrap();
    let patterns = dir.path().join("patterns.json");
    let ps = vec![
        capital_pattern(&format!("?source <{ex}country> ?target")),
        capital_pattern(&format!("?source <{ex}capitalOf> ?target")),
    ];
    std::fs::write(&patterns, serde_json::to_string(&ps).unwrap()).unwrap();
    let sources = dir.path().join("sources.txt");
    std::fs::write(
        &sources,
        format!("@prefix : <{ex}> .\n:Berlin\n:Atlantis\n"),
    )
    .unwrap();
    let (store, patterns, sources) = (
        store.display().to_string(),
        patterns.display().to_string(),
        sources.display().to_string(),
    );

    let o = gplearn(&[
        "predict",
        "--store",
        &store,
        "--patterns",
        &patterns,
        "--sources",
        &sources,
        "--strategy",
        "target_occs",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let berlin = &v["predictions"][0]["rankings"]["target_occs"];
    assert_eq!(berlin[0][0], format!("<{ex}Germany>"));
    assert_eq!(berlin[0][1], 2.0);
    assert_eq!(berlin.as_array().unwrap().len(), 1);
    assert_eq!(
        v["predictions"][1]["rankings"]["target_occs"],
        serde_json::json!([])
    );

    let o = gplearn(&[
        "predict",
        "--store",
        &store,
        "--patterns",
        &patterns,
        "--sources",
        &sources,
        "-k",
        "1",
    ]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(
        v["reduction"]["representatives"].as_array().unwrap().len(),
        1
    );
    assert_eq!(
        v["predictions"][0]["rankings"]["scores"][0][0],
        format!("<{ex}Germany>")
    );
}

#[test]
fn evaluate_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let (store, gt) = fixture(dir.path(), 5);
    let out = dir.path().join("eval.json").display().to_string();
    let args = with_set(
        [
            "evaluate",
            "--store",
            &store,
            "--gt",
            &gt,
            "--ratio",
            "0.2",
            "--baselines",
            "--out",
            &out,
        ]
        .map(String::from)
        .to_vec(),
        SMALL,
    );
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(
        table.contains("Recall@10")
            && table.contains("pagerank bidi")
            && table.contains("gp precisions")
    );
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["split"]["test"].as_array().unwrap().len(), 6);
}
