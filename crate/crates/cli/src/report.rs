//! Static report: per run and generation pattern tables with precision
//! coverage grids, as one self-contained HTML page plus the same data as
//! JSON. Every grid cell carries its value in a `data-precision`
//! attribute, written with the JSON number formatting.

use std::fmt::Write;

use gplearn::evolution::PatternRecord;
use gplearn::fitness::{FitnessTuple, GroundTruth};
use gplearn::rdf::Term;
use serde::{Deserialize, Serialize};

use crate::output::RunFile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRow {
    pub sparql: String,
    pub key: String,
    pub fitness: FitnessTuple,
    pub pv: Vec<f64>,
    /// Indices of ground truth pairs the pattern covers.
    pub matching: Vec<usize>,
}

impl PatternRow {
    fn new(sparql: &str, key: &str, fitness: FitnessTuple, pv: &[f64]) -> PatternRow {
        PatternRow {
            sparql: sparql.to_string(),
            key: key.to_string(),
            fitness,
            pv: pv.to_vec(),
            matching: pv
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(i, _)| i)
                .collect(),
        }
    }

    fn from_record(r: &PatternRecord) -> PatternRow {
        PatternRow::new(&r.sparql, &r.key, r.fitness, &r.pv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: usize,
    pub best: Vec<PatternRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: usize,
    pub remains_before: f64,
    pub remains_after: f64,
    pub generations: Vec<GenerationReport>,
    pub accepted: Vec<PatternRow>,
    /// Best precision per pair over the patterns accepted up to this run.
    pub accumulated: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub gt: Vec<(Term, Term)>,
    pub runs: Vec<RunReport>,
    pub accumulated: Vec<f64>,
}

impl Report {
    pub fn build(gt: &GroundTruth, runs: &[RunFile]) -> Report {
        let mut acc = vec![0.0; gt.len()];
        let runs = runs
            .iter()
            .map(|f| {
                let log = &f.log;
                let accepted: Vec<PatternRow> = log
                    .accepted
                    .iter()
                    .map(|a| PatternRow::new(&a.sparql, &a.key, a.fitness, &a.evaluation.pv))
                    .collect();
                for row in &accepted {
                    for (a, &p) in acc.iter_mut().zip(&row.pv) {
                        *a = f64::max(*a, p);
                    }
                }
                RunReport {
                    run: log.run,
                    remains_before: log.remains_before,
                    remains_after: log.remains_after,
                    generations: log
                        .generations
                        .iter()
                        .map(|g| GenerationReport {
                            generation: g.generation,
                            best: g.best.iter().map(PatternRow::from_record).collect(),
                        })
                        .collect(),
                    accepted,
                    accumulated: acc.clone(),
                }
            })
            .collect();
        Report {
            gt: gt.pairs().to_vec(),
            runs,
            accumulated: acc,
        }
    }

    pub fn pattern_count(&self) -> usize {
        self.runs.iter().map(|r| r.accepted.len()).sum()
    }

    pub fn to_html(&self) -> String {
        let mut h = String::new();
        h.push_str(
            "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Learned graph patterns</title>\n<style>\n\
             body{font-family:sans-serif;margin:2em}\n\
             table{border-collapse:collapse;margin:1em 0}\n\
             td,th{border:1px solid #ccc;padding:2px 6px;vertical-align:top;font-size:90%}\n\
             pre{margin:0;white-space:pre-wrap}\n\
             .grid{display:flex;flex-wrap:wrap;max-width:40em;gap:1px}\n\
             .cell{width:12px;height:12px;border:1px solid #ddd}\n\
             </style></head><body>\n<h1>Learned graph patterns</h1>\n",
        );
        let _ = writeln!(
            h,
            "<p>{} ground truth pairs, {} runs, {} accepted patterns.</p>",
            self.gt.len(),
            self.runs.len(),
            self.pattern_count()
        );
        if self.pattern_count() == 0 {
            h.push_str("<p class=\"empty\">No patterns were accepted.</p>\n");
        }
        h.push_str("<h2>Accumulated coverage</h2>\n");
        grid(&mut h, "accumulated", &self.accumulated, &self.gt);
        for run in &self.runs {
            let _ = writeln!(
                h,
                "<section id=\"run-{0}\"><h2>Run {0}</h2>\n<p>remains {1:.3} before, {2:.3} after</p>",
                run.run, run.remains_before, run.remains_after
            );
            h.push_str("<h3>Accepted</h3>\n");
            pattern_table(
                &mut h,
                &format!("run-{}-accepted", run.run),
                &run.accepted,
                &self.gt,
            );
            h.push_str("<h3>Coverage after this run</h3>\n");
            grid(
                &mut h,
                &format!("run-{}-accumulated", run.run),
                &run.accumulated,
                &self.gt,
            );
            for g in &run.generations {
                let _ = writeln!(h, "<details><summary>Generation {}</summary>", g.generation);
                pattern_table(
                    &mut h,
                    &format!("run-{}-gen-{}", run.run, g.generation),
                    &g.best,
                    &self.gt,
                );
                h.push_str("</details>\n");
            }
            h.push_str("</section>\n");
        }
        h.push_str("</body></html>\n");
        h
    }
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// The value as it appears in the JSON report.
pub fn json_number(v: f64) -> String {
    serde_json::to_string(&v).expect("number serializes")
}

fn grid(h: &mut String, id: &str, pv: &[f64], gt: &[(Term, Term)]) {
    let _ = writeln!(h, "<div class=\"grid\" id=\"{id}\">");
    for (i, (&p, (s, t))) in pv.iter().zip(gt).enumerate() {
        let _ = writeln!(
            h,
            "<div class=\"cell\" data-pair=\"{i}\" data-precision=\"{}\" title=\"{} {} {:.3}\" style=\"background:rgba(20,60,160,{:.3})\"></div>",
            json_number(p),
            escape(&s.to_string()),
            escape(&t.to_string()),
            p,
            p.clamp(0.0, 1.0)
        );
    }
    h.push_str("</div>\n");
}

fn pattern_table(h: &mut String, id: &str, rows: &[PatternRow], gt: &[(Term, Term)]) {
    if rows.is_empty() {
        h.push_str("<p>none</p>\n");
        return;
    }
    let _ = writeln!(
        h,
        "<table id=\"{id}\"><tr><th>#</th><th>score</th><th>gain</th><th>f1</th><th>avg result len</th>\
         <th>gt matches</th><th>length</th><th>vars</th><th>timeout</th><th>query s</th><th>SPARQL</th><th>coverage</th></tr>"
    );
    for (i, r) in rows.iter().enumerate() {
        let f = &r.fitness;
        let _ = write!(
            h,
            "<tr><td>{i}</td><td>{:.3}</td><td>{:.3}</td><td>{:.3}</td><td>{:.2}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{:.4}</td><td><pre>{}</pre>",
            f.score,
            f.gain,
            f.f1,
            f.avg_result_len,
            f.gt_matches,
            f.pattern_length,
            f.pattern_vars,
            f.timeout_penalty,
            f.query_time_s,
            escape(&r.sparql)
        );
        let matching: Vec<String> = r
            .matching
            .iter()
            .map(|&j| escape(&format!("{} {}", gt[j].0, gt[j].1)))
            .collect();
        if !matching.is_empty() {
            let _ = write!(
                h,
                "<details><summary>{} matching pairs</summary>{}</details>",
                matching.len(),
                matching.join("<br>")
            );
        }
        h.push_str("</td><td>");
        grid(h, &format!("{id}-{i}"), &r.pv, gt);
        h.push_str("</td></tr>\n");
    }
    h.push_str("</table>\n");
}
