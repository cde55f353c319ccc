use std::fmt::Write;

use super::{GraphPattern, SelectQuery, ValuesTable};

fn write_values(out: &mut String, values: &ValuesTable) {
    let header: Vec<String> = values.vars.iter().map(|v| v.to_string()).collect();
    if values.vars.len() == 1 {
        let _ = writeln!(out, "  VALUES {} {{", header[0]);
        for row in &values.rows {
            let _ = writeln!(out, "    {}", row[0]);
        }
    } else {
        let _ = writeln!(out, "  VALUES ({}) {{", header.join(" "));
        for row in &values.rows {
            let cells: Vec<String> = row.iter().map(|t| t.to_string()).collect();
            let _ = writeln!(out, "    ({})", cells.join(" "));
        }
    }
    out.push_str("  }\n");
}

fn write_body(out: &mut String, gp: &GraphPattern) {
    for t in gp.triples() {
        let _ = writeln!(out, "  {t}");
    }
}

/// SPARQL 1.1 text for a select query; an empty projection selects `*`.
pub fn select_query_text(q: &SelectQuery) -> String {
    let mut out = String::from("SELECT DISTINCT");
    if q.projection.is_empty() {
        out.push_str(" *");
    }
    for v in &q.projection {
        let _ = write!(out, " {v}");
    }
    out.push_str(" WHERE {\n");
    if let Some(values) = &q.values {
        write_values(&mut out, values);
    }
    write_body(&mut out, &q.pattern);
    out.push('}');
    if let Some(limit) = q.limit {
        let _ = write!(out, "\nLIMIT {limit}");
    }
    out
}

pub fn ask_query_text(gp: &GraphPattern, values: Option<&ValuesTable>) -> String {
    let mut out = String::from("ASK {\n");
    if let Some(values) = values {
        write_values(&mut out, values);
    }
    write_body(&mut out, gp);
    out.push('}');
    out
}
