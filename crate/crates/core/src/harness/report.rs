use std::fmt::Write;

use crate::metrics::display_round;
use crate::model::{Area, ComponentScores, ScoreReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "table" => Ok(ReportFormat::Table),
            other => Err(format!("unknown report format {other:?} (expected json or table)")),
        }
    }
}

type Column = (&'static str, fn(&ComponentScores) -> f64);

const ROWS: [Column; 5] = [
    ("End-to-end", |c| c.s_e2e),
    ("Requery", |c| c.s_req),
    ("Rerank", |c| c.s_rer),
    ("Summarization", |c| c.s_sum),
    ("Final", |c| c.s_final),
];

fn cell(value: Option<f64>) -> String {
    value.map_or_else(|| "-".to_string(), |v| format!("{:.1}", display_round(v)))
}

pub fn emit_report(report: &ScoreReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(report).expect("report serializes");
            bytes.push(b'\n');
            bytes
        }
        ReportFormat::Table => render_table(report).into_bytes(),
    }
}

fn render_table(report: &ScoreReport) -> String {
    let overall = ComponentScores {
        count: report.query_count,
        s_e2e: report.s_e2e,
        s_req: report.s_req,
        s_rer: report.s_rer,
        s_sum: report.s_sum,
        s_final: report.s_final,
    };
    let mut out = String::new();
    let _ = writeln!(out, "{:<15}{:>8}{:>8}{:>8}", "Task", "Avg", Area::News.label(), Area::Knowledge.label());
    for (name, get) in ROWS {
        let area = |a: Area| report.by_area.get(&a).map(get);
        let _ = writeln!(
            out,
            "{name:<15}{:>8}{:>8}{:>8}",
            cell(Some(get(&overall))),
            cell(area(Area::News)),
            cell(area(Area::Knowledge))
        );
    }
    let _ = writeln!(out, "Queries: {}", report.query_count);

    if !report.by_subfield.is_empty() {
        out.push('\n');
        let _ = write!(out, "{:<15}", "Subfield");
        for subfield in report.by_subfield.keys() {
            let _ = write!(out, "{:>7}", subfield.code());
        }
        out.push('\n');
        let rows: [Column; 2] = [("S_e2e", |c| c.s_e2e), ("S_final", |c| c.s_final)];
        for (name, get) in rows {
            let _ = write!(out, "{name:<15}");
            for scores in report.by_subfield.values() {
                let _ = write!(out, "{:>7}", cell(Some(get(scores))));
            }
            out.push('\n');
        }
    }
    for warning in &report.warnings {
        let _ = writeln!(out, "warning: {warning}");
    }
    out
}
