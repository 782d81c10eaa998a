//! Simulation reports as CSV, JSON and Markdown tables.

use std::fmt::Write as _;

use ivsel_core::sim::MethodSummary;
use ivsel_core::SimulationReport;
use serde::Serialize;

use crate::manifest::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Central {
    Mean,
    Median,
}

/// One study, tagged with its sweep value when it belongs to a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct Study {
    pub sweep_value: Option<f64>,
    #[serde(flatten)]
    pub report: SimulationReport,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    schema_version: u32,
    sweep_parameter: Option<&'a str>,
    studies: &'a [Study],
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn fixed(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

fn centre(m: &MethodSummary, c: Central) -> (Option<f64>, Option<f64>) {
    match c {
        Central::Mean => (m.mean, m.mean_se),
        Central::Median => (m.median, m.median_se),
    }
}

/// One line per (study, method). Contains no timing, so reruns are byte-identical.
pub fn to_csv(studies: &[Study], parameter: Option<&str>, central: Central) -> String {
    let (c, cse) = match central {
        Central::Mean => ("mean", "mean_se"),
        Central::Median => ("median", "median_se"),
    };
    let mut header = vec!["scenario"];
    if parameter.is_some() {
        header.extend(["parameter", "value"]);
    }
    header.extend([
        "alpha_r",
        "truth",
        "method",
        c,
        "emp_sd",
        cse,
        "coverage",
        "rejection_rate",
        "n_converged",
        "n_not_converged",
        "n_failed",
        "flagged",
    ]);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for s in studies {
        let r = &s.report;
        for m in &r.methods {
            let (est, se) = centre(m, central);
            let mut row = vec![r.scenario.name.clone()];
            if let Some(p) = parameter {
                row.push(p.to_string());
                row.push(num(s.sweep_value));
            }
            row.extend([
                r.alpha_r.to_string(),
                r.truth.to_string(),
                m.method.as_str().to_string(),
                num(est),
                num(m.emp_sd),
                num(se),
                num(m.coverage),
                num(m.rejection_rate),
                m.n_converged.to_string(),
                m.n_not_converged.to_string(),
                m.n_failed.to_string(),
                m.flagged.to_string(),
            ]);
            w.write_record(&row).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn to_json(studies: &[Study], parameter: Option<&str>) -> serde_json::Result<String> {
    serde_json::to_string_pretty(&JsonReport { schema_version: SCHEMA_VERSION, sweep_parameter: parameter, studies })
}

pub fn to_markdown(studies: &[Study], parameter: Option<&str>, central: Central) -> String {
    let label = match central {
        Central::Mean => "Mean",
        Central::Median => "Median",
    };
    let mut s = String::new();
    let mut any_flag = false;
    for st in studies {
        let r = &st.report;
        let _ = write!(s, "## {}", r.scenario.name);
        if let (Some(p), Some(v)) = (parameter, st.sweep_value) {
            let _ = write!(s, " ({p} = {v})");
        }
        let _ = writeln!(
            s,
            "\n\nTrue value {}; selection intercept {:.4}; {} replications.\n",
            r.truth, r.alpha_r, r.replications
        );
        let _ = writeln!(s, "| Method | {label} | Emp. SD | {label} SE | Coverage | Power / Type I | Excluded |");
        let _ = writeln!(s, "|---|---:|---:|---:|---:|---:|---:|");
        for m in &r.methods {
            let (est, se) = centre(m, central);
            let flag = if m.flagged { "*" } else { "" };
            any_flag |= m.flagged;
            let _ = writeln!(
                s,
                "| {}{flag} | {} | {} | {} | {} | {} | {} |",
                m.method.as_str(),
                fixed(est),
                fixed(m.emp_sd),
                fixed(se),
                fixed(m.coverage),
                fixed(m.rejection_rate),
                m.n_excluded()
            );
        }
        s.push('\n');
    }
    if any_flag {
        s.push_str("\\* more than 5% of replications excluded (not converged or failed).\n");
    }
    s
}
