//! Report rendering: an aligned table (4 decimals), CSV and JSON (full precision).

use std::fmt::Write;

use serde::Serialize;

use crate::commands::{DesignReport, EvaluateReport, MeasureReport, OracleReport};
use crate::{CliError, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "table" => Ok(Format::Table),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::Parse(format!("unknown output format {other:?}"))),
        }
    }
}

fn json<T: Serialize>(report: &T) -> String {
    let mut out = serde_json::to_string_pretty(report).expect("reports serialize");
    out.push('\n');
    out
}

fn join<T: ToString>(items: &[T], sep: &str) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

fn fmt4(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

/// Comment header shared by every table and CSV report.
fn header(out: &mut String, title: &str, spec: &ProblemSpec, q: usize, v: usize) {
    let _ = writeln!(out, "# fracdesign {title}");
    let _ = writeln!(out, "# levels = [{}]; effects = {}; q = {q}; v = {v}", join(&spec.levels, ", "), spec.effects);
    let _ = writeln!(
        out,
        "# rho = [{}]; procedure = {}; t = {:e}; thresholds = {} (initial), {} (keep)",
        join(&spec.rho, ", "),
        spec.procedure,
        spec.t,
        spec.init_threshold,
        spec.keep_threshold
    );
    if let Some(n1) = spec.n1_hint {
        let _ = writeln!(out, "# n1_hint = {n1}");
    }
    if let Some(n1) = spec.b1_start {
        let _ = writeln!(out, "# b1_start = {n1}");
    }
}

fn rho_columns(spec: &ProblemSpec) -> Vec<String> {
    spec.rho.iter().map(|r| format!("eff_lb({r})")).collect()
}

pub fn render_measure(r: &MeasureReport, format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Json => return json(r),
        Format::Table => {
            header(&mut out, "optimal design measure", &r.spec, r.q, r.v);
            let _ =
                writeln!(out, "# s = {:.6}; iterations = {}; terminal gap = {:e}", r.s, r.iterations, r.terminal_gap);
            let _ = writeln!(out, "{:>8}  {:>12}  {:>8}", "label", "treatment", "mass");
            for m in &r.masses {
                let _ = writeln!(out, "{:>8}  {:>12}  {:>8.4}", m.label, m.treatment, m.mass);
            }
        }
        Format::Csv => {
            header(&mut out, "optimal design measure", &r.spec, r.q, r.v);
            let _ = writeln!(out, "# s = {}; iterations = {}; terminal gap = {}", r.s, r.iterations, r.terminal_gap);
            let _ = writeln!(out, "label,treatment,mass");
            for m in &r.masses {
                let _ = writeln!(out, "{},{},{}", m.label, m.treatment, m.mass);
            }
        }
    }
    out
}

pub fn render_design(r: &DesignReport, format: Format) -> String {
    let mut out = String::new();
    if format == Format::Json {
        return json(r);
    }
    header(&mut out, "exact designs", &r.spec, r.q, r.v);
    let s = if format == Format::Table { format!("{:.6}", r.s) } else { r.s.to_string() };
    let _ = writeln!(out, "# s = {s}; scoring = {}", r.scoring);
    let _ = writeln!(out, "# {}", r.tie_rule);
    let rho_cols = rho_columns(&r.spec);
    if format == Format::Csv {
        let _ = writeln!(out, "N,procedure,start,eff_lb,{},binary,best,design_labels,error", rho_cols.join(","));
        for c in &r.cells {
            let opt = |x: Option<f64>| x.map_or(String::new(), |x| x.to_string());
            let rhos = match &c.eff_lb_rho {
                Some(v) => join(v, ","),
                None => vec![""; r.spec.rho.len()].join(","),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                c.n,
                c.procedure,
                c.start.clone().unwrap_or_default(),
                opt(c.eff_lb),
                rhos,
                c.is_binary.map_or(String::new(), |b| b.to_string()),
                c.best,
                c.design_labels.as_deref().map_or(String::new(), |l| join(l, " ")),
                c.error.clone().unwrap_or_default().replace(',', ";"),
            );
        }
        return out;
    }
    let _ = write!(out, "{:>5}  {:<4}  {:>8}", "N", "proc", "eff_lb");
    for c in &rho_cols {
        let _ = write!(out, "  {c:>10}");
    }
    let _ = writeln!(out, "  {:<4}  {:<20}  design", "best", "start");
    for c in &r.cells {
        let _ = write!(out, "{:>5}  {:<4}  {:>8}", c.n, c.procedure, fmt4(c.eff_lb));
        for i in 0..rho_cols.len() {
            let _ = write!(out, "  {:>10}", fmt4(c.eff_lb_rho.as_ref().map(|v| v[i])));
        }
        let best = if c.best { "*" } else { "" };
        let start = c.start.clone().unwrap_or_else(|| "-".into());
        match (&c.design_labels, &c.error) {
            (Some(l), _) => {
                let _ = writeln!(out, "  {best:<4}  {start:<20}  {}", join(l, " "));
            }
            (None, e) => {
                let _ = writeln!(out, "  {best:<4}  {start:<20}  error: {}", e.as_deref().unwrap_or("no design"));
            }
        }
    }
    out
}

pub fn render_evaluate(r: &EvaluateReport, format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Json => return json(r),
        Format::Table => {
            header(&mut out, "design evaluation", &r.spec, r.q, r.v);
            let _ = writeln!(out, "# s = {:.6}", r.s);
            let _ = writeln!(out, "N        {}", r.n);
            let _ = writeln!(out, "binary   {}", r.is_binary);
            let _ = writeln!(out, "a_value  {:.6}", r.a_value);
            let _ = writeln!(out, "eff_lb   {:.4}", r.eff_lb);
            for (rho, e) in r.spec.rho.iter().zip(&r.eff_lb_rho) {
                let _ = writeln!(out, "eff_lb({rho})  {e:.4}");
            }
            let _ = writeln!(out, "design   {}", join(&r.design_labels, " "));
        }
        Format::Csv => {
            header(&mut out, "design evaluation", &r.spec, r.q, r.v);
            let _ = writeln!(out, "N,binary,a_value,tr_v,s,eff_lb,{},design_labels", rho_columns(&r.spec).join(","));
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.n,
                r.is_binary,
                r.a_value,
                r.tr_v,
                r.s,
                r.eff_lb,
                join(&r.eff_lb_rho, ","),
                join(&r.design_labels, " ")
            );
        }
    }
    out
}

pub fn render_oracle(r: &OracleReport, format: Format) -> String {
    let mut out = String::new();
    if format == Format::Json {
        return json(r);
    }
    header(&mut out, "binary design oracle", &r.spec, r.q, r.v);
    let _ = writeln!(out, "# s = {}; tr W = {}; budget = {}", r.s, r.trace_w, r.budget);
    let eff_cols: Vec<String> =
        std::iter::once("eff(0)".to_string()).chain(r.spec.rho.iter().map(|x| format!("eff({x})"))).collect();
    if format == Format::Csv {
        let _ = writeln!(
            out,
            "N,evaluated,min_a,procedure,a_value,{},attains_minima,design_labels,error",
            eff_cols.join(",")
        );
        for row in &r.rows {
            for c in &row.procedures {
                let effs = match &c.true_efficiencies {
                    Some(v) => join(v, ","),
                    None => vec![""; eff_cols.len()].join(","),
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    row.n,
                    row.evaluated,
                    row.min_a,
                    c.procedure,
                    c.a_value.map_or(String::new(), |x| x.to_string()),
                    effs,
                    c.attains_minima.map_or(String::new(), |b| b.to_string()),
                    c.design_labels.as_deref().map_or(String::new(), |l| join(l, " ")),
                    c.error.clone().unwrap_or_default().replace(',', ";"),
                );
            }
        }
        return out;
    }
    for row in &r.rows {
        let _ = writeln!(
            out,
            "N = {}: {} designs enumerated ({} singular); min tr(H^-1) = {:.6} at {}",
            row.n,
            row.evaluated,
            row.singular,
            row.min_a,
            join(&row.argmin_labels, " ")
        );
        for (rho, m) in r.spec.rho.iter().zip(&row.min_psi) {
            let _ = writeln!(out, "  min psi/sigma^2 at rho = {rho}: {m:.6}");
        }
        let _ = write!(out, "  {:<4}  {:>10}", "proc", "a_value");
        for c in &eff_cols {
            let _ = write!(out, "  {c:>8}");
        }
        let _ = writeln!(out, "  {:<7}  design", "optimal");
        for c in &row.procedures {
            let _ = write!(out, "  {:<4}  {:>10}", c.procedure, c.a_value.map_or("-".into(), |a| format!("{a:.6}")));
            for i in 0..eff_cols.len() {
                let _ = write!(out, "  {:>8}", fmt4(c.true_efficiencies.as_ref().map(|v| v[i])));
            }
            let attains = match c.attains_minima {
                Some(true) => "yes",
                Some(false) => "no",
                None => "-",
            };
            match (&c.design_labels, &c.error) {
                (Some(l), None) => {
                    let _ = writeln!(out, "  {attains:<7}  {}", join(l, " "));
                }
                (_, e) => {
                    let _ = writeln!(out, "  {attains:<7}  error: {}", e.as_deref().unwrap_or("no design"));
                }
            }
        }
    }
    out
}
