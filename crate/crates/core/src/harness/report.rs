//! Report files: errors.csv, rates.json, constants.json, plots.gp and the run manifest.
//!
//! Column orders are fixed:
//! errors.csv: epsilon, t, errL2_u, errL2_combined, errL2_discrepancy, dataNorm, normalizedErr, correctorL2
//! curves csv: t, errL2_u, errL2_combined, errL2_discrepancy, dataNorm
//! Missing quantities are written as empty fields.

use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::approximation::ErrorCurves;
use crate::cell::ConstantsLedger;
use crate::error::Result;
use crate::harness::sweep::{ConstantSample, ConvergenceReport};
use crate::io::format_num;

pub const ERRORS_HEADER: [&str; 8] = [
    "epsilon",
    "t",
    "errL2_u",
    "errL2_combined",
    "errL2_discrepancy",
    "dataNorm",
    "normalizedErr",
    "correctorL2",
];
pub const CURVES_HEADER: [&str; 5] = ["t", "errL2_u", "errL2_combined", "errL2_discrepancy", "dataNorm"];

fn opt(v: Option<f64>) -> String {
    v.map(format_num).unwrap_or_default()
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_errors_csv(path: &Path, report: &ConvergenceReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ERRORS_HEADER)?;
    for r in &report.rows {
        w.write_record([
            format_num(r.epsilon),
            format_num(r.t),
            format_num(r.err_l2_u),
            opt(r.err_l2_combined),
            opt(r.err_l2_discrepancy),
            format_num(r.data_norm),
            format_num(r.normalized),
            opt(r.corrector_l2),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-time error curves at one ε.
pub fn write_curves_csv(path: &Path, curves: &ErrorCurves, data_norms: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CURVES_HEADER)?;
    for (i, t) in curves.times.iter().enumerate() {
        w.write_record([
            format_num(*t),
            format_num(curves.u[i]),
            opt(curves.combined.get(i).copied()),
            opt(curves.discrepancy.get(i).copied()),
            opt(data_norms.get(i).copied()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ConstantsFile<'a> {
    ledger: &'a ConstantsLedger,
    samples: &'a [ConstantSample],
}

/// Gnuplot script: log-log error against ε per time, and the normalized envelope against t.
pub fn plot_script(report: &ConvergenceReport) -> String {
    let mut times: Vec<f64> = report.rows.iter().map(|r| r.t).filter(|t| *t > 0.0).collect();
    times.dedup();
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset key autotitle columnhead left\nset logscale xy\n");
    s.push_str(&format!("set title '{}: ||u_eps - u_0|| / data'\n", report.name));
    s.push_str("set xlabel 'epsilon'\nset ylabel 'normalized error'\nset terminal pngcairo size 900,600\n");
    s.push_str("set output 'rates.png'\nplot \\\n");
    let lines: Vec<String> = times
        .iter()
        .map(|t| format!("  'errors.csv' using 1:($2=={} ? $7 : 1/0) with linespoints title 't = {}'", format_num(*t), format_num(*t)))
        .collect();
    s.push_str(&lines.join(", \\\n"));
    s.push('\n');
    s.push_str("set output 'combined.png'\nset ylabel 'error'\nplot \\\n");
    let lines: Vec<String> = times
        .iter()
        .flat_map(|t| {
            [
                format!("  'errors.csv' using 1:($2=={} ? $4 : 1/0) with linespoints title 'combined, t = {}'", format_num(*t), format_num(*t)),
                format!("  'errors.csv' using 1:($2=={} ? $5 : 1/0) with linespoints title 'discrepancy, t = {}'", format_num(*t), format_num(*t)),
            ]
        })
        .collect();
    s.push_str(&lines.join(", \\\n"));
    s.push('\n');
    s
}

/// Writes errors.csv, rates.json, constants.json and plots.gp into `dir`.
pub fn write_report(dir: &Path, report: &ConvergenceReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_errors_csv(&dir.join("errors.csv"), report)?;
    let rates = json!({
        "name": report.name,
        "dim": report.dim,
        "exploratory": report.exploratory,
        "g0": report.g0,
        "propagators": report.propagators,
        "rates": report.rates,
        "richardson": report.richardson,
        "richardson_clean": report.richardson_clean,
        "slopes_passed": report.slopes_passed,
        "acceptable": report.acceptable,
    });
    write_json(&dir.join("rates.json"), &rates)?;
    write_json(
        &dir.join("constants.json"),
        &ConstantsFile {
            ledger: &report.constants,
            samples: &report.constant_samples,
        },
    )?;
    std::fs::write(dir.join("plots.gp"), plot_script(report))?;
    Ok(())
}

/// Run manifest: the fully resolved config and every knob, plus timing.
pub fn manifest(subcommand: &str, resolved_config: Value, seed: u64, jobs: usize, started: SystemTime, runtime: Duration, extra: Value) -> Value {
    json!({
        "tool": "homwave",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "seed": seed,
        "jobs": jobs,
        "started_unix_seconds": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "runtime_seconds": runtime.as_secs_f64(),
        "config": resolved_config,
        "extra": extra,
    })
}
