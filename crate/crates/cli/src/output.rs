//! Tables, manifest and certificate summary written after all runs finish.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use pdpalm_core::instances::GENERATOR_VERSION;
use pdpalm_core::Algorithm;
use serde_json::json;

use crate::runner::{Report, RunRecord, RunStatus};

pub fn write_all(report: &Report, argv: &[String]) -> anyhow::Result<()> {
    let dir = &report.plan.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_table_csv(&dir.join("table.csv"), &report.records)?;
    fs::write(dir.join("table.txt"), render_table(report))?;
    write_manifest(&dir.join("manifest.json"), report, argv)?;
    if report.plan.certify {
        write_certificate_summary(&dir.join("certificates.jsonl"), report)?;
    }
    Ok(())
}

fn write_table_csv(path: &Path, records: &[RunRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_manifest(path: &Path, report: &Report, argv: &[String]) -> anyhow::Result<()> {
    let manifest = json!({
        "tool": "pdpalm",
        "version": env!("CARGO_PKG_VERSION"),
        "command_line": argv,
        "generator_version": GENERATOR_VERSION,
        "plan": report.plan,
        "runs": report.records.len(),
        "validation": report.validation,
        "errors": report.errors,
        "exit_code": report.exit_code(),
    });
    fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn write_certificate_summary(path: &Path, report: &Report) -> anyhow::Result<()> {
    let mut out = String::new();
    for r in &report.records {
        let line = json!({
            "run": r.trace.trim_start_matches("traces/").trim_end_matches(".csv"),
            "algorithm": r.algorithm,
            "seed": r.seed,
            "tau2": r.tau2,
            "iterations": r.iterations,
            "status": r.status,
            "contraction_pass": r.cert_pass,
            "worst_relative_slack": r.cert_worst_slack,
            "first_contraction_failure": r.cert_first_failure,
            "ergodic_pass": r.ergodic_pass,
            "first_ergodic_failure": r.ergodic_first_failure,
        });
        writeln!(out, "{line}")?;
    }
    for e in &report.errors {
        writeln!(out, "{}", json!({ "error": e }))?;
    }
    fs::write(path, out)?;
    Ok(())
}

fn cell(r: &RunRecord) -> [String; 3] {
    let iters = match r.status {
        RunStatus::Converged => r.iterations.to_string(),
        RunStatus::MaxIter => format!("{}+", r.iterations),
        RunStatus::Diverged => "DIVERGED".into(),
        RunStatus::Error => "ERROR".into(),
    };
    [iters, format!("{:.2}", r.time_s), format!("{:.2e}", r.cr)]
}

fn ratio(num: Option<&RunRecord>, den: Option<&RunRecord>, f: fn(&RunRecord) -> f64) -> String {
    match (num, den) {
        (Some(a), Some(b)) if a.status == RunStatus::Converged && b.status == RunStatus::Converged => {
            format!("{:.2}", f(a) / f(b))
        }
        (Some(_), Some(_)) => "-".into(),
        _ => String::new(),
    }
}

/// Aligned text table: one row per instance (and sweep point), three columns per algorithm.
pub fn render_table(report: &Report) -> String {
    let plan = &report.plan;
    let algs = &plan.algorithms;
    let lasso = report.records.iter().any(|r| r.tau2.is_some());
    let ratios = lasso && algs.contains(&Algorithm::LinearizedAdmm) && algs.contains(&Algorithm::SplittingPdp);

    let mut header = vec!["m x n".to_string(), "seed".to_string()];
    if lasso {
        header.push("tau2".into());
    }
    for a in algs {
        header.extend([format!("{a} Iter"), "Time".into(), "CR".into()]);
    }
    if ratios {
        header.extend(["Iter3/Iter1".into(), "Time3/Time1".into()]);
    }
    if plan.certify {
        header.push("certificates".into());
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut i = 0;
    let recs = &report.records;
    while i < recs.len() {
        let key = recs[i].row_key();
        let mut j = i;
        while j < recs.len() && recs[j].row_key() == key {
            j += 1;
        }
        let group = &recs[i..j];
        let first = &group[0];
        let mut row = vec![format!("{}x{}", first.m, first.n), first.seed.to_string()];
        if lasso {
            row.push(first.tau2.map(|t| format!("{t:.2}")).unwrap_or_default());
        }
        let find = |a: Algorithm| group.iter().find(|r| r.algorithm == a);
        for &a in algs {
            match find(a) {
                Some(r) => row.extend(cell(r)),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        if ratios {
            let (pdp, pl) = (find(Algorithm::SplittingPdp), find(Algorithm::LinearizedAdmm));
            row.push(ratio(pdp, pl, |r| r.iterations as f64));
            row.push(ratio(pdp, pl, |r| r.time_s));
        }
        if plan.certify {
            let ok = group.iter().all(|r| r.cert_pass == Some(true) && r.ergodic_pass == Some(true));
            row.push(if ok { "pass" } else { "FAIL" }.into());
        }
        rows.push(row);
        i = j;
    }

    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:>w$}"))
            .collect();
        out.push_str(padded.join("  ").trim_end());
        out.push('\n');
    };
    line(&header, &mut out);
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1)));
    out.push('\n');
    for r in &rows {
        line(r, &mut out);
    }
    for e in &report.errors {
        let _ = writeln!(out, "error: {e}");
    }
    out
}
