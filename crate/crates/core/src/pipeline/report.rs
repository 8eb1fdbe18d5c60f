//! Human-readable summary assembled from the artifacts listed in a manifest.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::data::KernelCoefficients;
use crate::pipeline::stages::*;
use crate::pipeline::Manifest;

fn read(manifest: &Manifest, file: &str) -> Option<String> {
    manifest.entry(file)?;
    std::fs::read_to_string(manifest.dir.join(file)).ok()
}

fn gap(out: &mut String, file: &str) {
    let _ = writeln!(out, "  [gap: {file} not available]");
}

/// Data rows of a CSV artifact, header dropped.
fn csv_rows(text: &str) -> Vec<Vec<&str>> {
    text.lines().skip(1).map(|l| l.split(',').collect()).collect()
}

/// `key = value` or `key value` lines.
fn key_values(text: &str) -> BTreeMap<&str, &str> {
    text.lines()
        .filter_map(|l| match l.split_once(" = ") {
            Some(kv) => Some(kv),
            None => l.split_once(' '),
        })
        .collect()
}

fn num(s: &str) -> f64 {
    s.trim().parse().unwrap_or(f64::NAN)
}

fn section(out: &mut String, title: &str) {
    let _ = writeln!(out, "\n== {title} ==");
}

fn mean_and_sample_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

/// Tabulates the detected period, SVM accuracies, bottleneck choice and BIC
/// table, surviving features, kernel magnitudes, bootstrap comparison and
/// per-region contributions. Missing artifacts are marked as gaps.
pub fn emit_report(manifest: &Manifest) -> String {
    let mut out = String::from("fluflow pipeline report\n");

    section(&mut out, "regions");
    match read(manifest, REGIONS_FILE) {
        Some(t) => {
            let kv = key_values(&t);
            let _ = writeln!(out, "  kept: {}", kv.get("kept").unwrap_or(&"?"));
            let dropped = kv.get("dropped").copied().unwrap_or("").trim();
            let _ = writeln!(out, "  dropped: {}", if dropped.is_empty() { "none" } else { dropped });
        }
        None => gap(&mut out, REGIONS_FILE),
    }

    section(&mut out, "periodicity");
    match read(manifest, PERIOD_FILE) {
        Some(t) => {
            for r in csv_rows(&t) {
                if r.len() == 4 {
                    let _ = writeln!(
                        out,
                        "  {}: period {:.3} weeks (bin k = {}, peak ratio {:.3})",
                        r[0],
                        num(r[1]),
                        r[2],
                        num(r[3])
                    );
                }
            }
        }
        None => gap(&mut out, PERIOD_FILE),
    }

    section(&mut out, "completion");
    match read(manifest, COMPLETION_REPORT_FILE) {
        Some(t) => {
            let kv = key_values(&t);
            for key in ["rank", "train_rmse", "iterations", "converged"] {
                let _ = writeln!(out, "  {key}: {}", kv.get(key).unwrap_or(&"?"));
            }
        }
        None => gap(&mut out, COMPLETION_REPORT_FILE),
    }

    section(&mut out, "svm consistency check");
    match read(manifest, SVM_FILE) {
        Some(t) => {
            let kv = key_values(&t);
            let _ = writeln!(out, "  raw (zero-filled) accuracy: {:.4}", num(kv.get("acc_raw").unwrap_or(&"")));
            let _ = writeln!(out, "  completed accuracy: {:.4}", num(kv.get("acc_completed").unwrap_or(&"")));
            let _ = writeln!(out, "  passed: {}", kv.get("passed").unwrap_or(&"?"));
        }
        None => gap(&mut out, SVM_FILE),
    }

    section(&mut out, "bottleneck");
    match read(manifest, BIC_FILE) {
        Some(t) => {
            let rows = csv_rows(&t);
            if let Some(r) = rows.iter().find(|r| r.get(3) == Some(&"true")) {
                let _ = writeln!(out, "  chosen k: {}", r[0]);
            }
            let _ = writeln!(out, "  {:>4} {:>14} {:>14}", "k", "loss", "bic");
            for r in rows.iter().filter(|r| r.len() == 4) {
                let _ = writeln!(out, "  {:>4} {:>14.6} {:>14.4}", r[0], num(r[1]), num(r[2]));
            }
        }
        None => gap(&mut out, BIC_FILE),
    }

    section(&mut out, "surviving features");
    match (read(manifest, OUT_SELECTED_FILE), read(manifest, PVALUES_FILE)) {
        (Some(sel), Some(pv)) => {
            let p: BTreeMap<&str, f64> = csv_rows(&pv)
                .into_iter()
                .filter(|r| r.len() == 3)
                .map(|r| (r[0], num(r[2])))
                .collect();
            let rows: Vec<(&str, f64)> = sel
                .lines()
                .filter_map(|l| l.split_once(' '))
                .filter(|(n, _)| *n != "intercept" && !KernelCoefficients::NAMES.contains(n))
                .map(|(n, v)| (n, num(v)))
                .collect();
            if rows.is_empty() {
                let _ = writeln!(out, "  no feature survives the p-value filter");
            } else {
                let _ = writeln!(out, "  {:<12} {:>14} {:>12}", "feature", "weight", "p_value");
                for (n, w) in rows {
                    let pv = p.get(n).copied().unwrap_or(f64::NAN);
                    let _ = writeln!(out, "  {n:<12} {w:>14.6} {pv:>12.4e}");
                }
            }
        }
        (sel, _) => gap(&mut out, if sel.is_none() { OUT_SELECTED_FILE } else { PVALUES_FILE }),
    }

    section(&mut out, "flow kernel");
    match read(manifest, OUT_FILE) {
        Some(t) => {
            let kernel: Vec<(&str, f64)> = t
                .lines()
                .filter_map(|l| l.split_once(' '))
                .filter(|(n, _)| KernelCoefficients::NAMES.contains(n))
                .map(|(n, v)| (n, num(v)))
                .collect();
            if kernel.iter().all(|(_, v)| *v == 0.0) {
                let _ = writeln!(out, "  no flow effect");
            } else {
                for (n, v) in kernel {
                    let _ = writeln!(out, "  |{n}| = {:.6e}", v.abs());
                }
            }
        }
        None => gap(&mut out, OUT_FILE),
    }

    section(&mut out, "bootstrap comparison");
    match read(manifest, BOOTSTRAP_FILE) {
        Some(t) => {
            let rows: Vec<(f64, f64)> = csv_rows(&t)
                .into_iter()
                .filter(|r| r.len() == 3)
                .map(|r| (num(r[1]), num(r[2])))
                .collect();
            if rows.len() < 2 {
                let _ = writeln!(out, "  too few replicates");
            } else {
                let plain: Vec<f64> = rows.iter().map(|r| r.0).collect();
                let rect: Vec<f64> = rows.iter().map(|r| r.1).collect();
                let (mp, vp) = mean_and_sample_var(&plain);
                let (mr, vr) = mean_and_sample_var(&rect);
                let se = ((vp + vr) / rows.len() as f64).sqrt();
                let diff = mr - mp;
                let _ = writeln!(out, "  replicates: {}", rows.len());
                let _ = writeln!(out, "  plain out-of-bag MSE: {mp:.6} (sd {:.6})", vp.sqrt());
                let _ = writeln!(out, "  rectified out-of-bag MSE: {mr:.6} (sd {:.6})", vr.sqrt());
                let ratio = if se > 0.0 { diff / se } else { 0.0 };
                let _ = writeln!(out, "  difference (rectified - plain): {diff:.6} = {ratio:.2} pooled standard errors");
            }
        }
        None => gap(&mut out, BOOTSTRAP_FILE),
    }

    section(&mut out, "regional contributions");
    match read(manifest, CONTRIBUTIONS_FILE) {
        Some(t) => {
            let rows = csv_rows(&t);
            if rows.is_empty() {
                let _ = writeln!(out, "  none (no regions requested or no surviving features)");
            }
            for r in rows.iter().filter(|r| r.len() == 3) {
                let _ = writeln!(out, "  {} {} {:.6}", r[0], r[1], num(r[2]));
            }
        }
        None => gap(&mut out, CONTRIBUTIONS_FILE),
    }
    out
}
