//! Plain-text tables rendered from the report structs.

use std::fmt::Write;

use kroncov::portfolio::BacktestReport;
use kroncov::simlab::SimResult;

use crate::commands::{FitResult, InferResult, Interval, OverIdReport, SelectResult};

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let rule: String = "-".repeat(width.iter().sum::<usize>() + 2 * width.len().saturating_sub(1));
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&width)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = String::new();
    writeln!(out, "{rule}").unwrap();
    writeln!(out, "{}", line(header.to_vec())).unwrap();
    writeln!(out, "{rule}").unwrap();
    for r in rows {
        writeln!(out, "{}", line(r.iter().map(String::as_str).collect())).unwrap();
    }
    writeln!(out, "{rule}").unwrap();
    out
}

fn f(x: f64, digits: usize) -> String {
    format!("{x:.digits$}")
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map(|v| f(v, digits)).unwrap_or_else(|| "-".into())
}

pub fn fit(r: &FitResult) -> String {
    let mut out = format!(
        "{} ({:?}), T = {}, q = {}, method {:?}, converged {}\n",
        r.spec.label, r.spec.structure, r.t, r.q, r.estimate.method, r.estimate.converged
    );
    let rows: Vec<Vec<String>> = r
        .estimate
        .theta
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let rho = match (&r.rho, k) {
                (Some(rho), k) if k > 0 => f(rho[k - 1], 4),
                _ => "-".into(),
            };
            vec![format!("θ{}", k + 1), f(*v, 6), rho]
        })
        .collect();
    out += &table(&["param", "estimate", "rho"], &rows);
    writeln!(out, "loglik {}  BIC {}", opt(r.estimate.loglik, 3), opt(r.bic, 3)).unwrap();
    out
}

fn interval_row(name: &str, i: &Interval) -> Vec<String> {
    vec![name.into(), f(i.estimate.value, 6), f(i.estimate.se, 6), f(i.lower, 6), f(i.upper, 6)]
}

pub fn infer(r: &InferResult) -> String {
    let mut out = fit(&r.fit);
    let mut rows: Vec<Vec<String>> =
        r.theta.iter().enumerate().map(|(k, i)| interval_row(&format!("θ{}", k + 1), i)).collect();
    if let Some(i) = &r.spectral_mean {
        rows.push(interval_row("Σ E ζ", i));
    }
    if let Some(i) = &r.spectral_variance {
        rows.push(interval_row("Σ var ζ", i));
    }
    if let Some(e) = &r.extreme {
        for (name, est) in [("ω max", e.omega_max), ("ω min", e.omega_min)] {
            rows.push(vec![name.into(), f(est.value, 6), f(est.se, 6), "-".into(), "-".into()]);
        }
    }
    if let Some(i) = &r.log_mvp_variance {
        rows.push(interval_row("log var MVP", i));
    }
    let lo = format!("{:.1}% lo", 100.0 * r.level);
    let hi = format!("{:.1}% hi", 100.0 * r.level);
    out += &table(&["quantity", "estimate", "se", &lo, &hi], &rows);
    for n in &r.notes {
        writeln!(out, "note: {n}").unwrap();
    }
    out
}

pub fn overid(r: &OverIdReport) -> String {
    let rows = vec![vec![
        r.spec.label.clone(),
        f(r.result.test.statistic, 3),
        r.result.test.df.to_string(),
        f(r.result.test.p_value, 4),
        f(r.result.normalized, 3),
        if r.result.test.rejected { "yes" } else { "no" }.into(),
    ]];
    table(&["spec", "statistic", "df", "p-value", "normalized", "reject 5%"], &rows)
}

pub fn backtest(r: &BacktestReport) -> String {
    let mut rows = vec![vec![
        r.sample.label.clone(),
        f(r.sample.variances.iter().sum::<f64>() / r.windows.max(1) as f64, 8),
        "-".into(),
        "-".into(),
        r.sample.fallbacks.len().to_string(),
    ]];
    for k in &r.kronecker {
        rows.push(vec![
            k.series.label.clone(),
            f(k.series.variances.iter().sum::<f64>() / r.windows.max(1) as f64, 8),
            f(k.prop, 3),
            f(k.impr, 2),
            k.series.fallbacks.len().to_string(),
        ]);
    }
    let mut out = format!("{} windows of {} days, horizon {}\n", r.windows, r.window, r.horizon);
    out += &table(&["estimator", "mean var", "prop", "impr %", "fallbacks"], &rows);
    out
}

pub fn simulate(r: &SimResult) -> String {
    let rows = vec![
        vec!["PRIAL1".into(), opt(r.median_prial1, 3)],
        vec!["PRIAL2".into(), opt(r.median_prial2, 3)],
        vec!["VR".into(), opt(r.median_vr, 3)],
    ];
    let mut out = table(&["n", &r.config.n.to_string()], &rows);
    writeln!(out, "T = {}, {} completed, {} skipped", r.config.t, r.completed, r.skipped).unwrap();
    out
}

pub fn select(r: &SelectResult) -> String {
    let mut out = String::new();
    for g in &r.by_pad {
        writeln!(out, "padding {} ({} series)", g.pad, r.series + g.pad).unwrap();
        let rows: Vec<Vec<String>> = g
            .ranked
            .iter()
            .map(|c| {
                vec![
                    c.label.clone(),
                    c.q.to_string(),
                    f(c.loglik, 2),
                    f(c.bic, 2),
                    f(c.bic / r.t as f64, 4),
                    if c.converged { "yes" } else { "no" }.into(),
                ]
            })
            .collect();
        out += &table(&["spec", "q", "loglik", "BIC", "BIC/T", "converged"], &rows);
    }
    if r.mixed_padding {
        writeln!(out, "note: BIC values across padding levels are not strictly comparable").unwrap();
    }
    for (label, reason) in &r.failures {
        writeln!(out, "failed: {label}: {reason}").unwrap();
    }
    out
}
