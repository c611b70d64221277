use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{score, CleanErrorMode, DecisionLog};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::Classifier;

/// `0.0, 0.05, ..., 1.0`.
pub fn default_tau_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    CleanCapped,
    CleanLiteral,
    Adversarial,
}

impl ErrorMetric {
    pub fn name(self) -> &'static str {
        match self {
            ErrorMetric::CleanCapped => "ed_capped",
            ErrorMetric::CleanLiteral => "ed_literal",
            ErrorMetric::Adversarial => "ea",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub tau: f64,
    pub error: f64,
    pub rejection_rate: f64,
}

/// One error measure of one framework on one sample set across thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub framework: String,
    pub set: String,
    pub metric: ErrorMetric,
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    pub fn at(&self, tau: f64) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.tau == tau)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(
            "tau grid must be non-empty and strictly increasing",
        ));
    }
    Ok(())
}

fn report(
    framework: &str,
    set: &str,
    metric: ErrorMetric,
    log: &DecisionLog,
    grid: &[f64],
) -> Result<ErrorReport> {
    let rows = grid
        .iter()
        .map(|&tau| {
            let error = match metric {
                ErrorMetric::CleanCapped => log.error_clean(tau, CleanErrorMode::Capped)?,
                ErrorMetric::CleanLiteral => log.error_clean(tau, CleanErrorMode::Literal)?,
                ErrorMetric::Adversarial => log.error_adv(tau)?,
            };
            Ok(ErrorRow {
                tau,
                error,
                rejection_rate: log.rejection_rate(tau)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorReport {
        framework: framework.to_string(),
        set: set.to_string(),
        metric,
        rows,
    })
}

/// Error reports from pre-computed decision logs: both clean-error modes
/// for `clean`, then adversary error for each named adversary set.
pub fn sweep_logs(
    framework: &str,
    clean: &DecisionLog,
    adversaries: &[(String, DecisionLog)],
    grid: &[f64],
) -> Result<Vec<ErrorReport>> {
    check_grid(grid)?;
    let mut out = vec![
        report(framework, "clean", ErrorMetric::CleanCapped, clean, grid)?,
        report(framework, "clean", ErrorMetric::CleanLiteral, clean, grid)?,
    ];
    for (name, log) in adversaries {
        out.push(report(
            framework,
            name,
            ErrorMetric::Adversarial,
            log,
            grid,
        )?);
    }
    Ok(out)
}

pub fn sweep(
    framework_id: &str,
    framework: &dyn Classifier,
    clean: &Dataset,
    adversaries: &[(String, Dataset)],
    grid: &[f64],
) -> Result<Vec<ErrorReport>> {
    let clean_log = score(framework, clean)?;
    let adv_logs = adversaries
        .iter()
        .map(|(name, d)| Ok((name.clone(), score(framework, d)?)))
        .collect::<Result<Vec<_>>>()?;
    sweep_logs(framework_id, &clean_log, &adv_logs, grid)
}

/// `(tau, fraction of samples with confidence < tau)` for every grid value.
pub fn rejection_rate_curve(log: &DecisionLog, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_grid(grid)?;
    grid.iter()
        .map(|&tau| Ok((tau, log.rejection_rate(tau)?)))
        .collect()
}

/// One CSV for reports sharing a grid: `tau` then `<set>_<metric>` and
/// `<set>_rejection` per report (the rejection column is written once per
/// set).
pub fn reports_to_csv(reports: &[ErrorReport]) -> Result<String> {
    let first = reports.first().ok_or(Error::Empty("report list"))?;
    if reports.iter().any(|r| r.rows.len() != first.rows.len()) {
        return Err(Error::config("reports must share a tau grid"));
    }
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    let mut seen_sets: Vec<&str> = Vec::new();
    for r in reports {
        columns.push((
            format!("{}_{}", r.set, r.metric.name()),
            r.rows.iter().map(|x| x.error).collect(),
        ));
        if !seen_sets.contains(&r.set.as_str()) {
            seen_sets.push(&r.set);
            columns.push((
                format!("{}_rejection", r.set),
                r.rows.iter().map(|x| x.rejection_rate).collect(),
            ));
        }
    }
    let mut out = String::from("tau");
    for (name, _) in &columns {
        write!(out, ",{name}").unwrap();
    }
    out.push('\n');
    for (i, row) in first.rows.iter().enumerate() {
        write!(out, "{}", row.tau).unwrap();
        for (_, values) in &columns {
            write!(out, ",{}", values[i]).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}
