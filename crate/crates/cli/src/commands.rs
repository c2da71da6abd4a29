//! Single-point commands, sweeps and the oracle self-check.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::time::Instant;

use anyhow::{bail, Result};
use rayon::prelude::*;
use swapchain::chain::{
    certify_truncation, coincidence_table, conditional_outer_counts, visibility_with, Visibility,
    MAX_TRUNCATION,
};
use swapchain::fock::{oracle_single_swap, CircuitParams};
use swapchain::optimizer::{maximize_key_rate, upper_bound_rate};
use swapchain::rates::{
    log10_sifted_rate, log10_tgw_bound, net_key_rate_log10, tgw_bound, KeyRateResult,
};
use swapchain::{ClickPattern, Error};

use crate::config::RunConfig;
use crate::output::{Cell, Report, Table};

/// Oracle agreement threshold.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

/// Everything computed at one configuration.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub visibility: Visibility,
    pub truncation_deficit: Option<f64>,
    pub key: KeyRateResult,
    pub r_tgw: Option<f64>,
}

fn in_pi(x: f64) -> f64 {
    x / PI
}

fn tgw_or_none(alpha: f64, length_km: f64) -> Result<Option<f64>> {
    match tgw_bound(alpha, length_km) {
        Ok(r) => Ok(Some(r)),
        Err(Error::Unbounded) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn truncation_deficit(cfg: &RunConfig) -> Result<Option<f64>> {
    if cfg.truncation >= MAX_TRUNCATION {
        return Ok(None);
    }
    Ok(Some(
        certify_truncation(&cfg.chain()?, cfg.visibility_mode)?.deficit,
    ))
}

pub fn evaluate_point(cfg: &RunConfig) -> Result<PointResult> {
    let chain = cfg.chain()?;
    let visibility = visibility_with(&chain, cfg.visibility_mode)?;
    let eta_sifted = cfg.eta0 * cfg.link()?.fixed_efficiency()?;
    let log10_sifted =
        log10_sifted_rate(cfg.n_swaps, cfg.chi, eta_sifted, cfg.alpha, cfg.length_km)?;
    let key = net_key_rate_log10(visibility.value, log10_sifted, cfg.kappa)?;
    Ok(PointResult {
        visibility,
        truncation_deficit: truncation_deficit(cfg)?,
        key,
        r_tgw: tgw_or_none(cfg.alpha, cfg.length_km)?,
    })
}

const POINT_COLUMNS: &[&str] = &[
    "n_swaps",
    "chi",
    "eta0",
    "eta",
    "dark",
    "alpha",
    "alpha0",
    "length_km",
    "delta_a_pi",
    "delta_b_pi",
    "truncation",
    "kappa",
    "visibility",
    "qber",
    "r_sifted",
    "log10_r_sifted",
    "r_shor_preskill",
    "r_net",
    "log10_r_net",
    "r_tgw",
    "truncation_deficit",
];

fn input_cells(cfg: &RunConfig) -> Vec<Cell> {
    vec![
        cfg.n_swaps.into(),
        cfg.chi.into(),
        cfg.eta0.into(),
        cfg.eta_detector().ok().into(),
        cfg.dark_at(cfg.eta0).ok().into(),
        cfg.alpha.into(),
        cfg.alpha0.into(),
        cfg.length_km.into(),
        in_pi(cfg.delta_a).into(),
        in_pi(cfg.delta_b).into(),
        cfg.truncation.into(),
        cfg.kappa.into(),
    ]
}

fn point_cells(cfg: &RunConfig, point: Option<&PointResult>) -> Vec<Cell> {
    let mut row = input_cells(cfg);
    match point {
        Some(p) => row.extend([
            p.visibility.value.into(),
            p.key.qber.into(),
            p.key.r_sifted.into(),
            p.key.log10_r_sifted.into(),
            p.key.r_shor_preskill.into(),
            p.key.r_net.into(),
            p.key.log10_r_net.into(),
            p.r_tgw.into(),
            p.truncation_deficit.into(),
        ]),
        None => row.resize(POINT_COLUMNS.len(), Cell::Missing),
    }
    row
}

pub fn keyrate(cfg: &RunConfig) -> Result<Report> {
    let point = evaluate_point(cfg)?;
    let mut table = Table::new(POINT_COLUMNS);
    table.push(point_cells(cfg, Some(&point)));
    Ok(Report::new(table).with_summary("has_key", point.key.has_key()))
}

pub fn visibility(cfg: &RunConfig) -> Result<Report> {
    let chain = cfg.chain()?;
    let v = match visibility_with(&chain, cfg.visibility_mode) {
        Err(Error::ImpossibleEvidence(pattern)) => {
            return Err(anyhow::Error::new(Error::DegenerateVisibility)
                .context(format!("heralding pattern {pattern} never occurs")))
        }
        other => other?,
    };
    let deficit = truncation_deficit(cfg)?;
    let mut table = Table::new(&[
        "n_swaps",
        "chi",
        "eta0",
        "eta",
        "dark",
        "delta_a_pi",
        "delta_b_pi",
        "truncation",
        "q_max",
        "q_min",
        "visibility",
        "clamped",
        "delta_b_max_pi",
        "delta_b_min_pi",
        "truncation_deficit",
    ]);
    table.push(vec![
        cfg.n_swaps.into(),
        cfg.chi.into(),
        cfg.eta0.into(),
        chain.eta.into(),
        chain.dark.into(),
        in_pi(cfg.delta_a).into(),
        in_pi(cfg.delta_b).into(),
        cfg.truncation.into(),
        v.q_max.into(),
        v.q_min.into(),
        v.value.into(),
        v.clamped.into(),
        in_pi(v.delta_b_max).into(),
        in_pi(v.delta_b_min).into(),
        deficit.into(),
    ]);
    Ok(Report::new(table))
}

pub fn coincidence(cfg: &RunConfig) -> Result<Report> {
    let chain = cfg.chain()?;
    let q = coincidence_table(&chain)?;
    let mut table = Table::new(&["outer_pattern", "q"]);
    for (pattern, value) in &q.q_values {
        table.push(vec![pattern.to_string().into(), (*value).into()]);
    }
    Ok(Report::new(table)
        .with_summary("q_max", q.q_max)
        .with_summary("q_min", q.q_min)
        .with_summary("visibility", q.visibility))
}

pub fn tgw(cfg: &RunConfig) -> Result<Report> {
    let mut table = Table::new(&["alpha", "length_km", "r_tgw", "log10_r_tgw"]);
    table.push(vec![
        cfg.alpha.into(),
        cfg.length_km.into(),
        tgw_bound(cfg.alpha, cfg.length_km)?.into(),
        log10_tgw_bound(cfg.alpha, cfg.length_km)?.into(),
    ]);
    Ok(Report::new(table))
}

pub const OPTIMIZE_COLUMNS: &[&str] = &[
    "n_swaps",
    "length_km",
    "r_max",
    "log10_r_max",
    "chi_opt",
    "eta0_opt",
    "dark_at_opt",
    "visibility",
    "qber",
    "upper_bound",
    "log10_upper_bound",
    "r_tgw",
    "evaluations",
    "failures",
    "unphysical",
    "boundary",
    "no_key",
    "converged",
];

/// One optimization as a table row.
pub fn optimize_row(cfg: &RunConfig) -> Result<Vec<Cell>> {
    let spec = cfg.optimization_spec()?;
    let result = maximize_key_rate(&spec)?;
    let bound = upper_bound_rate(&spec)?;
    Ok(vec![
        cfg.n_swaps.into(),
        cfg.length_km.into(),
        result.r_max.into(),
        result.log10_r_max.into(),
        result.chi_opt.into(),
        result.eta0_opt.into(),
        result.dark_at_opt.into(),
        result.point.map(|p| p.key.visibility).into(),
        result.point.map(|p| p.key.qber).into(),
        bound.rate.into(),
        bound.log10_rate.into(),
        tgw_or_none(cfg.alpha, cfg.length_km)?.into(),
        result.evaluations.into(),
        result.failures.into(),
        result.unphysical.into(),
        result.boundary.into(),
        result.no_key.into(),
        result.converged.into(),
    ])
}

pub fn optimize(cfg: &RunConfig) -> Result<Report> {
    let mut table = Table::new(OPTIMIZE_COLUMNS);
    table.push(optimize_row(cfg)?);
    Ok(Report::new(table))
}

/// Evaluates `f` at every value of the configured sweep axis, in parallel
/// and in axis order.
pub fn map_sweep<T: Send>(
    cfg: &RunConfig,
    f: impl Fn(&RunConfig) -> Result<T> + Sync,
) -> Result<Vec<(RunConfig, Result<T>)>> {
    let Some(axis) = &cfg.sweep else {
        bail!("no sweep axis configured (use --sweep name:from:to:steps)");
    };
    let points = axis
        .values()?
        .into_iter()
        .map(|v| {
            let mut point = cfg.clone();
            point.sweep = None;
            point.set_parameter(&axis.parameter, v)?;
            Ok(point)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(points
        .into_par_iter()
        .map(|point| {
            let r = f(&point);
            (point, r)
        })
        .collect())
}

pub fn sweep(cfg: &RunConfig) -> Result<Report> {
    let results = map_sweep(cfg, |point| {
        let start = Instant::now();
        let r = evaluate_point(point);
        r.map(|p| (p, start.elapsed().as_secs_f64()))
    })?;
    let mut columns = POINT_COLUMNS.to_vec();
    columns.extend(["error", "wall_time_s"]);
    let mut table = Table::new(&columns);
    let mut failures = 0;
    for (point, result) in &results {
        let mut row;
        match result {
            Ok((p, secs)) => {
                row = point_cells(point, Some(p));
                row.push(Cell::Text(String::new()));
                row.push((*secs).into());
            }
            Err(e) => {
                failures += 1;
                row = point_cells(point, None);
                row.push(format!("{e:#}").into());
                row.push(Cell::Missing);
            }
        }
        table.push(row);
    }
    let mut report = Report::new(table);
    report.failures = failures;
    Ok(report)
}

fn max_and_rms(diffs: &[f64]) -> (f64, f64) {
    let max = diffs.iter().fold(0.0_f64, |m, d| m.max(*d));
    let rms = if diffs.is_empty() {
        0.0
    } else {
        (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt()
    };
    (max, rms)
}

/// Compares the closed-form single-swap evaluator with the brute-force
/// Fock-space oracle. Returns the report and whether they agree.
pub fn oracle_check(cfg: &RunConfig) -> Result<(Report, bool)> {
    if cfg.n_swaps != 1 {
        bail!(
            "oracle-check supports a single swap only (got n_swaps = {})",
            cfg.n_swaps
        );
    }
    let oracle_t = cfg.oracle_truncation.unwrap_or(cfg.truncation);
    if oracle_t != cfg.truncation {
        return Err(Error::TruncationMismatch(cfg.truncation, oracle_t).into());
    }
    let chain = cfg.chain()?;
    let pattern = chain.inner_pattern.stations()[0];
    let closed_q = coincidence_table(&chain)?;
    let closed_counts = conditional_outer_counts(&chain)?;
    let params = CircuitParams::new(cfg.chi, cfg.delta_a, cfg.delta_b, oracle_t)?;
    let oracle = oracle_single_swap(&params, &chain.detector()?, pattern)?;

    let mut table = Table::new(&["kind", "pattern", "closed_form", "oracle", "abs_diff"]);
    let mut q_diffs = Vec::new();
    for outer in ClickPattern::all() {
        let (a, b) = (closed_q.q(outer), oracle.table.q(outer));
        q_diffs.push((a - b).abs());
        table.push(vec![
            "clicks".into(),
            outer.to_string().into(),
            a.into(),
            b.into(),
            (a - b).abs().into(),
        ]);
    }
    let keys: BTreeSet<_> = closed_counts
        .keys()
        .chain(oracle.outer_counts.keys())
        .copied()
        .collect();
    let mut count_diffs = Vec::new();
    for k in keys {
        let a = closed_counts.get(&k).copied().unwrap_or(0.0);
        let b = oracle.outer_counts.get(&k).copied().unwrap_or(0.0);
        count_diffs.push((a - b).abs());
        let label =
            k.0.iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(" ");
        table.push(vec![
            "counts".into(),
            label.into(),
            a.into(),
            b.into(),
            (a - b).abs().into(),
        ]);
    }
    let (q_max, q_rms) = max_and_rms(&q_diffs);
    let (c_max, c_rms) = max_and_rms(&count_diffs);
    let max_abs = q_max.max(c_max);
    let agree = max_abs <= ORACLE_TOLERANCE;
    let report = Report::new(table)
        .with_summary("inner_pattern", pattern.to_string())
        .with_summary("max_abs_clicks", q_max)
        .with_summary("rms_clicks", q_rms)
        .with_summary("max_abs_counts", c_max)
        .with_summary("rms_counts", c_rms)
        .with_summary("max_abs", max_abs)
        .with_summary("tolerance", ORACLE_TOLERANCE)
        .with_summary("agree", agree);
    eprintln!(
        "oracle-check: max-abs {max_abs:e} (clicks {q_max:e}, counts {c_max:e}), rms clicks {q_rms:e}, rms counts {c_rms:e}: {}",
        if agree { "agree" } else { "DISAGREE" }
    );
    Ok((report, agree))
}
