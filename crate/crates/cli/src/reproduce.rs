//! Data behind each published figure.

use std::f64::consts::PI;

use anyhow::{bail, Result};
use clap::ValueEnum;
use rayon::prelude::*;
use swapchain::chain::{correlation_sums, visibility_with};
use swapchain::optimizer::upper_bound_rate;
use swapchain::rates::{log10_tgw_bound, tgw_bound, TradeOff};

use crate::commands::{map_sweep, optimize_row, OPTIMIZE_COLUMNS};
use crate::config::{RunConfig, SweepAxis};
use crate::output::{Cell, Report, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Correlated and anti-correlated coincidences against delta_b.
    CoincidenceVsDelta,
    /// Visibility against source strength for several chain depths.
    VisibilityVsChi,
    /// Visibility against distance for several chain depths.
    VisibilityVsDistance,
    /// Visibility against distance with ideal detectors, two swaps.
    PerfectDetectors,
    /// Optimized key rate and operating point against distance.
    KeyRate,
    /// Sifted-rate upper bounds against the repeaterless bound.
    TgwComparison,
}

impl Figure {
    pub fn id(self) -> String {
        self.to_possible_value()
            .map(|v| v.get_name().to_string())
            .unwrap_or_default()
    }
}

fn axis(parameter: &str, from: f64, to: f64, steps: usize) -> Option<SweepAxis> {
    Some(SweepAxis {
        parameter: parameter.into(),
        from,
        to,
        steps,
    })
}

/// Figure caption parameters on top of the defaults.
pub fn preset(figure: Figure) -> RunConfig {
    let mut c = RunConfig {
        command: "reproduce".into(),
        figure: Some(figure.id()),
        ..RunConfig::default()
    };
    match figure {
        Figure::CoincidenceVsDelta | Figure::VisibilityVsChi => {
            c.chi = 0.24;
            c.eta0 = 0.04;
            c.alpha0 = 0.0;
            c.length_km = 0.0;
            c.dark = Some(1e-5);
            c.n_swaps_list = if figure == Figure::CoincidenceVsDelta {
                vec![3]
            } else {
                vec![1, 2, 3]
            };
            c.sweep = if figure == Figure::CoincidenceVsDelta {
                axis("delta_b", -PI, PI, 49)
            } else {
                axis("chi", 0.05, 0.4, 8)
            };
        }
        Figure::VisibilityVsDistance => {
            c.chi = 0.1;
            c.eta0 = 0.7;
            c.dark = Some(1e-5);
            c.sweep = axis("length_km", 0.0, 1200.0, 25);
        }
        Figure::PerfectDetectors => {
            c.chi = 0.1;
            c.eta0 = 1.0;
            c.dark = Some(0.0);
            c.alpha0 = 0.0;
            c.n_swaps_list = vec![2];
            c.sweep = axis("length_km", 0.0, 2000.0, 21);
        }
        Figure::KeyRate => {
            c.dark = None;
            c.trade_off = Some(TradeOff::default());
            c.sweep = axis("length_km", 0.0, 1000.0, 21);
        }
        Figure::TgwComparison => {
            c.dark = None;
            c.trade_off = Some(TradeOff::default());
            c.sweep = axis("length_km", 10.0, 1000.0, 100);
        }
    }
    c
}

fn with_depth(cfg: &RunConfig, n: usize) -> RunConfig {
    let mut c = cfg.clone();
    c.n_swaps = n;
    c
}

fn parameter_column(cfg: &RunConfig) -> Result<(String, bool)> {
    let Some(axis) = &cfg.sweep else {
        bail!("figure needs a sweep axis");
    };
    let angle = crate::config::is_angle(&axis.parameter);
    let name = if angle {
        format!("{}_pi", axis.parameter)
    } else {
        axis.parameter.clone()
    };
    Ok((name, angle))
}

fn axis_cell(cfg: &RunConfig, point: &RunConfig) -> Cell {
    let name = cfg
        .sweep
        .as_ref()
        .map(|a| a.parameter.as_str())
        .unwrap_or("");
    let value = match name {
        "chi" => point.chi,
        "eta0" => point.eta0,
        "dark" => point.dark.unwrap_or(f64::NAN),
        "alpha" => point.alpha,
        "alpha0" => point.alpha0,
        "length_km" => point.length_km,
        "delta_a" => point.delta_a / PI,
        "delta_b" => point.delta_b / PI,
        "kappa" => point.kappa,
        "n_swaps" => point.n_swaps as f64,
        _ => f64::NAN,
    };
    value.into()
}

/// One visibility column per chain depth.
fn visibility_columns(cfg: &RunConfig) -> Result<Report> {
    let (param, _) = parameter_column(cfg)?;
    let mut columns = vec![param];
    columns.extend(cfg.n_swaps_list.iter().map(|n| format!("visibility_n{n}")));
    let per_depth = cfg
        .n_swaps_list
        .iter()
        .map(|&n| {
            map_sweep(&with_depth(cfg, n), |p| {
                Ok(visibility_with(&p.chain()?, p.visibility_mode)?.value)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table {
        columns,
        rows: Vec::new(),
    };
    let mut failures = 0;
    for i in 0..per_depth.first().map_or(0, Vec::len) {
        let mut row = vec![axis_cell(cfg, &per_depth[0][i].0)];
        for depth in &per_depth {
            match &depth[i].1 {
                Ok(v) => row.push((*v).into()),
                Err(_) => {
                    failures += 1;
                    row.push(Cell::Missing);
                }
            }
        }
        table.push(row);
    }
    let mut report = Report::new(table);
    report.failures = failures;
    Ok(report)
}

fn coincidence_vs_delta(cfg: &RunConfig) -> Result<Report> {
    let (param, _) = parameter_column(cfg)?;
    let mut table = Table {
        columns: vec![
            "n_swaps".into(),
            param,
            "q_correlated".into(),
            "q_anticorrelated".into(),
        ],
        rows: Vec::new(),
    };
    let mut failures = 0;
    for &n in &cfg.n_swaps_list {
        let depth = with_depth(cfg, n);
        for (point, result) in map_sweep(&depth, |p| Ok(correlation_sums(&p.chain()?)?))? {
            let (a, b) = match result {
                Ok((a, b)) => (Cell::from(a), Cell::from(b)),
                Err(_) => {
                    failures += 1;
                    (Cell::Missing, Cell::Missing)
                }
            };
            table.push(vec![n.into(), axis_cell(&depth, &point), a, b]);
        }
    }
    let mut report = Report::new(table);
    report.failures = failures;
    Ok(report)
}

fn key_rate(cfg: &RunConfig) -> Result<Report> {
    let mut table = Table::new(OPTIMIZE_COLUMNS);
    let mut failures = 0;
    for &n in &cfg.n_swaps_list {
        for (point, result) in map_sweep(&with_depth(cfg, n), optimize_row)? {
            match result {
                Ok(row) => table.push(row),
                Err(_) => {
                    failures += 1;
                    let mut row = vec![Cell::from(n), point.length_km.into()];
                    row.resize(OPTIMIZE_COLUMNS.len(), Cell::Missing);
                    table.push(row);
                }
            }
        }
    }
    let mut report = Report::new(table);
    report.failures = failures;
    Ok(report)
}

fn tgw_comparison(cfg: &RunConfig) -> Result<Report> {
    let mut columns = vec![
        "length_km".to_string(),
        "r_tgw".into(),
        "log10_r_tgw".into(),
    ];
    for n in &cfg.n_swaps_list {
        columns.push(format!("upper_bound_n{n}"));
        columns.push(format!("log10_upper_bound_n{n}"));
    }
    let per_depth = cfg
        .n_swaps_list
        .iter()
        .map(|&n| {
            map_sweep(&with_depth(cfg, n), |p| {
                Ok(upper_bound_rate(&p.optimization_spec()?)?)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = per_depth.first() else {
        bail!("no chain depths requested");
    };
    let rows: Vec<Vec<Cell>> = (0..first.len())
        .into_par_iter()
        .map(|i| {
            let l = first[i].0.length_km;
            let mut row = vec![
                Cell::from(l),
                tgw_bound(cfg.alpha, l).ok().into(),
                log10_tgw_bound(cfg.alpha, l).ok().into(),
            ];
            for depth in &per_depth {
                match &depth[i].1 {
                    Ok(b) => row.extend([Cell::from(b.rate), b.log10_rate.into()]),
                    Err(_) => row.extend([Cell::Missing, Cell::Missing]),
                }
            }
            row
        })
        .collect();
    let failures = per_depth
        .iter()
        .flatten()
        .filter(|(_, r)| r.is_err())
        .count();
    let mut table = Table {
        columns,
        rows: Vec::new(),
    };
    for row in rows {
        table.push(row);
    }
    let mut report = Report::new(table);
    report.failures = failures;
    Ok(report)
}

pub fn run(figure: Figure, cfg: &RunConfig) -> Result<Report> {
    if cfg.n_swaps_list.is_empty() {
        bail!("no chain depths requested");
    }
    match figure {
        Figure::CoincidenceVsDelta => coincidence_vs_delta(cfg),
        Figure::VisibilityVsChi | Figure::VisibilityVsDistance | Figure::PerfectDetectors => {
            visibility_columns(cfg)
        }
        Figure::KeyRate => key_rate(cfg),
        Figure::TgwComparison => tgw_comparison(cfg),
    }
}
