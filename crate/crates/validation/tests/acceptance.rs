//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use swapchain::chain::{coincidence_table, correlation_sums, visibility};
use swapchain::detector::ClickPattern;
use swapchain::fock::{oracle_single_swap, CircuitParams};
use swapchain::optimizer::{evaluate_rate, maximize_key_rate, upper_bound_rate, OptimizationSpec};
use swapchain::rates::{
    binary_entropy, ingaas_dark_count, shor_preskill_rate, sifted_distance_factor, tgw_bound,
    LinkParams, INGAAS_A, INGAAS_B,
};
use swapchain::ChainConfig;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn oracle_equivalence() -> Outcome {
    let mut worst = 0.0_f64;
    let mut worst_at = String::new();
    for chi in [0.05, 0.1, 0.24] {
        for eta in [1.0, 0.5, 0.04] {
            for dark in [0.0, 1e-5] {
                let config = ChainConfig::new(1, chi, eta, dark).map_err(err)?;
                let closed = coincidence_table(&config).map_err(err)?;
                let params = CircuitParams::new(chi, FRAC_PI_2, FRAC_PI_2, 3).map_err(err)?;
                let oracle = oracle_single_swap(
                    &params,
                    &config.detector().map_err(err)?,
                    ClickPattern::PSI,
                )
                .map_err(err)?;
                for p in ClickPattern::all() {
                    let d = (closed.q(p) - oracle.table.q(p)).abs();
                    if d > worst {
                        worst = d;
                        worst_at = format!("chi={chi} eta={eta} dark={dark} pattern {p}");
                    }
                }
            }
        }
    }
    check(
        worst <= 1e-9,
        format!("max-abs {worst:e} over 18 configurations x 16 patterns (worst at {worst_at})"),
    )
}

fn fig_config(n: usize) -> Result<ChainConfig, String> {
    ChainConfig::new(n, 0.24, 0.04, 1e-5).map_err(err)
}

fn visibility_reproduction() -> Outcome {
    let mut matching = None;
    let mut values = Vec::new();
    for n in 1..=3 {
        let base = fig_config(n)?;
        let plus = correlation_sums(&base.clone().with_angles(FRAC_PI_2, FRAC_PI_2))
            .map_err(err)?
            .0;
        let minus = correlation_sums(&base.clone().with_angles(FRAC_PI_2, -FRAC_PI_2))
            .map_err(err)?
            .0;
        let v = (plus - minus) / (plus + minus);
        values.push(format!("N={n}: {v:.4}"));
        if (v - 0.16).abs() <= 0.03 && matching.is_none() {
            matching = Some(n);
        }
    }
    let values = values.join(", ");
    match matching {
        Some(n) => Ok(format!("{values}; matching depth N={n}")),
        None => Err(format!("{values}; no depth within 0.16 +/- 0.03")),
    }
}

fn coincidence_shape() -> Outcome {
    let base = fig_config(3)?;
    let samples = 25;
    let deltas: Vec<f64> = (0..samples)
        .map(|k| -PI + 2.0 * PI * k as f64 / (samples - 1) as f64)
        .collect();
    let mut corr = Vec::new();
    let mut anti = Vec::new();
    for &d in &deltas {
        let (c, a) = correlation_sums(&base.clone().with_angles(FRAC_PI_2, d)).map_err(err)?;
        corr.push(c);
        anti.push(a);
    }
    let period_ok = deltas.iter().take(5).all(|&d| {
        let shifted = correlation_sums(&base.clone().with_angles(FRAC_PI_2, d + 2.0 * PI));
        let here = correlation_sums(&base.clone().with_angles(FRAC_PI_2, d));
        matches!((shifted, here), (Ok(s), Ok(h)) if (s.0 - h.0).abs() <= 1e-12 * h.0.abs() && (s.1 - h.1).abs() <= 1e-12 * h.1.abs())
    });
    let argmax = |v: &[f64]| {
        (0..v.len())
            .max_by(|&i, &j| v[i].total_cmp(&v[j]))
            .unwrap_or(0)
    };
    let argmin = |v: &[f64]| {
        (0..v.len())
            .min_by(|&i, &j| v[i].total_cmp(&v[j]))
            .unwrap_or(0)
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mc, ma) = (mean(&corr), mean(&anti));
    let cov: f64 = corr
        .iter()
        .zip(&anti)
        .map(|(c, a)| (c - mc) * (a - ma))
        .sum();
    let var_c: f64 = corr.iter().map(|c| (c - mc).powi(2)).sum();
    let var_a: f64 = anti.iter().map(|a| (a - ma).powi(2)).sum();
    let pearson = cov / (var_c * var_a).sqrt();
    let (hi, lo) = (argmax(&corr), argmin(&corr));
    let antiphase = argmin(&anti) == hi && argmax(&anti) == lo && pearson < -0.99;
    let (from, to) = (hi.min(lo), hi.max(lo));
    let diff: Vec<f64> = (from..=to).map(|i| corr[i] - anti[i]).collect();
    let crosses = diff
        .first()
        .zip(diff.last())
        .is_some_and(|(a, b)| a * b < 0.0)
        && diff.windows(2).filter(|w| w[0] * w[1] <= 0.0).count() >= 1;
    check(
        period_ok && antiphase && crosses,
        format!(
            "period 2pi: {period_ok}; antiphase: {antiphase} (pearson {pearson:.4}, correlated max at {:.3}pi, min at {:.3}pi); crossing between extrema: {crosses}",
            deltas[hi] / PI,
            deltas[lo] / PI
        ),
    )
}

fn monotonicity() -> Outcome {
    let chis: Vec<f64> = (1..=8).map(|k| 0.05 * k as f64).collect();
    let mut grid = Vec::new();
    for n in 1..=3 {
        let row = chis
            .iter()
            .map(|&chi| visibility(&ChainConfig::new(n, chi, 0.04, 1e-5)?))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(err)?;
        grid.push(row);
    }
    let decreasing = grid.iter().all(|row| row.windows(2).all(|w| w[1] < w[0]));
    let ordered = (0..chis.len()).all(|k| grid[0][k] > grid[1][k] && grid[1][k] > grid[2][k]);
    check(
        decreasing && ordered,
        format!(
            "strictly decreasing in chi: {decreasing}; V(N=1) > V(N=2) > V(N=3) pointwise: {ordered}; at chi=0.4: {:.4} {:.4} {:.4}",
            grid[0][7], grid[1][7], grid[2][7]
        ),
    )
}

fn perfect_detectors() -> Outcome {
    let mut values = Vec::new();
    for l in [0.0, 250.0, 500.0, 1000.0] {
        let link = LinkParams::new(0.25, 0.0, l, 1.0).map_err(err)?;
        let eta = link.arm_efficiency(2).map_err(err)?;
        values.push((
            l,
            visibility(&ChainConfig::new(2, 0.1, eta, 0.0).map_err(err)?).map_err(err)?,
        ));
    }
    let v0 = values[0].1;
    let ok = values.iter().all(|&(_, v)| v >= 0.95 * v0);
    let listing = values
        .iter()
        .map(|(l, v)| format!("V({l})={v:.4} ({:.3} V(0))", v / v0))
        .collect::<Vec<_>>()
        .join(", ");
    check(ok, format!("{listing}; required >= 0.95 V(0)"))
}

fn scalar_formulas() -> Outcome {
    let tgw = tgw_bound(0.25, 40.0).map_err(err)?;
    let tgw_ok = (tgw - 0.289537).abs() <= 1e-5;
    let h_ok = binary_entropy(0.5).map_err(err)? == 1.0;
    let sp = shor_preskill_rate(0.11, 1.0).map_err(err)?;
    let sp_ok = sp > 0.0 && sp < 5e-4;
    let mut sifted_worst = 0.0_f64;
    for n in 1..=6 {
        for l in [0.0, 10.0, 100.0, 333.3, 850.0] {
            let direct = 10f64.powf(-0.25 * l / 10.0);
            let rel = (sifted_distance_factor(n, 0.25, l) - direct).abs() / direct;
            sifted_worst = sifted_worst.max(rel);
        }
    }
    let sifted_ok = sifted_worst <= 1e-14;
    let dark_ok = ingaas_dark_count(0.0, INGAAS_A, INGAAS_B).map_err(err)? == 6.1e-7;
    check(
        tgw_ok && h_ok && sp_ok && sifted_ok && dark_ok,
        format!(
            "tgw(0.25, 40) = {tgw:.7} (target 0.289537 +/- 1e-5: {tgw_ok}); H2(0.5) = 1: {h_ok}; SP(0.11) = {sp:.4e} in (0, 5e-4): {sp_ok}; sifted exponent max rel. error {sifted_worst:e}: {sifted_ok}; dark(0) = 6.1e-7: {dark_ok}"
        ),
    )
}

fn optimizer_sanity() -> Outcome {
    let spec = OptimizationSpec::new(1, LinkParams::standard(100.0).map_err(err)?).map_err(err)?;
    let first = maximize_key_rate(&spec).map_err(err)?;
    let second = maximize_key_rate(&spec).map_err(err)?;
    let deterministic = format!("{first:?}") == format!("{second:?}");
    let (dc, de) = first.final_step;
    let mut local = true;
    for (chi, eta0) in [
        (first.chi_opt - dc, first.eta0_opt),
        (first.chi_opt + dc, first.eta0_opt),
        (first.chi_opt, first.eta0_opt - de),
        (first.chi_opt, first.eta0_opt + de),
    ] {
        if chi < spec.chi.min || chi > spec.chi.max || eta0 < spec.eta0.min || eta0 > spec.eta0.max
        {
            continue;
        }
        if let Ok(p) = evaluate_rate(
            1,
            &spec.link,
            chi,
            eta0,
            &spec.dark_model,
            spec.final_truncation,
            spec.visibility_mode,
        ) {
            if p.key.log10_r_net > first.log10_r_max {
                local = false;
            }
        }
    }
    let bound = upper_bound_rate(&spec).map_err(err)?;
    let bounded = first.r_max <= bound.rate;
    check(
        local && bounded && deterministic && !first.no_key,
        format!(
            "r_max = {:.4e} at chi = {:.4}, eta0 = {:.4}; grid-local maximum: {local}; r_max <= upper bound {:.4e}: {bounded}; bit-identical reruns: {deterministic}",
            first.r_max, first.chi_opt, first.eta0_opt, bound.rate
        ),
    )
}

fn long_distance() -> Outcome {
    let run = |l: f64| -> Result<_, String> {
        let spec = OptimizationSpec::new(3, LinkParams::standard(l).map_err(err)?).map_err(err)?;
        maximize_key_rate(&spec).map_err(err)
    };
    let at_800 = run(800.0)?;
    let at_950 = run(950.0)?;
    let far_ok = at_800.r_max > 0.0;
    let cut_ok = at_950.r_max < 1e-20;
    let v800 = at_800.point.map_or(f64::NAN, |p| p.key.visibility);
    check(
        far_ok && cut_ok,
        format!(
            "N=3: r_max(800 km) = {:e} (> 0: {far_ok}, visibility at the reported point {v800:.4}); r_max(950 km) = {:e} (< 1e-20: {cut_ok})",
            at_800.r_max, at_950.r_max
        ),
    )
}

fn tgw_comparison() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let name = dir.path().join("tgw");
    let name_arg = name.to_str().ok_or("temporary path is not UTF-8")?;
    let code = swapchain_cli::run([
        "swapchain",
        "reproduce",
        "tgw-comparison",
        "--output",
        name_arg,
    ]);
    if code != 0 {
        return Err(format!("reproduce tgw-comparison exited with code {code}"));
    }
    let mut reader = csv::Reader::from_path(name.with_extension("csv")).map_err(err)?;
    let headers = reader.headers().map_err(err)?.clone();
    let col = |h: &str| {
        headers
            .iter()
            .position(|c| c == h)
            .ok_or_else(|| format!("missing column {h}"))
    };
    let (l_col, tgw_col) = (col("length_km")?, col("r_tgw")?);
    let bound_cols = [
        col("upper_bound_n1")?,
        col("upper_bound_n2")?,
        col("upper_bound_n3")?,
    ];
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(err)?;
        let num = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|_| format!("bad value `{}`", &record[i]))
        };
        rows.push((
            num(l_col)?,
            num(tgw_col)?,
            [
                num(bound_cols[0])?,
                num(bound_cols[1])?,
                num(bound_cols[2])?,
            ],
        ));
    }
    let monotone = (0..3).all(|n| {
        rows.windows(2)
            .all(|w| w[0].0 < w[1].0 && w[1].2[n] < w[0].2[n])
    });
    let below = rows.iter().all(|(_, tgw, b)| b[0] <= *tgw);
    check(
        monotone && below && rows.len() > 1,
        format!("{} distances; upper bounds strictly decreasing for N=1,2,3: {monotone}; N=1 bound <= TGW everywhere: {below}", rows.len()),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("visibility reproduction", visibility_reproduction),
        ("coincidence curve shape", coincidence_shape),
        ("monotonicity", monotonicity),
        ("perfect detectors", perfect_detectors),
        ("scalar formulas", scalar_formulas),
        ("optimizer sanity", optimizer_sanity),
        ("long distance", long_distance),
        ("tgw comparison data", tgw_comparison),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {}: {tag} {name} ({secs:.1} s): {detail}", k + 1);
        if outcome.is_err() {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", criteria.len());
    } else {
        println!(
            "acceptance: {} of {} criteria fail: {failed:?}",
            failed.len(),
            criteria.len()
        );
        std::process::exit(1);
    }
}
