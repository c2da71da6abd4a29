//! Key-rate maximization over source strength and detector efficiency.
//!
//! A coarse grid over `(chi, eta0)` is followed by successively finer grids
//! centred on the incumbent. Each level spans one previous step on either
//! side of the incumbent; points outside the search box are dropped. The last level
//! and a final hill-climb on its grid run at the full truncation, so the
//! returned optimum dominates its four neighbours one final step away.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{visibility_with, ChainConfig, VisibilityMode, DEFAULT_TRUNCATION};
use crate::error::{check_finite, Error, Result};
use crate::rates::{
    log10_sifted_rate, net_key_rate_log10, KeyRateResult, LinkParams, Provenance, TradeOff,
};

/// Evenly spaced closed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        let axis = Self { min, max, points };
        axis.validate()?;
        Ok(axis)
    }

    /// A single point.
    pub fn fixed(value: f64) -> Result<Self> {
        Self::new(value, value, 1)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("axis min", self.min)?;
        check_finite("axis max", self.max)?;
        if self.points == 0 || self.min > self.max {
            return Err(Error::Config(format!(
                "grid axis [{}, {}] with {} points is empty",
                self.min, self.max, self.points
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        if self.points <= 1 {
            0.0
        } else {
            (self.max - self.min) / (self.points - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let step = self.step();
        (0..self.points)
            .map(|k| {
                if k + 1 == self.points {
                    self.max
                } else {
                    self.min + k as f64 * step
                }
            })
            .collect()
    }

    fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    fn on_edge(&self, x: f64) -> bool {
        self.points > 1 && (x == self.min || x == self.max)
    }
}

/// How the dark-count probability is chosen at each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DarkCountModel {
    /// `dark = A exp(B eta0)`.
    TradeOff(TradeOff),
    /// The same dark-count probability everywhere.
    Fixed { dark: f64 },
}

impl Default for DarkCountModel {
    fn default() -> Self {
        Self::TradeOff(TradeOff::default())
    }
}

impl DarkCountModel {
    pub fn dark(&self, eta0: f64) -> Result<f64> {
        match self {
            Self::TradeOff(t) => t.dark(eta0),
            Self::Fixed { dark } => {
                if (0.0..1.0).contains(dark) {
                    Ok(*dark)
                } else {
                    Err(Error::UnphysicalDarkCount(*dark))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationSpec {
    pub n_swaps: usize,
    pub link: LinkParams,
    pub chi: GridAxis,
    pub eta0: GridAxis,
    /// Number of refinement levels after the coarse grid.
    pub refinement_levels: usize,
    /// Points per axis on each refinement level.
    pub refinement_points: usize,
    pub dark_model: DarkCountModel,
    /// Truncation for the coarse grid and all but the last level.
    pub search_truncation: usize,
    /// Truncation for the last level and the reported optimum.
    pub final_truncation: usize,
    pub visibility_mode: VisibilityMode,
}

impl OptimizationSpec {
    /// 32 x 32 coarse grid over chi in [0.01, 0.5] and eta0 in [0.05, 0.95],
    /// three 9 x 9 refinement levels, InGaAs trade-off.
    pub fn new(n_swaps: usize, link: LinkParams) -> Result<Self> {
        let spec = Self {
            n_swaps,
            link,
            chi: GridAxis::new(0.01, 0.5, 32)?,
            eta0: GridAxis::new(0.05, 0.95, 32)?,
            refinement_levels: 3,
            refinement_points: 9,
            dark_model: DarkCountModel::default(),
            search_truncation: 2,
            final_truncation: DEFAULT_TRUNCATION,
            visibility_mode: VisibilityMode::FixedAngles,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_swaps == 0 {
            return Err(Error::Domain {
                name: "n_swaps",
                value: 0.0,
                reason: "at least one swap is required",
            });
        }
        self.link.validate()?;
        self.chi.validate()?;
        self.eta0.validate()?;
        if self.chi.min < 0.0 {
            return Err(Error::Domain {
                name: "chi",
                value: self.chi.min,
                reason: "must be non-negative",
            });
        }
        if self.eta0.min < 0.0 || self.eta0.max > 1.0 {
            return Err(Error::Domain {
                name: "eta0",
                value: if self.eta0.min < 0.0 {
                    self.eta0.min
                } else {
                    self.eta0.max
                },
                reason: "must lie in [0, 1]",
            });
        }
        if self.refinement_levels == 0 {
            return Err(Error::Config(
                "at least one refinement level is required".into(),
            ));
        }
        if self.refinement_points < 3 {
            return Err(Error::Config(
                "refinement grids need at least 3 points per axis".into(),
            ));
        }
        if self.search_truncation == 0 || self.final_truncation == 0 {
            return Err(Error::Config("truncations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything computed at one `(chi, eta0)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub chi: f64,
    pub eta0: f64,
    pub dark: f64,
    /// Effective efficiency of each detector, arm loss included.
    pub eta_detector: f64,
    /// Efficiency entering the sifted rate, fixed loss included.
    pub eta_sifted: f64,
    pub key: KeyRateResult,
}

/// Net key rate at one operating point.
pub fn evaluate_rate(
    n_swaps: usize,
    link: &LinkParams,
    chi: f64,
    eta0: f64,
    dark_model: &DarkCountModel,
    truncation: usize,
    mode: VisibilityMode,
) -> Result<RatePoint> {
    link.validate()?;
    let dark = dark_model.dark(eta0)?;
    let eta_detector = eta0 * link.arm_efficiency(n_swaps)?;
    let eta_sifted = eta0 * link.fixed_efficiency()?;
    let config = ChainConfig::new(n_swaps, chi, eta_detector, dark)?.with_truncation(truncation);
    let v = visibility_with(&config, mode)?.value;
    let log10_sifted = log10_sifted_rate(n_swaps, chi, eta_sifted, link.alpha, link.length_km)?;
    let key = net_key_rate_log10(v, log10_sifted, link.kappa)?.with_provenance(Provenance {
        chi,
        eta0,
        dark,
        n_swaps,
        length_km: link.length_km,
    });
    Ok(RatePoint {
        chi,
        eta0,
        dark,
        eta_detector,
        eta_sifted,
        key,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub n_swaps: usize,
    pub length_km: f64,
    pub r_max: f64,
    /// `-inf` when no grid point yields a key.
    pub log10_r_max: f64,
    pub chi_opt: f64,
    pub eta0_opt: f64,
    pub dark_at_opt: f64,
    /// Full evaluation at the optimum; `None` when the optimum is unphysical.
    pub point: Option<RatePoint>,
    pub evaluations: usize,
    /// Points that failed numerically (not counting unphysical ones).
    pub failures: usize,
    /// Points where the dark-count model left the physical range.
    pub unphysical: usize,
    /// Optimum on the edge of the search box.
    pub boundary: bool,
    pub no_key: bool,
    /// The finest grid already had a local maximum; no hill-climb moves.
    pub converged: bool,
    pub final_step: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    chi: f64,
    eta0: f64,
    score: f64,
}

/// Higher score wins; ties go to smaller chi, then smaller eta0.
fn better(a: &Candidate, b: &Candidate) -> bool {
    match a.score.partial_cmp(&b.score) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) => false,
        _ => (a.chi, a.eta0) < (b.chi, b.eta0),
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    evaluations: usize,
    failures: usize,
    unphysical: usize,
}

enum Outcome {
    Score(f64),
    Unphysical,
    Failed,
}

struct Search {
    best: Option<Candidate>,
    tally: Tally,
    step: (f64, f64),
    moves: usize,
}

fn evaluate_grid<F>(points: &[(f64, f64)], objective: &F, final_level: bool, search: &mut Search)
where
    F: Fn(f64, f64, bool) -> Outcome + Sync,
{
    let outcomes: Vec<Outcome> = points
        .par_iter()
        .map(|&(c, e)| objective(c, e, final_level))
        .collect();
    for (&(chi, eta0), outcome) in points.iter().zip(outcomes) {
        search.tally.evaluations += 1;
        let score = match outcome {
            Outcome::Score(s) => s,
            Outcome::Unphysical => {
                search.tally.unphysical += 1;
                f64::NEG_INFINITY
            }
            Outcome::Failed => {
                search.tally.failures += 1;
                continue;
            }
        };
        let cand = Candidate { chi, eta0, score };
        if search.best.as_ref().is_none_or(|b| better(&cand, b)) {
            search.best = Some(cand);
        }
    }
}

fn refined_axis(centre: f64, half_width: f64, points: usize, bounds: &GridAxis) -> Vec<f64> {
    if half_width == 0.0 {
        return vec![centre];
    }
    let step = 2.0 * half_width / (points - 1) as f64;
    let mid = (points - 1) as f64 / 2.0;
    let mut values: Vec<f64> = (0..points)
        .map(|k| centre + (k as f64 - mid) * step)
        .filter(|&x| bounds.contains(x))
        .collect();
    if !values.contains(&centre) {
        values.push(centre);
        values.sort_by(f64::total_cmp);
    }
    values
}

fn product(chis: &[f64], etas: &[f64]) -> Vec<(f64, f64)> {
    chis.iter()
        .flat_map(|&c| etas.iter().map(move |&e| (c, e)))
        .collect()
}

fn grid_search<F>(spec: &OptimizationSpec, objective: F) -> Result<Search>
where
    F: Fn(f64, f64, bool) -> Outcome + Sync,
{
    spec.validate()?;
    let mut search = Search {
        best: None,
        tally: Tally::default(),
        step: (spec.chi.step(), spec.eta0.step()),
        moves: 0,
    };
    let coarse = product(&spec.chi.values(), &spec.eta0.values());
    evaluate_grid(&coarse, &objective, false, &mut search);

    for level in 0..spec.refinement_levels {
        let final_level = level + 1 == spec.refinement_levels;
        let Some(best) = search.best else { break };
        let (w_chi, w_eta) = search.step;
        let chis = refined_axis(best.chi, w_chi, spec.refinement_points, &spec.chi);
        let etas = refined_axis(best.eta0, w_eta, spec.refinement_points, &spec.eta0);
        search.step = (
            2.0 * w_chi / (spec.refinement_points - 1) as f64,
            2.0 * w_eta / (spec.refinement_points - 1) as f64,
        );
        if final_level {
            // Restart the comparison at full truncation.
            search.best = None;
        }
        evaluate_grid(&product(&chis, &etas), &objective, final_level, &mut search);
    }

    // Climb to a point that dominates its four neighbours on the final step.
    const MAX_MOVES: usize = 10_000;
    while let Some(best) = search.best {
        if search.moves >= MAX_MOVES {
            break;
        }
        let (dc, de) = search.step;
        let neighbours: Vec<(f64, f64)> = [
            (best.chi - dc, best.eta0),
            (best.chi + dc, best.eta0),
            (best.chi, best.eta0 - de),
            (best.chi, best.eta0 + de),
        ]
        .into_iter()
        .filter(|&(c, e)| {
            (c, e) != (best.chi, best.eta0) && spec.chi.contains(c) && spec.eta0.contains(e)
        })
        .collect();
        let mut trial = Search {
            best: Some(best),
            tally: Tally::default(),
            step: search.step,
            moves: 0,
        };
        evaluate_grid(&neighbours, &objective, true, &mut trial);
        search.tally.evaluations += trial.tally.evaluations;
        search.tally.failures += trial.tally.failures;
        search.tally.unphysical += trial.tally.unphysical;
        match trial.best {
            Some(b) if b.score > best.score => {
                search.best = Some(b);
                search.moves += 1;
            }
            _ => break,
        }
    }
    Ok(search)
}

/// Maximizes the net key rate over the configured `(chi, eta0)` box.
pub fn maximize_key_rate(spec: &OptimizationSpec) -> Result<OptimizationResult> {
    let rate = |chi: f64, eta0: f64, final_level: bool| -> Result<RatePoint> {
        let t = if final_level {
            spec.final_truncation
        } else {
            spec.search_truncation
        };
        evaluate_rate(
            spec.n_swaps,
            &spec.link,
            chi,
            eta0,
            &spec.dark_model,
            t,
            spec.visibility_mode,
        )
    };
    let search = grid_search(spec, |chi, eta0, final_level| {
        match rate(chi, eta0, final_level) {
            Ok(p) => Outcome::Score(p.key.log10_r_net),
            Err(Error::UnphysicalDarkCount(_)) => Outcome::Unphysical,
            Err(_) => Outcome::Failed,
        }
    })?;
    let best = search.best.ok_or_else(|| {
        Error::NoEvaluablePoint(format!(
            "{} evaluations, {} failures",
            search.tally.evaluations, search.tally.failures
        ))
    })?;
    let point = match rate(best.chi, best.eta0, true) {
        Ok(p) => Some(p),
        Err(Error::UnphysicalDarkCount(_)) => None,
        Err(e) => return Err(e),
    };
    let log10_r_max = point.map_or(f64::NEG_INFINITY, |p| p.key.log10_r_net);
    let no_key = log10_r_max == f64::NEG_INFINITY;
    Ok(OptimizationResult {
        n_swaps: spec.n_swaps,
        length_km: spec.link.length_km,
        r_max: point.map_or(0.0, |p| p.key.r_net),
        log10_r_max,
        chi_opt: best.chi,
        eta0_opt: best.eta0,
        dark_at_opt: point.map_or(f64::NAN, |p| p.dark),
        point,
        evaluations: search.tally.evaluations,
        failures: search.tally.failures,
        unphysical: search.tally.unphysical,
        boundary: !no_key && (spec.chi.on_edge(best.chi) || spec.eta0.on_edge(best.eta0)),
        no_key,
        converged: search.moves == 0,
        final_step: search.step,
    })
}

/// Largest sifted rate on the same grid and physical constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpperBound {
    pub rate: f64,
    pub log10_rate: f64,
    pub chi: f64,
    pub eta0: f64,
}

/// Sifted rate maximized over the same search box, ignoring visibility.
pub fn upper_bound_rate(spec: &OptimizationSpec) -> Result<UpperBound> {
    let fixed = spec.link.fixed_efficiency()?;
    let sifted = |chi: f64, eta0: f64| -> Result<f64> {
        spec.dark_model.dark(eta0)?;
        log10_sifted_rate(
            spec.n_swaps,
            chi,
            eta0 * fixed,
            spec.link.alpha,
            spec.link.length_km,
        )
    };
    let search = grid_search(spec, |chi, eta0, _| match sifted(chi, eta0) {
        Ok(s) => Outcome::Score(s),
        Err(Error::UnphysicalDarkCount(_)) => Outcome::Unphysical,
        Err(_) => Outcome::Failed,
    })?;
    let best = search
        .best
        .ok_or_else(|| Error::NoEvaluablePoint("upper bound".into()))?;
    Ok(UpperBound {
        rate: 10f64.powf(best.score),
        log10_rate: best.score,
        chi: best.chi,
        eta0: best.eta0,
    })
}

/// Independent optimizations, one per length, in input order.
pub fn sweep_distance(spec: &OptimizationSpec, lengths: &[f64]) -> Vec<Result<OptimizationResult>> {
    lengths
        .par_iter()
        .map(|&l| {
            let mut s = *spec;
            s.link.length_km = l;
            maximize_key_rate(&s)
        })
        .collect()
}
