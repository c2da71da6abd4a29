//! Brute-force truncated Fock-space simulation of the swapping circuit.
//!
//! This module is the independent reference for the closed-form chain
//! evaluator. Every spatial mode carries two polarization modes. Occupation
//! vectors list photon counts spatial-major, polarization-minor, over the
//! spatial modes of a state in ascending label order: entry `2 * p + pol` for
//! the `p`-th spatial mode of the state.
//!
//! Chain layout used by [`oracle_chain`]: source `s` (counted from A) emits
//! into spatial modes `2s` (towards A) and `2s + 1` (towards B). Station `s`
//! mixes modes `2s + 1` and `2s + 2`. Mode `0` is A, mode `4N - 1` is B. At a
//! station the detectors are ordered (A-side output / P1, A-side output / P2,
//! B-side output / P2, B-side output / P1); at the ends the order is
//! (A / P1, A / P2, B / P2, B / P1).

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::CoincidenceTable;
use crate::detector::{
    bayes_invert, bayes_invert_with, coincidences_from_counts, p_pattern, ClickPattern,
    DetectorParams, PhotonCountPattern,
};
use crate::error::{check_finite, Error, Result};
use crate::numeric::{CompensatedSum, FactorialTable};

/// Amplitudes smaller than this are dropped after each unitary; their weight
/// is booked in the norm deficit.
pub const PRUNE_THRESHOLD: f64 = 1e-15;

/// Largest per-mode cap the `u8` occupation storage supports.
pub const MAX_CAP: usize = 100;

pub const P1: usize = 0;
pub const P2: usize = 1;

/// Photon counts, one per polarization mode.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OccupationVector(Vec<u8>);

impl OccupationVector {
    pub fn new(counts: Vec<u8>) -> Self {
        Self(counts)
    }

    pub fn counts(&self) -> &[u8] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }
}

/// Sparse truncated state over a set of labelled spatial modes.
#[derive(Debug, Clone)]
pub struct FockState {
    modes: Vec<usize>,
    n_max: usize,
    amplitudes: BTreeMap<OccupationVector, Complex64>,
    norm_deficit: f64,
}

fn check_cap(n_max: usize) -> Result<()> {
    if n_max == 0 || n_max > MAX_CAP {
        return Err(Error::Domain {
            name: "n_max",
            value: n_max as f64,
            reason: "truncation must lie in 1..=100",
        });
    }
    Ok(())
}

impl FockState {
    /// Vacuum on the given spatial modes.
    pub fn vacuum(modes: &[usize], n_max: usize) -> Result<Self> {
        check_cap(n_max)?;
        let mut sorted = modes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != modes.len() {
            return Err(Error::ModeOverlap(modes.to_vec()));
        }
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert(
            OccupationVector(vec![0; 2 * sorted.len()]),
            Complex64::new(1.0, 0.0),
        );
        Ok(Self {
            modes: sorted,
            n_max,
            amplitudes,
            norm_deficit: 0.0,
        })
    }

    /// State with explicit amplitudes; the deficit is whatever mass is missing.
    pub fn from_amplitudes(
        modes: &[usize],
        n_max: usize,
        amplitudes: impl IntoIterator<Item = (Vec<u8>, Complex64)>,
    ) -> Result<Self> {
        let mut state = Self::vacuum(modes, n_max)?;
        state.amplitudes.clear();
        let width = 2 * state.modes.len();
        for (counts, amp) in amplitudes {
            if counts.len() != width {
                return Err(Error::Config(format!(
                    "occupation vector has {} entries, expected {width}",
                    counts.len()
                )));
            }
            if let Some(index) = counts.iter().position(|&c| c as usize > n_max) {
                return Err(Error::TruncationOverflow {
                    index,
                    count: counts[index] as usize,
                    truncation: n_max,
                });
            }
            *state
                .amplitudes
                .entry(OccupationVector(counts))
                .or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        state.norm_deficit = (1.0 - state.norm_sqr()).max(0.0);
        Ok(state)
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn norm_deficit(&self) -> f64 {
        self.norm_deficit
    }

    pub fn amplitudes(&self) -> &BTreeMap<OccupationVector, Complex64> {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitude(&self, counts: &[u8]) -> Complex64 {
        self.amplitudes
            .get(&OccupationVector(counts.to_vec()))
            .copied()
            .unwrap_or_default()
    }

    /// Sum of squared amplitude magnitudes.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes
            .values()
            .map(|a| a.norm_sqr())
            .collect::<CompensatedSum>()
            .value()
    }

    /// Index of the (spatial mode, polarization) entry in occupation vectors.
    pub fn entry(&self, mode: usize, pol: usize) -> Result<usize> {
        let pos = self
            .modes
            .binary_search(&mode)
            .map_err(|_| Error::InvalidMode { mode })?;
        Ok(2 * pos + pol)
    }

    /// Same state with a larger per-mode cap.
    pub fn with_cap(mut self, n_max: usize) -> Result<Self> {
        check_cap(n_max)?;
        if n_max < self.n_max {
            return Err(Error::Config(format!(
                "cannot lower the cap from {} to {n_max}",
                self.n_max
            )));
        }
        self.n_max = n_max;
        Ok(self)
    }

    /// Renames the spatial modes; `labels[p]` replaces the `p`-th current label.
    pub fn relabel(&self, labels: &[usize]) -> Result<Self> {
        if labels.len() != self.modes.len() {
            return Err(Error::Config(format!(
                "relabel needs {} labels, got {}",
                self.modes.len(),
                labels.len()
            )));
        }
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by_key(|&p| labels[p]);
        let sorted: Vec<usize> = order.iter().map(|&p| labels[p]).collect();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::ModeOverlap(labels.to_vec()));
        }
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(occ, &amp)| {
                let mut counts = Vec::with_capacity(occ.0.len());
                for &p in &order {
                    counts.push(occ.0[2 * p]);
                    counts.push(occ.0[2 * p + 1]);
                }
                (OccupationVector(counts), amp)
            })
            .collect();
        Ok(Self {
            modes: sorted,
            n_max: self.n_max,
            amplitudes,
            norm_deficit: self.norm_deficit,
        })
    }

    /// Applies a linear two-mode transformation to occupation entries `e0`
    /// and `e1`. Column `k` of `u` is the image of the creation operator of
    /// entry `k`: `a_k^dag -> u[0][k] a_0^dag + u[1][k] a_1^dag`.
    fn two_mode_transform(&self, e0: usize, e1: usize, u: [[Complex64; 2]; 2]) -> Self {
        let cap = self.n_max;
        let max_total = 2 * cap;
        let fact = FactorialTable::new(max_total);
        let pascal = pascal_rows(max_total);
        let powers = |c: Complex64| -> Vec<Complex64> {
            let mut v = Vec::with_capacity(max_total + 1);
            let mut acc = Complex64::new(1.0, 0.0);
            for _ in 0..=max_total {
                v.push(acc);
                acc *= c;
            }
            v
        };
        let (p00, p10, p01, p11) = (
            powers(u[0][0]),
            powers(u[1][0]),
            powers(u[0][1]),
            powers(u[1][1]),
        );

        let zero = Complex64::new(0.0, 0.0);
        let mut scratch = vec![zero; max_total + 1];
        let mut out: BTreeMap<OccupationVector, Complex64> = BTreeMap::new();
        for (occ, &amp) in &self.amplitudes {
            let n0 = occ.0[e0] as usize;
            let n1 = occ.0[e1] as usize;
            let n = n0 + n1;
            scratch[..=n].fill(zero);
            for r in 0..=n0 {
                let a = p00[r] * p10[n0 - r] * pascal[n0][r];
                for s in 0..=n1 {
                    scratch[r + s] += a * p01[s] * p11[n1 - s] * pascal[n1][s];
                }
            }
            let pre = amp / (fact.sqrt_fact(n0) * fact.sqrt_fact(n1));
            for (m0, &c) in scratch[..=n].iter().enumerate() {
                if c == zero {
                    continue;
                }
                let value = pre * c * fact.sqrt_fact(m0) * fact.sqrt_fact(n - m0);
                let mut key = occ.clone();
                key.0[e0] = m0 as u8;
                key.0[e1] = (n - m0) as u8;
                *out.entry(key).or_insert(zero) += value;
            }
        }

        let mut lost = CompensatedSum::new();
        out.retain(|occ, amp| {
            let keep = occ.0[e0] as usize <= cap
                && occ.0[e1] as usize <= cap
                && amp.norm() >= PRUNE_THRESHOLD;
            if !keep {
                lost.add(amp.norm_sqr());
            }
            keep
        });
        Self {
            modes: self.modes.clone(),
            n_max: cap,
            amplitudes: out,
            norm_deficit: self.norm_deficit + lost.value(),
        }
    }
}

fn pascal_rows(max: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(max + 1);
    for n in 0..=max {
        let mut row = vec![1.0; n + 1];
        for k in 1..n {
            row[k] = rows[n - 1][k - 1] + rows[n - 1][k];
        }
        rows.push(row);
    }
    rows
}

/// Polarization-entangled down-conversion state on spatial modes `0` and `1`:
/// `sech^2(chi) * sum_{h,v} (i tanh chi)^(h+v) |h,v>_0 |h,v>_1`, with at most
/// `n_max` pairs per polarization.
pub fn pdc_state(chi: f64, n_max: usize) -> Result<FockState> {
    check_finite("chi", chi)?;
    if chi < 0.0 {
        return Err(Error::Domain {
            name: "chi",
            value: chi,
            reason: "must be non-negative",
        });
    }
    check_cap(n_max)?;
    let sech2 = 1.0 / chi.cosh().powi(2);
    let it = Complex64::new(0.0, chi.tanh());
    let mut amplitudes = BTreeMap::new();
    let mut lost_to_pruning = CompensatedSum::new();
    for h in 0..=n_max {
        for v in 0..=n_max {
            let amp = it.powi((h + v) as i32) * sech2;
            if amp.norm() < PRUNE_THRESHOLD {
                lost_to_pruning.add(amp.norm_sqr());
                continue;
            }
            amplitudes.insert(
                OccupationVector(vec![h as u8, v as u8, h as u8, v as u8]),
                amp,
            );
        }
    }
    // Mass beyond the cap: 1 - (1 - x^(n+1))^2 with x = tanh^2 chi.
    let tail = chi.tanh().powi(2 * (n_max as i32 + 1));
    Ok(FockState {
        modes: vec![0, 1],
        n_max,
        amplitudes,
        norm_deficit: tail * (2.0 - tail) + lost_to_pruning.value(),
    })
}

/// Product state on the union of the two mode sets.
pub fn tensor(a: &FockState, b: &FockState) -> Result<FockState> {
    let overlap: Vec<usize> = a
        .modes
        .iter()
        .copied()
        .filter(|m| b.modes.binary_search(m).is_ok())
        .collect();
    if !overlap.is_empty() {
        return Err(Error::ModeOverlap(overlap));
    }
    let mut modes: Vec<(usize, bool, usize)> = a
        .modes
        .iter()
        .enumerate()
        .map(|(p, &m)| (m, true, p))
        .chain(b.modes.iter().enumerate().map(|(p, &m)| (m, false, p)))
        .collect();
    modes.sort_unstable();
    let mut amplitudes = BTreeMap::new();
    for (oa, &xa) in &a.amplitudes {
        for (ob, &xb) in &b.amplitudes {
            let mut counts = Vec::with_capacity(2 * modes.len());
            for &(_, from_a, p) in &modes {
                let src = if from_a { &oa.0 } else { &ob.0 };
                counts.push(src[2 * p]);
                counts.push(src[2 * p + 1]);
            }
            amplitudes.insert(OccupationVector(counts), xa * xb);
        }
    }
    let (da, db) = (a.norm_deficit, b.norm_deficit);
    Ok(FockState {
        modes: modes.into_iter().map(|(m, _, _)| m).collect(),
        n_max: a.n_max.max(b.n_max),
        amplitudes,
        norm_deficit: da + db - da * db,
    })
}

/// Symmetric 50:50 beam splitter with imaginary reflection phase, applied
/// identically to both polarizations of spatial modes `x` and `y`:
/// `x^dag -> (x^dag + i y^dag)/sqrt 2`, `y^dag -> (i x^dag + y^dag)/sqrt 2`.
pub fn apply_beam_splitter(state: &FockState, (x, y): (usize, usize)) -> Result<FockState> {
    if x == y {
        return Err(Error::ModeOverlap(vec![x, y]));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let u = [
        [Complex64::new(h, 0.0), Complex64::new(0.0, h)],
        [Complex64::new(0.0, h), Complex64::new(h, 0.0)],
    ];
    let mut out = state.clone();
    for pol in [P1, P2] {
        let (ex, ey) = (state.entry(x, pol)?, state.entry(y, pol)?);
        out = out.two_mode_transform(ex, ey, u);
    }
    Ok(out)
}

/// Polarization rotator on one spatial mode, parametrized by the half angle:
/// `P1^dag -> cos(d/2) P1^dag + i sin(d/2) P2^dag` and
/// `P2^dag -> i sin(d/2) P1^dag + cos(d/2) P2^dag`.
pub fn apply_polarization_rotator(state: &FockState, mode: usize, delta: f64) -> Result<FockState> {
    check_finite("delta", delta)?;
    let u = rotator_matrix(delta);
    let (e1, e2) = (state.entry(mode, P1)?, state.entry(mode, P2)?);
    Ok(state.two_mode_transform(e1, e2, u))
}

fn rotator_matrix(delta: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = (delta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(0.0, s)],
        [Complex64::new(0.0, s), Complex64::new(c, 0.0)],
    ]
}

/// Conditional state after an ideal Fock projection at one station.
#[derive(Debug, Clone)]
pub struct Projection {
    /// Normalized state on the remaining modes; empty when `probability == 0`.
    pub outer: FockState,
    /// Squared norm of the projected (unnormalized) state.
    pub probability: f64,
}

impl Projection {
    pub fn is_null(&self) -> bool {
        self.probability == 0.0
    }
}

fn station_entries(state: &FockState, (x, y): (usize, usize)) -> Result<[usize; 4]> {
    Ok([
        state.entry(x, P1)?,
        state.entry(x, P2)?,
        state.entry(y, P2)?,
        state.entry(y, P1)?,
    ])
}

/// Projects the two output modes of a station onto the ideal counts
/// `(i, j, k, l)` = (x/P1, x/P2, y/P2, y/P1).
pub fn project_inner(
    state: &FockState,
    station: (usize, usize),
    counts: PhotonCountPattern,
) -> Result<Projection> {
    counts.check_truncation(state.n_max)?;
    let mut parts = partition_stations(state, &[station], None)?;
    match parts.remove(&vec![counts]) {
        Some(mut outer) => {
            let probability = outer.norm_sqr();
            let scale = 1.0 / probability.sqrt();
            for a in outer.amplitudes.values_mut() {
                *a *= scale;
            }
            Ok(Projection { outer, probability })
        }
        None => {
            let remaining: Vec<usize> = state
                .modes
                .iter()
                .copied()
                .filter(|&m| m != station.0 && m != station.1)
                .collect();
            let mut outer = FockState::vacuum(&remaining, state.n_max)?;
            outer.amplitudes.clear();
            Ok(Projection {
                outer,
                probability: 0.0,
            })
        }
    }
}

/// Splits a state by the ideal counts at several stations. Each value is the
/// unnormalized state of the remaining modes; patterns with a count above
/// `limit` are skipped.
pub fn partition_stations(
    state: &FockState,
    stations: &[(usize, usize)],
    limit: Option<usize>,
) -> Result<BTreeMap<Vec<PhotonCountPattern>, FockState>> {
    let entries: Vec<[usize; 4]> = stations
        .iter()
        .map(|&st| station_entries(state, st))
        .collect::<Result<_>>()?;
    let mut measured = vec![false; state.modes.len()];
    for st in stations {
        for m in [st.0, st.1] {
            let pos = state
                .modes
                .binary_search(&m)
                .map_err(|_| Error::InvalidMode { mode: m })?;
            if measured[pos] {
                return Err(Error::ModeOverlap(vec![m]));
            }
            measured[pos] = true;
        }
    }
    let kept: Vec<usize> = (0..state.modes.len()).filter(|&p| !measured[p]).collect();
    let remaining: Vec<usize> = kept.iter().map(|&p| state.modes[p]).collect();

    let mut out: BTreeMap<Vec<PhotonCountPattern>, FockState> = BTreeMap::new();
    'terms: for (occ, &amp) in &state.amplitudes {
        let mut key = Vec::with_capacity(stations.len());
        for e in &entries {
            let pattern = PhotonCountPattern(e.map(|i| occ.0[i] as usize));
            if limit.is_some_and(|t| PhotonCountPattern::max(&pattern) > t) {
                continue 'terms;
            }
            key.push(pattern);
        }
        let mut counts = Vec::with_capacity(2 * kept.len());
        for &p in &kept {
            counts.push(occ.0[2 * p]);
            counts.push(occ.0[2 * p + 1]);
        }
        let part = out.entry(key).or_insert_with(|| FockState {
            modes: remaining.clone(),
            n_max: state.n_max,
            amplitudes: BTreeMap::new(),
            norm_deficit: 0.0,
        });
        part.amplitudes.insert(OccupationVector(counts), amp);
    }
    Ok(out)
}

/// Outer ideal-count distribution `(A/P1, A/P2, B/P2, B/P1)` of a state on
/// two spatial modes, weighted by `|amplitude|^2`.
pub fn outer_count_distribution(
    state: &FockState,
    a: usize,
    b: usize,
) -> Result<BTreeMap<PhotonCountPattern, f64>> {
    let e = [
        state.entry(a, P1)?,
        state.entry(a, P2)?,
        state.entry(b, P2)?,
        state.entry(b, P1)?,
    ];
    let mut out: BTreeMap<PhotonCountPattern, f64> = BTreeMap::new();
    for (occ, amp) in &state.amplitudes {
        let key = PhotonCountPattern(e.map(|i| occ.0[i] as usize));
        *out.entry(key).or_insert(0.0) += amp.norm_sqr();
    }
    Ok(out)
}

/// Source strength, outer rotator angles and inner-count truncation.
///
/// `n_max` bounds every ideal inner detector count. Sources are expanded to
/// `2 * n_max` pairs per polarization, which covers every inner pattern
/// within the bound exactly, and the working cap is `4 * n_max` so that the
/// beam splitters and rotators never discard amplitude for those patterns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub chi: f64,
    pub delta_a: f64,
    pub delta_b: f64,
    pub n_max: usize,
}

impl CircuitParams {
    pub fn new(chi: f64, delta_a: f64, delta_b: f64, n_max: usize) -> Result<Self> {
        check_finite("chi", chi)?;
        check_finite("delta_a", delta_a)?;
        check_finite("delta_b", delta_b)?;
        if chi < 0.0 {
            return Err(Error::Domain {
                name: "chi",
                value: chi,
                reason: "must be non-negative",
            });
        }
        if n_max == 0 || 4 * n_max > MAX_CAP {
            return Err(Error::Domain {
                name: "n_max",
                value: n_max as f64,
                reason: "oracle truncation must lie in 1..=25",
            });
        }
        Ok(Self {
            chi,
            delta_a,
            delta_b,
            n_max,
        })
    }
}

/// Result of a brute-force run.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    /// `P(i'j'k'l' | inner clicks)` over ideal outer counts.
    pub outer_counts: BTreeMap<PhotonCountPattern, f64>,
    pub table: CoincidenceTable,
    /// Probability of the inner click patterns within the truncation.
    pub evidence: f64,
    /// Mass lost to source truncation and amplitude pruning.
    pub norm_deficit: f64,
}

/// Single swap: two sources, one station, rotators on A and B.
pub fn oracle_single_swap(
    params: &CircuitParams,
    detector: &DetectorParams,
    qrst: ClickPattern,
) -> Result<OracleOutcome> {
    oracle_chain(params, 1, detector, &[qrst])
}

/// The full optical state of a chain just before detection: `2N` sources
/// and a beam splitter at every station. Outer rotators are not applied.
pub fn chain_state(params: &CircuitParams, n_swaps: usize) -> Result<FockState> {
    if n_swaps == 0 {
        return Err(Error::Domain {
            name: "n_swaps",
            value: 0.0,
            reason: "at least one swap is required",
        });
    }
    let t = params.n_max;
    let source = pdc_state(params.chi, 2 * t)?;
    let mut state = source.relabel(&[0, 1])?;
    for s in 1..2 * n_swaps {
        state = tensor(&state, &source.relabel(&[2 * s, 2 * s + 1])?)?;
    }
    let mut state = state.with_cap(4 * t)?;
    for st in 0..2 * n_swaps - 1 {
        state = apply_beam_splitter(&state, (2 * st + 1, 2 * st + 2))?;
    }
    Ok(state)
}

/// Chain of `N` swaps conditioned on `stations` (listed from A to B).
///
/// Builds the sources, applies every station beam splitter, enumerates ideal
/// inner counts up to `n_max`, inverts the detector model by Bayes' rule,
/// rotates A by `delta_a` and B by `delta_b`, and convolves the outer ideal
/// counts with the detector model.
pub fn oracle_chain(
    params: &CircuitParams,
    n_swaps: usize,
    detector: &DetectorParams,
    stations: &[ClickPattern],
) -> Result<OracleOutcome> {
    if stations.len() != 2 * n_swaps.max(1) - 1 {
        return Err(Error::Config(format!(
            "{n_swaps} swaps need {} station patterns, got {}",
            2 * n_swaps.max(1) - 1,
            stations.len()
        )));
    }
    let t = params.n_max;
    let state = chain_state(params, n_swaps)?;
    let station_modes: Vec<(usize, usize)> = (0..stations.len())
        .map(|st| (2 * st + 1, 2 * st + 2))
        .collect();
    let (mode_a, mode_b) = (0, 4 * n_swaps - 1);

    let parts = partition_stations(&state, &station_modes, Some(t))?;
    let prior: BTreeMap<Vec<PhotonCountPattern>, f64> = parts
        .iter()
        .map(|(k, s)| (k.clone(), s.norm_sqr()))
        .collect();

    let (posterior, evidence) = if n_swaps == 1 {
        let single: BTreeMap<PhotonCountPattern, f64> =
            prior.iter().map(|(k, &p)| (k[0], p)).collect();
        let post = bayes_invert(&single, stations[0], detector)?;
        let posterior = post
            .probabilities
            .into_iter()
            .map(|(k, p)| (vec![k], p))
            .collect();
        (posterior, post.evidence)
    } else {
        bayes_invert_with(
            &prior,
            |key| {
                key.iter()
                    .zip(stations)
                    .map(|(counts, clicks)| p_pattern(*clicks, *counts, detector))
                    .product()
            },
            || {
                stations
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join("|")
            },
        )?
    };

    let mut outer_counts: BTreeMap<PhotonCountPattern, CompensatedSum> = BTreeMap::new();
    for (key, weight) in &posterior {
        if *weight == 0.0 {
            continue;
        }
        let mut outer = parts[key].clone();
        let scale = 1.0 / prior[key].sqrt();
        for a in outer.amplitudes.values_mut() {
            *a *= scale;
        }
        let outer = apply_polarization_rotator(&outer, mode_a, params.delta_a)?;
        let outer = apply_polarization_rotator(&outer, mode_b, params.delta_b)?;
        for (counts, p) in outer_count_distribution(&outer, mode_a, mode_b)? {
            outer_counts.entry(counts).or_default().add(weight * p);
        }
    }
    let outer_counts: BTreeMap<PhotonCountPattern, f64> = outer_counts
        .into_iter()
        .map(|(k, s)| (k, s.value()))
        .collect();
    let table = CoincidenceTable::new(coincidences_from_counts(&outer_counts, detector));
    Ok(OracleOutcome {
        outer_counts,
        table,
        evidence,
        norm_deficit: state.norm_deficit(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pdc_vacuum_cases() {
        let s = pdc_state(0.0, 3).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.amplitude(&[0, 0, 0, 0]), c(1.0, 0.0));
        assert_eq!(s.norm_deficit(), 0.0);

        let s = pdc_state(0.1, 3).unwrap();
        let vac = s.amplitude(&[0, 0, 0, 0]);
        assert!((vac.re - 0.990_066_290_847_44).abs() < 1e-12);
        assert_eq!(vac.im, 0.0);
    }

    #[test]
    fn pdc_deficit_matches_pair_distribution_tail() {
        // Independent tail: 1 - sum_{h,v <= 3} tanh^(2(h+v)) / cosh^4, summed term by term.
        let chi: f64 = 0.1;
        let x = chi.tanh().powi(2);
        let kept: f64 = (0..=3)
            .flat_map(|h| (0..=3).map(move |v| x.powi(h + v)))
            .sum::<f64>()
            / chi.cosh().powi(4);
        let s = pdc_state(chi, 3).unwrap();
        assert!((s.norm_deficit() - (1.0 - kept)).abs() < 1e-15);
        assert!((s.norm_sqr() + s.norm_deficit() - 1.0).abs() < 1e-12);
        // Both polarizations truncated at three pairs lose about 1.95e-8.
        assert!((s.norm_deficit() - 1.947_492e-8).abs() < 1e-13);
    }

    #[test]
    fn pdc_rejects_bad_input() {
        assert!(pdc_state(-0.1, 3).is_err());
        assert!(pdc_state(0.1, 0).is_err());
    }

    #[test]
    fn tensor_examples() {
        let v1 = FockState::vacuum(&[0], 3).unwrap();
        let v2 = FockState::vacuum(&[1], 3).unwrap();
        let v = tensor(&v1, &v2).unwrap();
        assert_eq!(v.modes(), &[0, 1]);
        assert_eq!(v.amplitude(&[0, 0, 0, 0]), c(1.0, 0.0));

        let pdc = pdc_state(0.1, 3).unwrap();
        let vac = FockState::vacuum(&[2], 3).unwrap();
        let t = tensor(&pdc, &vac).unwrap();
        assert_eq!(t.len(), pdc.len());
        for (occ, amp) in pdc.amplitudes() {
            let mut counts = occ.counts().to_vec();
            counts.extend([0, 0]);
            assert_eq!(t.amplitude(&counts), *amp);
        }

        let pdc2 = pdc.relabel(&[2, 3]).unwrap();
        let both = tensor(&pdc, &pdc2).unwrap();
        let expected = 1.0 / 0.1f64.cosh().powi(4);
        assert!((both.amplitude(&[0; 8]).re - expected).abs() < 1e-15);
        assert!(both.norm_deficit() >= pdc.norm_deficit());

        assert!(matches!(tensor(&pdc, &pdc), Err(Error::ModeOverlap(_))));
    }

    #[test]
    fn relabel_reorders_entries() {
        let s = FockState::from_amplitudes(&[0, 1], 2, [(vec![1, 0, 0, 2], c(1.0, 0.0))]).unwrap();
        let r = s.relabel(&[5, 3]).unwrap();
        assert_eq!(r.modes(), &[3, 5]);
        assert_eq!(r.amplitude(&[0, 2, 1, 0]), c(1.0, 0.0));
    }

    #[test]
    fn beam_splitter_examples() {
        let vac = FockState::vacuum(&[0, 1], 3).unwrap();
        let out = apply_beam_splitter(&vac, (0, 1)).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out.amplitude(&[0; 4]) - c(1.0, 0.0)).norm() < 1e-15);

        let single =
            FockState::from_amplitudes(&[0, 1], 3, [(vec![1, 0, 0, 0], c(1.0, 0.0))]).unwrap();
        let out = apply_beam_splitter(&single, (0, 1)).unwrap();
        let d = outer_count_distribution(&out, 0, 1).unwrap();
        assert!((d[&PhotonCountPattern::new(1, 0, 0, 0)] - 0.5).abs() < 1e-15);
        assert!((d[&PhotonCountPattern::new(0, 0, 0, 1)] - 0.5).abs() < 1e-15);

        // Hong-Ou-Mandel: |1_H>|1_H> -> (|2,0> + |0,2>) up to phase, no coincidence.
        let hom =
            FockState::from_amplitudes(&[0, 1], 3, [(vec![1, 0, 1, 0], c(1.0, 0.0))]).unwrap();
        let out = apply_beam_splitter(&hom, (0, 1)).unwrap();
        assert_eq!(out.amplitude(&[1, 0, 1, 0]), c(0.0, 0.0));
        assert!((out.amplitude(&[2, 0, 0, 0]).norm_sqr() - 0.5).abs() < 1e-15);
        assert!((out.amplitude(&[0, 0, 2, 0]).norm_sqr() - 0.5).abs() < 1e-15);
        assert_eq!(out.len(), 2);

        assert!(matches!(
            apply_beam_splitter(&vac, (0, 7)),
            Err(Error::InvalidMode { mode: 7 })
        ));
    }

    #[test]
    fn beam_splitter_overflow_goes_to_deficit() {
        let s = FockState::from_amplitudes(&[0, 1], 1, [(vec![1, 0, 1, 0], c(1.0, 0.0))]).unwrap();
        let out = apply_beam_splitter(&s, (0, 1)).unwrap();
        assert!(out.is_empty());
        assert!((out.norm_deficit() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rotator_examples() {
        let s = pdc_state(0.2, 2).unwrap();
        let same = apply_polarization_rotator(&s, 0, 0.0).unwrap();
        assert_eq!(same.len(), s.len());
        for (occ, amp) in s.amplitudes() {
            assert!((same.amplitude(occ.counts()) - amp).norm() < 1e-15);
        }

        let h = FockState::from_amplitudes(&[0], 2, [(vec![1, 0], c(1.0, 0.0))]).unwrap();
        let v = apply_polarization_rotator(&h, 0, PI).unwrap();
        assert!((v.amplitude(&[0, 1]).norm() - 1.0).abs() < 1e-15);
        assert!(v.amplitude(&[1, 0]).norm() < 1e-15);

        let half = apply_polarization_rotator(&h, 0, PI / 2.0).unwrap();
        assert!((half.amplitude(&[1, 0]).norm_sqr() - 0.5).abs() < 1e-15);
        assert!((half.amplitude(&[0, 1]).norm_sqr() - 0.5).abs() < 1e-15);

        assert!(apply_polarization_rotator(&h, 3, 0.3).is_err());
    }

    #[test]
    fn unitaries_preserve_norm_plus_deficit() {
        let a = pdc_state(0.3, 3).unwrap();
        let b = a.relabel(&[2, 3]).unwrap();
        let s = tensor(&a, &b).unwrap().with_cap(6).unwrap();
        let s = apply_beam_splitter(&s, (1, 2)).unwrap();
        assert!((s.norm_sqr() + s.norm_deficit() - 1.0).abs() < 1e-12);
        let s = apply_polarization_rotator(&s, 0, 0.7).unwrap();
        let s = apply_polarization_rotator(&s, 3, -2.1).unwrap();
        assert!((s.norm_sqr() + s.norm_deficit() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let params = CircuitParams::new(0.0, PI / 2.0, PI / 2.0, 2).unwrap();
        let state = chain_state(&params, 1).unwrap();
        let p = project_inner(&state, (1, 2), PhotonCountPattern::VACUUM).unwrap();
        assert!((p.probability - 1.0).abs() < 1e-15);
        assert!((p.outer.amplitude(&[0; 4]).norm() - 1.0).abs() < 1e-15);

        let p = project_inner(&state, (1, 2), PhotonCountPattern::new(1, 0, 1, 0)).unwrap();
        assert!(p.is_null());
        assert!(p.outer.is_empty());

        assert!(matches!(
            project_inner(&state, (1, 2), PhotonCountPattern::new(0, 0, 99, 0)),
            Err(Error::TruncationOverflow { index: 2, .. })
        ));
    }

    #[test]
    fn projector_completeness() {
        let params = CircuitParams::new(0.1, PI / 2.0, PI / 2.0, 3).unwrap();
        let state = chain_state(&params, 1).unwrap();
        let parts = partition_stations(&state, &[(1, 2)], None).unwrap();
        let total: f64 = parts.values().map(|s| s.norm_sqr()).sum();
        assert!((total + state.norm_deficit() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn perfect_low_chi_swap_heralds_correlated_pairs() {
        let params = CircuitParams::new(1e-3, PI / 2.0, PI / 2.0, 2).unwrap();
        let out =
            oracle_single_swap(&params, &DetectorParams::perfect(), ClickPattern::PSI).unwrap();
        let t = &out.table;
        // Half of the heralds come from a double pair in one source, which leaves
        // one outer side empty; among two-sided coincidences only the
        // correlated patterns survive.
        let q1010 = t.q(ClickPattern::PSI);
        let q0101 = t.q("0101".parse().unwrap());
        assert!((q1010 - 0.25).abs() < 1e-4, "{q1010}");
        assert!((q0101 - 0.25).abs() < 1e-4, "{q0101}");
        assert!(t.q_min < 1e-5 * t.q_max);
    }

    #[test]
    fn outer_photons_match_inner_photons_per_polarization() {
        let params = CircuitParams::new(0.1, 0.0, 0.0, 2).unwrap();
        let out =
            oracle_single_swap(&params, &DetectorParams::perfect(), ClickPattern::PSI).unwrap();
        for (counts, p) in &out.outer_counts {
            if *p > 0.0 {
                let [i, j, k, l] = counts.0;
                assert!(i + l >= 1 && j + k >= 1, "{counts}");
            }
        }
        assert_eq!(out.table.q("0000".parse().unwrap()), 0.0);
    }

    #[test]
    fn outer_distribution_is_two_pi_periodic() {
        let d = DetectorParams::effective(0.5, 1e-5).unwrap();
        let a = oracle_single_swap(
            &CircuitParams::new(0.2, 0.4, 1.3, 2).unwrap(),
            &d,
            ClickPattern::PSI,
        )
        .unwrap();
        let b = oracle_single_swap(
            &CircuitParams::new(0.2, 0.4 + 2.0 * PI, 1.3 - 2.0 * PI, 2).unwrap(),
            &d,
            ClickPattern::PSI,
        )
        .unwrap();
        for (k, v) in &a.table.q_values {
            assert!((v - b.table.q_values[k]).abs() < 1e-12);
        }
    }
}
