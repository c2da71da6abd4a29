//! Closed-form evaluation of a chain of entanglement swaps.
//!
//! The optical state factorizes into two polarization sectors. Within one
//! sector the only free variables are the photon numbers `c_s` emitted by
//! each source, linked by photon-number conservation at every station. The
//! conditional density of the two outer modes, summed over all inner count
//! patterns weighted by the detector likelihoods, is therefore a product of
//! small transfer matrices indexed by `(c, c')` pairs:
//! `M = D_0 S_0 D_1 S_1 ... S_{2N-2} D_{2N-1}` with diagonal source factors
//! `D` and station factors `S` built from [`omega`].
//!
//! Mode and detector ordering follow [`crate::fock`]: stations are listed
//! from A to B, and the outer pattern is (A/P1, A/P2, B/P2, B/P1).

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{ClickPattern, DetectorParams, PhotonCountPattern};
use crate::error::{check_finite, Error, Result};
use crate::numeric::{binomial_exact, CompensatedSum, FactorialTable};

pub const DEFAULT_TRUNCATION: usize = 3;

/// Largest truncation accepted by the closed form.
pub const MAX_TRUNCATION: usize = 12;

/// Required `|V(t) - V(t+1)|` for a truncation to count as converged.
pub const CERTIFY_TOLERANCE: f64 = 1e-6;

/// `sum_g C(mu+lambda, g) C(i+l-mu-lambda, i-g) (-1)^(mu+lambda-g)`.
///
/// Binomials with an impossible lower index vanish, so the value depends on
/// `mu + lambda` only.
pub fn omega(mu: usize, lambda: usize, i: usize, l: usize) -> i128 {
    let p = (mu + lambda) as i64;
    let rest = (i + l) as i64 - p;
    let mut acc: i128 = 0;
    for g in 0..=p.min(i as i64) {
        let term = binomial_exact(p, g) * binomial_exact(rest, i as i64 - g);
        if (p - g) % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    acc
}

/// Click patterns at every station of a chain, listed from A to B.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ChainClickPattern(Vec<ClickPattern>);

impl ChainClickPattern {
    pub fn new(stations: Vec<ClickPattern>) -> Result<Self> {
        if stations.len().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "a chain needs an odd number of stations, got {}",
                stations.len()
            )));
        }
        Ok(Self(stations))
    }

    /// The same pattern at all `2N - 1` stations.
    pub fn uniform(n_swaps: usize, pattern: ClickPattern) -> Result<Self> {
        if n_swaps == 0 {
            return Err(Error::Domain {
                name: "n_swaps",
                value: 0.0,
                reason: "at least one swap is required",
            });
        }
        Ok(Self(vec![pattern; 2 * n_swaps - 1]))
    }

    pub fn stations(&self) -> &[ClickPattern] {
        &self.0
    }

    pub fn n_swaps(&self) -> usize {
        self.0.len().div_ceil(2)
    }
}

impl fmt::Display for ChainClickPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, p) in self.0.iter().enumerate() {
            if n > 0 {
                f.write_str("|")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl FromStr for ChainClickPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let stations = s
            .split(['|', ';'])
            .map(str::parse)
            .collect::<Result<Vec<ClickPattern>>>()?;
        Self::new(stations)
    }
}

impl TryFrom<String> for ChainClickPattern {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ChainClickPattern> for String {
    fn from(p: ChainClickPattern) -> String {
        p.to_string()
    }
}

/// Everything needed to evaluate one chain configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_swaps: usize,
    pub chi: f64,
    /// Effective efficiency of every detector.
    pub eta: f64,
    pub dark: f64,
    pub delta_a: f64,
    pub delta_b: f64,
    pub inner_pattern: ChainClickPattern,
    /// Bound on every ideal inner photon count.
    pub truncation: usize,
}

impl ChainConfig {
    /// Chain heralded by (1010) at every station, rotators at `pi/2`.
    pub fn new(n_swaps: usize, chi: f64, eta: f64, dark: f64) -> Result<Self> {
        let config = Self {
            n_swaps,
            chi,
            eta,
            dark,
            delta_a: FRAC_PI_2,
            delta_b: FRAC_PI_2,
            inner_pattern: ChainClickPattern::uniform(n_swaps, ClickPattern::PSI)?,
            truncation: DEFAULT_TRUNCATION,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_angles(mut self, delta_a: f64, delta_b: f64) -> Self {
        self.delta_a = delta_a;
        self.delta_b = delta_b;
        self
    }

    pub fn with_truncation(mut self, truncation: usize) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn with_inner_pattern(mut self, pattern: ChainClickPattern) -> Self {
        self.inner_pattern = pattern;
        self
    }

    pub fn detector(&self) -> Result<DetectorParams> {
        DetectorParams::effective(self.eta, self.dark)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_swaps == 0 {
            return Err(Error::Domain {
                name: "n_swaps",
                value: 0.0,
                reason: "at least one swap is required",
            });
        }
        check_finite("chi", self.chi)?;
        if self.chi < 0.0 {
            return Err(Error::Domain {
                name: "chi",
                value: self.chi,
                reason: "must be non-negative",
            });
        }
        check_finite("delta_a", self.delta_a)?;
        check_finite("delta_b", self.delta_b)?;
        self.detector()?;
        if self.inner_pattern.stations().len() != 2 * self.n_swaps - 1 {
            return Err(Error::Config(format!(
                "{} swaps need {} station patterns, got {}",
                self.n_swaps,
                2 * self.n_swaps - 1,
                self.inner_pattern.stations().len()
            )));
        }
        if self.truncation == 0 || self.truncation > MAX_TRUNCATION {
            return Err(Error::Domain {
                name: "truncation",
                value: self.truncation as f64,
                reason: "must lie in 1..=12",
            });
        }
        Ok(())
    }

    /// Largest outer photon number on one side, `4 * truncation`.
    pub fn outer_limit(&self) -> usize {
        4 * self.truncation
    }
}

/// Outer threshold-outcome probabilities and the derived fringe contrast.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidenceTable {
    pub q_values: BTreeMap<ClickPattern, f64>,
    /// Correlated sum `Q(1010) + Q(0101)`.
    pub q_max: f64,
    /// Anti-correlated sum `Q(1001) + Q(0110)`.
    pub q_min: f64,
    /// `None` when `q_max + q_min == 0`.
    pub visibility: Option<f64>,
    /// Set when rounding pushed the raw contrast outside `[-1, 1]`.
    pub clamped: bool,
}

pub const CORRELATED: [ClickPattern; 2] = [
    ClickPattern::from_bits([true, false, true, false]),
    ClickPattern::from_bits([false, true, false, true]),
];

pub const ANTI_CORRELATED: [ClickPattern; 2] = [
    ClickPattern::from_bits([true, false, false, true]),
    ClickPattern::from_bits([false, true, true, false]),
];

impl CoincidenceTable {
    pub fn new(q_values: BTreeMap<ClickPattern, f64>) -> Self {
        let get = |p: &ClickPattern| q_values.get(p).copied().unwrap_or(0.0);
        let q_max = CORRELATED.iter().map(get).sum();
        let q_min = ANTI_CORRELATED.iter().map(get).sum();
        let (visibility, clamped) = match contrast(q_max, q_min) {
            Some((v, c)) => (Some(v), c),
            None => (None, false),
        };
        Self {
            q_values,
            q_max,
            q_min,
            visibility,
            clamped,
        }
    }

    pub fn q(&self, pattern: ClickPattern) -> f64 {
        self.q_values.get(&pattern).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.q_values
            .values()
            .copied()
            .collect::<CompensatedSum>()
            .value()
    }
}

/// `(a - b) / (a + b)` clamped to `[-1, 1]`, with a flag when clamping bit.
fn contrast(q_max: f64, q_min: f64) -> Option<(f64, bool)> {
    let sum = q_max + q_min;
    if sum.is_nan() || sum <= 0.0 {
        return None;
    }
    let v = (q_max - q_min) / sum;
    let clamped = v.clamp(-1.0, 1.0);
    Some((clamped, clamped != v))
}

/// Dense complex matrix over `(c, c')` pair indices.
#[derive(Debug, Clone)]
struct PairMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl PairMatrix {
    fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.dim + c]
    }

    fn mul(&self, other: &Self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            let row = &self.data[r * n..(r + 1) * n];
            let dst = &mut out.data[r * n..(r + 1) * n];
            for (k, &a) in row.iter().enumerate() {
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let src = &other.data[k * n..(k + 1) * n];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        out
    }

    fn scale_columns(&mut self, factors: &[Complex64]) {
        let n = self.dim;
        for row in self.data.chunks_mut(n) {
            for (x, f) in row.iter_mut().zip(factors) {
                *x *= f;
            }
        }
    }
}

/// Transfer matrices of both polarization sectors for one configuration.
#[derive(Debug, Clone)]
struct Sectors {
    /// Largest photon number per source and sector, `2t`.
    c_max: usize,
    p1: PairMatrix,
    p2: PairMatrix,
    evidence: f64,
}

impl Sectors {
    fn side(&self) -> usize {
        self.c_max + 1
    }

    fn pair(&self, a: usize, b: usize) -> usize {
        a * self.side() + b
    }
}

/// Real beam-splitter amplitudes `T(i, l; a, b)` for inputs `a` (A side) and
/// `b` (B side) and outputs `i` (A side) and `l = a + b - i`.
struct BeamSplitterTable {
    c_max: usize,
    t: usize,
    values: Vec<f64>,
}

impl BeamSplitterTable {
    fn new(t: usize, facts: &FactorialTable) -> Self {
        let c_max = 2 * t;
        let side = c_max + 1;
        let mut values = vec![0.0; side * side * (t + 1)];
        for a in 0..=c_max {
            for b in 0..=c_max {
                let n = a + b;
                for i in 0..=t.min(n) {
                    let l = n - i;
                    if l > t {
                        continue;
                    }
                    let w = omega(a, 0, i, l) as f64;
                    values[(a * side + b) * (t + 1) + i] =
                        w * 0.5f64.powf(n as f64 / 2.0) * facts.sqrt_fact(i) * facts.sqrt_fact(l)
                            / (facts.sqrt_fact(a) * facts.sqrt_fact(b));
                }
            }
        }
        Self { c_max, t, values }
    }

    fn get(&self, a: usize, b: usize, i: usize) -> f64 {
        self.values[(a * (self.c_max + 1) + b) * (self.t + 1) + i]
    }
}

/// `S[(a,a'),(b,b')] = sum_i Lx(i) Ly(l) T(i,l;a,b) T(i,l;a',b')`.
fn station_matrix(table: &BeamSplitterTable, lx: &[f64], ly: &[f64]) -> PairMatrix {
    let (c_max, t) = (table.c_max, table.t);
    let side = c_max + 1;
    let mut s = PairMatrix::zeros(side * side);
    for a in 0..=c_max {
        for b in 0..=c_max {
            let n = a + b;
            let lo = n.saturating_sub(t);
            let hi = t.min(n);
            if lo > hi {
                continue;
            }
            for a2 in n.saturating_sub(c_max)..=c_max.min(n) {
                let b2 = n - a2;
                let mut acc = 0.0;
                for i in lo..=hi {
                    acc += lx[i] * ly[n - i] * table.get(a, b, i) * table.get(a2, b2, i);
                }
                if acc != 0.0 {
                    s.data[(a * side + a2) * s.dim + (b * side + b2)] = Complex64::new(acc, 0.0);
                }
            }
        }
    }
    s
}

fn sectors(config: &ChainConfig) -> Result<Sectors> {
    config.validate()?;
    let t = config.truncation;
    let c_max = 2 * t;
    let side = c_max + 1;
    let detector = config.detector()?;
    let facts = FactorialTable::new(4 * t);
    let table = BeamSplitterTable::new(t, &facts);

    let sech = 1.0 / config.chi.cosh();
    let it = Complex64::new(0.0, config.chi.tanh());
    let f: Vec<Complex64> = (0..=c_max).map(|c| it.powi(c as i32) * sech).collect();
    let source: Vec<Complex64> = (0..side * side)
        .map(|idx| f[idx / side] * f[idx % side].conj())
        .collect();

    let mut cache: BTreeMap<(bool, bool), PairMatrix> = BTreeMap::new();
    let mut station = |x: bool, y: bool| -> PairMatrix {
        cache
            .entry((x, y))
            .or_insert_with(|| {
                station_matrix(
                    &table,
                    &detector.likelihoods(x, t),
                    &detector.likelihoods(y, t),
                )
            })
            .clone()
    };

    let mut start = PairMatrix::zeros(side * side);
    for (idx, v) in source.iter().enumerate() {
        start.data[idx * start.dim + idx] = *v;
    }
    let (mut p1, mut p2) = (start.clone(), start);
    for clicks in config.inner_pattern.stations() {
        let [q, r, s, tt] = clicks.bits();
        p1 = p1.mul(&station(q, tt));
        p1.scale_columns(&source);
        p2 = p2.mul(&station(r, s));
        p2.scale_columns(&source);
    }

    let trace = |m: &PairMatrix| -> f64 {
        let mut acc = CompensatedSum::new();
        for y in 0..side {
            for x in 0..side {
                acc.add(m.at(y * side + y, x * side + x).re);
            }
        }
        acc.value()
    };
    let evidence = trace(&p1) * trace(&p2);
    let describe = || config.inner_pattern.to_string();
    if evidence == 0.0 {
        return Err(Error::ImpossibleEvidence(describe()));
    }
    if evidence.is_nan() || evidence < f64::MIN_POSITIVE {
        return Err(Error::EvidenceUnderflow(evidence));
    }
    Ok(Sectors {
        c_max,
        p1,
        p2,
        evidence,
    })
}

/// Rotator amplitudes `<o1, n - o1 | U(delta) | p1, n - p1>` for `n <= n_max`.
struct RotatorTable {
    values: Vec<Vec<Vec<Complex64>>>,
}

impl RotatorTable {
    fn new(delta: f64, n_max: usize, facts: &FactorialTable) -> Self {
        let (s, c) = (delta / 2.0).sin_cos();
        let is = Complex64::new(0.0, s);
        let cpow: Vec<f64> = (0..=2 * n_max).map(|k| c.powi(k as i32)).collect();
        let ispow: Vec<Complex64> = (0..=2 * n_max).map(|k| is.powi(k as i32)).collect();
        let values = (0..=n_max)
            .map(|n| {
                (0..=n)
                    .map(|o1| {
                        (0..=n)
                            .map(|p1| {
                                let (o2, p2) = (n - o1, n - p1);
                                let mut acc = Complex64::new(0.0, 0.0);
                                for beta in 0..=p2.min(o1) {
                                    let alpha = o1 - beta;
                                    if alpha > p1 {
                                        continue;
                                    }
                                    let w = (binomial_exact(p2 as i64, beta as i64)
                                        * binomial_exact(p1 as i64, alpha as i64))
                                        as f64;
                                    acc += ispow[p1 - alpha + beta] * (w * cpow[alpha + p2 - beta]);
                                }
                                acc * (facts.sqrt_fact(o1) * facts.sqrt_fact(o2)
                                    / (facts.sqrt_fact(p1) * facts.sqrt_fact(p2)))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { values }
    }

    fn get(&self, n: usize, o1: usize, p1: usize) -> Complex64 {
        self.values[n][o1][p1]
    }
}

/// Outer effect `E[y][y'] = sum_o w(o) R(o;y) conj(R(o;y'))` at fixed photon
/// number `n`, restricted to feasible first-polarization counts.
fn outer_effect(
    rot: &RotatorTable,
    n: usize,
    c_max: usize,
    weight: impl Fn(usize) -> f64,
) -> Vec<Complex64> {
    let side = c_max + 1;
    let mut e = vec![Complex64::new(0.0, 0.0); side * side];
    let lo = n.saturating_sub(c_max);
    let hi = n.min(c_max);
    if lo > hi {
        return e;
    }
    for o in 0..=n {
        let w = weight(o);
        if w == 0.0 {
            continue;
        }
        for y in lo..=hi {
            let ry = rot.get(n, o, y) * w;
            for y2 in lo..=hi {
                e[y * side + y2] += ry * rot.get(n, o, y2).conj();
            }
        }
    }
    e
}

/// `sum E_A[y,y'] E_B[x,x'] M1[(y,y'),(x,x')] M2[(n-y,n-y'),(m-x,m-x')]`.
fn contract(sec: &Sectors, n: usize, m: usize, ea: &[Complex64], eb: &[Complex64]) -> f64 {
    let c_max = sec.c_max;
    let side = sec.side();
    let (ylo, yhi) = (n.saturating_sub(c_max), n.min(c_max));
    let (xlo, xhi) = (m.saturating_sub(c_max), m.min(c_max));
    if ylo > yhi || xlo > xhi {
        return 0.0;
    }
    let mut acc = CompensatedSum::new();
    for y in ylo..=yhi {
        for y2 in ylo..=yhi {
            let a = ea[y * side + y2];
            if a.re == 0.0 && a.im == 0.0 {
                continue;
            }
            let r1 = sec.pair(y, y2);
            let r2 = sec.pair(n - y, n - y2);
            let mut inner = Complex64::new(0.0, 0.0);
            for x in xlo..=xhi {
                for x2 in xlo..=xhi {
                    let b = eb[x * side + x2];
                    if b.re == 0.0 && b.im == 0.0 {
                        continue;
                    }
                    inner +=
                        b * sec.p1.at(r1, sec.pair(x, x2)) * sec.p2.at(r2, sec.pair(m - x, m - x2));
                }
            }
            acc.add((a * inner).re);
        }
    }
    acc.value()
}

struct Evaluator {
    sectors: Sectors,
    rot_a: RotatorTable,
    rot_b: RotatorTable,
    detector: DetectorParams,
    outer_limit: usize,
}

impl Evaluator {
    fn new(config: &ChainConfig) -> Result<Self> {
        let sectors = sectors(config)?;
        let outer_limit = config.outer_limit();
        let facts = FactorialTable::new(outer_limit);
        Ok(Self {
            rot_a: RotatorTable::new(config.delta_a, outer_limit, &facts),
            rot_b: RotatorTable::new(config.delta_b, outer_limit, &facts),
            detector: config.detector()?,
            sectors,
            outer_limit,
        })
    }

    /// Unnormalized `P(i'j'k'l')` for an outer pattern within the limit.
    fn ideal(&self, counts: PhotonCountPattern) -> f64 {
        let [i, j, k, l] = counts.0;
        let (n, m) = (i + j, k + l);
        let c_max = self.sectors.c_max;
        let ea = outer_effect(&self.rot_a, n, c_max, |o| if o == i { 1.0 } else { 0.0 });
        let eb = outer_effect(&self.rot_b, m, c_max, |o| if o == l { 1.0 } else { 0.0 });
        contract(&self.sectors, n, m, &ea, &eb)
    }

    /// Normalized `Q(q'r's't')` for the requested outer threshold patterns.
    fn coincidences(&self, patterns: &[ClickPattern]) -> BTreeMap<ClickPattern, f64> {
        let c_max = self.sectors.c_max;
        let limit = self.outer_limit;
        let effects = |rot: &RotatorTable, first: bool, second: bool| -> Vec<Vec<Complex64>> {
            (0..=limit)
                .map(|n| {
                    outer_effect(rot, n, c_max, |o| {
                        self.detector.outcome(first, o) * self.detector.outcome(second, n - o)
                    })
                })
                .collect()
        };
        let mut a_side = BTreeMap::new();
        let mut b_side = BTreeMap::new();
        for p in patterns {
            let [q, r, s, t] = p.bits();
            // A: first polarization is detector q', second r'.
            a_side
                .entry((q, r))
                .or_insert_with(|| effects(&self.rot_a, q, r));
            // B: first polarization is detector t', second s'.
            b_side
                .entry((t, s))
                .or_insert_with(|| effects(&self.rot_b, t, s));
        }
        let values: Vec<f64> = patterns
            .par_iter()
            .map(|p| {
                let [q, r, s, t] = p.bits();
                let ea = &a_side[&(q, r)];
                let eb = &b_side[&(t, s)];
                let mut acc = CompensatedSum::new();
                for (n, en) in ea.iter().enumerate().take(limit + 1) {
                    for (m, em) in eb.iter().enumerate().take(limit + 1) {
                        acc.add(contract(&self.sectors, n, m, en, em));
                    }
                }
                acc.value() / self.sectors.evidence
            })
            .collect();
        patterns.iter().copied().zip(values).collect()
    }
}

/// `P(i'j'k'l' | inner clicks)` for every outer pattern with at most
/// `4 * truncation` photons on each side, plus the evidence of the inner
/// clicks.
pub fn conditional_outer_counts(config: &ChainConfig) -> Result<BTreeMap<PhotonCountPattern, f64>> {
    let ev = Evaluator::new(config)?;
    let limit = ev.outer_limit;
    let patterns: Vec<PhotonCountPattern> = (0..=limit)
        .flat_map(|n| (0..=limit).flat_map(move |m| side_patterns(n, m)))
        .collect();
    let values: Vec<f64> = patterns
        .par_iter()
        .map(|&p| ev.ideal(p) / ev.sectors.evidence)
        .collect();
    Ok(patterns.into_iter().zip(values).collect())
}

fn side_patterns(n: usize, m: usize) -> impl Iterator<Item = PhotonCountPattern> {
    (0..=n).flat_map(move |i| (0..=m).map(move |l| PhotonCountPattern::new(i, n - i, m - l, l)))
}

/// `P(i'j'k'l' | inner clicks)` for one outer pattern.
pub fn outer_count_probability(config: &ChainConfig, counts: PhotonCountPattern) -> Result<f64> {
    config.validate()?;
    let limit = config.outer_limit();
    counts.check_truncation(limit)?;
    let [i, j, k, l] = counts.0;
    if i + j > limit {
        return Err(Error::TruncationOverflow {
            index: 1,
            count: i + j,
            truncation: limit,
        });
    }
    if k + l > limit {
        return Err(Error::TruncationOverflow {
            index: 2,
            count: k + l,
            truncation: limit,
        });
    }
    let ev = Evaluator::new(config)?;
    Ok(ev.ideal(counts) / ev.sectors.evidence)
}

/// Probability that the inner stations show the configured pattern, with
/// every inner count within the truncation.
pub fn inner_evidence(config: &ChainConfig) -> Result<f64> {
    Ok(sectors(config)?.evidence)
}

/// `Q(q'r's't' | inner clicks)` for one outer threshold pattern.
pub fn coincidence_q(config: &ChainConfig, outer: ClickPattern) -> Result<f64> {
    Ok(coincidence_table(config)?.q(outer))
}

/// All sixteen outer threshold probabilities at the configured angles.
pub fn coincidence_table(config: &ChainConfig) -> Result<CoincidenceTable> {
    let all: Vec<ClickPattern> = ClickPattern::all().collect();
    Ok(CoincidenceTable::new(
        Evaluator::new(config)?.coincidences(&all),
    ))
}

/// Correlated and anti-correlated sums at the configured angles.
pub fn correlation_sums(config: &ChainConfig) -> Result<(f64, f64)> {
    let patterns = [
        CORRELATED[0],
        CORRELATED[1],
        ANTI_CORRELATED[0],
        ANTI_CORRELATED[1],
    ];
    let q = Evaluator::new(config)?.coincidences(&patterns);
    Ok((
        q[&CORRELATED[0]] + q[&CORRELATED[1]],
        q[&ANTI_CORRELATED[0]] + q[&ANTI_CORRELATED[1]],
    ))
}

/// How `q_max` and `q_min` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VisibilityMode {
    /// Correlated and anti-correlated sums at the configured angles.
    #[default]
    FixedAngles,
    /// Maximum and minimum of the correlated sum over `delta_b`.
    ExtremizeDeltaB,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Visibility {
    pub value: f64,
    pub q_max: f64,
    pub q_min: f64,
    pub clamped: bool,
    /// Angles at which `q_max` and `q_min` were found.
    pub delta_b_max: f64,
    pub delta_b_min: f64,
}

/// Visibility with the default fixed-angle convention.
pub fn visibility(config: &ChainConfig) -> Result<f64> {
    Ok(visibility_with(config, VisibilityMode::FixedAngles)?.value)
}

pub fn visibility_with(config: &ChainConfig, mode: VisibilityMode) -> Result<Visibility> {
    let (q_max, q_min, delta_b_max, delta_b_min) = match mode {
        VisibilityMode::FixedAngles => {
            let (q_max, q_min) = correlation_sums(config)?;
            (q_max, q_min, config.delta_b, config.delta_b)
        }
        VisibilityMode::ExtremizeDeltaB => extremize_delta_b(config)?,
    };
    let (value, clamped) = contrast(q_max, q_min).ok_or(Error::DegenerateVisibility)?;
    Ok(Visibility {
        value,
        q_max,
        q_min,
        clamped,
        delta_b_max,
        delta_b_min,
    })
}

fn correlated_sum(config: &ChainConfig, delta_b: f64) -> Result<f64> {
    Ok(correlation_sums(&config.clone().with_angles(config.delta_a, delta_b))?.0)
}

fn extremize_delta_b(config: &ChainConfig) -> Result<(f64, f64, f64, f64)> {
    const GRID: usize = 72;
    let step = 2.0 * std::f64::consts::PI / GRID as f64;
    let grid: Vec<f64> = (0..GRID)
        .map(|k| -std::f64::consts::PI + k as f64 * step)
        .collect();
    let values = grid
        .par_iter()
        .map(|&d| correlated_sum(config, d))
        .collect::<Result<Vec<f64>>>()?;
    let refine = |sign: f64| -> Result<(f64, f64)> {
        let best = (0..GRID)
            .max_by(|&a, &b| (sign * values[a]).total_cmp(&(sign * values[b])))
            .unwrap_or(0);
        golden_section(grid[best] - step, grid[best] + step, |d| {
            correlated_sum(config, d).map(|q| sign * q)
        })
        .map(|(d, q)| (d, sign * q))
    };
    let (d_max, q_max) = refine(1.0)?;
    let (d_min, q_min) = refine(-1.0)?;
    Ok((q_max, q_min, d_max, d_min))
}

/// Maximizes a unimodal function on `[lo, hi]`.
fn golden_section(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while hi - lo > 1e-9 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1)?;
        }
    }
    let x = (lo + hi) / 2.0;
    Ok((x, f(x)?))
}

/// Outcome of re-running a configuration one truncation step higher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationCertificate {
    pub truncation: usize,
    pub visibility: f64,
    pub visibility_next: f64,
    pub deficit: f64,
    pub certified: bool,
}

pub fn certify_truncation(
    config: &ChainConfig,
    mode: VisibilityMode,
) -> Result<TruncationCertificate> {
    let v = visibility_with(config, mode)?.value;
    let next = config.clone().with_truncation(config.truncation + 1);
    let v_next = visibility_with(&next, mode)?.value;
    let deficit = (v - v_next).abs();
    Ok(TruncationCertificate {
        truncation: config.truncation,
        visibility: v,
        visibility_next: v_next,
        deficit,
        certified: deficit < CERTIFY_TOLERANCE,
    })
}
