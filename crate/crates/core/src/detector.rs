//! Threshold detectors with finite efficiency and dark counts.
//!
//! A detector facing `i` photons stays silent with probability
//! `(1 - dark) * (1 - eta * (1 - dark))^i` and clicks otherwise. Detectors are
//! independent, so a four-detector outcome is the product of four marginals.
//! The `(1 - dark)` factor inside the bracket is kept as written; it differs
//! from the more common `(1 - dark) * (1 - eta)^i` by a term of order
//! `eta * dark`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::numeric::CompensatedSum;

/// Detector efficiency and dark-count probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Intrinsic detector efficiency.
    pub eta0: f64,
    /// Channel transmission in front of the detector.
    pub eta_t: f64,
    /// Dark-count probability per detection window.
    pub dark: f64,
    /// Effective efficiency, always `eta0 * eta_t`.
    pub eta: f64,
}

impl DetectorParams {
    pub fn new(eta0: f64, eta_t: f64, dark: f64) -> Result<Self> {
        check_unit("eta0", eta0)?;
        check_unit("eta_t", eta_t)?;
        check_dark(dark)?;
        Ok(Self {
            eta0,
            eta_t,
            dark,
            eta: eta0 * eta_t,
        })
    }

    /// Detector described directly by its effective efficiency.
    pub fn effective(eta: f64, dark: f64) -> Result<Self> {
        Self::new(eta, 1.0, dark)
    }

    pub fn perfect() -> Self {
        Self {
            eta0: 1.0,
            eta_t: 1.0,
            dark: 0.0,
            eta: 1.0,
        }
    }

    /// `P(q = 0 | i)`.
    pub fn no_click(&self, photons: usize) -> f64 {
        no_click_unchecked(photons, self.eta, self.dark)
    }

    /// `P(q | i)` for a binary outcome `q`.
    pub fn outcome(&self, click: bool, photons: usize) -> f64 {
        let (silent, fired) = outcomes_unchecked(photons, self.eta, self.dark);
        if click {
            fired
        } else {
            silent
        }
    }

    /// Likelihood table `P(q | i)` for `i = 0..=max_photons`.
    pub fn likelihoods(&self, click: bool, max_photons: usize) -> Vec<f64> {
        (0..=max_photons).map(|i| self.outcome(click, i)).collect()
    }
}

fn check_dark(dark: f64) -> Result<()> {
    if (0.0..1.0).contains(&dark) {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "dark",
            value: dark,
            reason: "must lie in [0, 1)",
        })
    }
}

/// `(P(q=0|i), P(q=1|i))`. The smaller of the two is evaluated directly in
/// log space so tiny click probabilities keep full relative precision; the
/// other is its complement, which makes the pair sum to exactly one.
#[inline]
fn outcomes_unchecked(photons: usize, eta: f64, dark: f64) -> (f64, f64) {
    let mut log_silent = (-dark).ln_1p();
    if photons > 0 {
        log_silent += photons as f64 * (-eta * (1.0 - dark)).ln_1p();
    }
    if log_silent < -std::f64::consts::LN_2 {
        let silent = log_silent.exp();
        (silent, 1.0 - silent)
    } else {
        let fired = -log_silent.exp_m1();
        (1.0 - fired, fired)
    }
}

#[inline]
fn no_click_unchecked(photons: usize, eta: f64, dark: f64) -> f64 {
    outcomes_unchecked(photons, eta, dark).0
}

/// `P(q = 0 | i) = (1 - dark) * [1 - eta * (1 - dark)]^i`.
pub fn p_no_click(photons: usize, eta: f64, dark: f64) -> Result<f64> {
    check_unit("eta", eta)?;
    check_dark(dark)?;
    Ok(no_click_unchecked(photons, eta, dark))
}

/// `P(q = 1 | i) = 1 - P(q = 0 | i)`.
pub fn p_click(photons: usize, eta: f64, dark: f64) -> Result<f64> {
    check_unit("eta", eta)?;
    check_dark(dark)?;
    Ok(outcomes_unchecked(photons, eta, dark).1)
}

/// Binary outcomes `(q, r, s, t)` of four threshold detectors.
///
/// Within one station the detectors are ordered as (port 1 / first
/// polarization, port 1 / second polarization, port 2 / second polarization,
/// port 2 / first polarization). The outer pattern uses the same order with
/// A in place of port 1 and B in place of port 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClickPattern([bool; 4]);

impl ClickPattern {
    pub fn new(q: u8, r: u8, s: u8, t: u8) -> Result<Self> {
        let mut bits = [false; 4];
        for (slot, v) in bits.iter_mut().zip([q, r, s, t]) {
            *slot = match v {
                0 => false,
                1 => true,
                _ => {
                    return Err(Error::Domain {
                        name: "click",
                        value: v as f64,
                        reason: "threshold outcomes are 0 or 1",
                    })
                }
            };
        }
        Ok(Self(bits))
    }

    pub const fn from_bits(bits: [bool; 4]) -> Self {
        Self(bits)
    }

    /// The heralding pattern (1,0,1,0).
    pub const PSI: ClickPattern = ClickPattern([true, false, true, false]);

    pub fn bits(&self) -> [bool; 4] {
        self.0
    }

    pub fn clicked(&self, detector: usize) -> bool {
        self.0[detector]
    }

    pub fn any_click(&self) -> bool {
        self.0.iter().any(|&b| b)
    }

    /// All sixteen patterns in lexicographic order (0000, 0001, ..., 1111).
    pub fn all() -> impl Iterator<Item = ClickPattern> {
        (0u8..16).map(|n| ClickPattern([n & 8 != 0, n & 4 != 0, n & 2 != 0, n & 1 != 0]))
    }
}

impl fmt::Display for ClickPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{}", b as u8)?;
        }
        Ok(())
    }
}

impl FromStr for ClickPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits: Vec<u8> = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, ',' | ' '))
            .map(|c| c.to_digit(10).map(|d| d as u8).unwrap_or(u8::MAX))
            .collect();
        if digits.len() != 4 {
            return Err(Error::Config(format!(
                "click pattern `{s}` must have four entries"
            )));
        }
        ClickPattern::new(digits[0], digits[1], digits[2], digits[3])
    }
}

/// Ideal photon numbers `(i, j, k, l)` at four detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PhotonCountPattern(pub [usize; 4]);

impl PhotonCountPattern {
    pub const VACUUM: PhotonCountPattern = PhotonCountPattern([0; 4]);

    pub fn new(i: usize, j: usize, k: usize, l: usize) -> Self {
        Self([i, j, k, l])
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// Fails with the offending index if any count exceeds `truncation`.
    pub fn check_truncation(&self, truncation: usize) -> Result<()> {
        match self.0.iter().position(|&c| c > truncation) {
            Some(index) => Err(Error::TruncationOverflow {
                index,
                count: self.0[index],
                truncation,
            }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for PhotonCountPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [i, j, k, l] = self.0;
        write!(f, "({i},{j},{k},{l})")
    }
}

/// `P(qrst | ijkl) = P(q|i) P(r|j) P(s|k) P(t|l)`.
pub fn p_pattern(clicks: ClickPattern, counts: PhotonCountPattern, params: &DetectorParams) -> f64 {
    clicks
        .bits()
        .iter()
        .zip(counts.0)
        .map(|(&c, n)| params.outcome(c, n))
        .product()
}

/// Posterior over ideal photon-count patterns after observing clicks.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub probabilities: BTreeMap<PhotonCountPattern, f64>,
    /// `P(qrst) = sum_ijkl P(qrst | ijkl) prior(ijkl)`.
    pub evidence: f64,
}

/// Bayes inversion `P(ijkl | qrst) = P(qrst | ijkl) P(ijkl) / P(qrst)`.
///
/// The prior may carry less than unit mass (truncation deficit).
pub fn bayes_invert(
    prior: &BTreeMap<PhotonCountPattern, f64>,
    clicks: ClickPattern,
    params: &DetectorParams,
) -> Result<Posterior> {
    let (probabilities, evidence) = bayes_invert_with(
        prior,
        |counts| p_pattern(clicks, *counts, params),
        || clicks.to_string(),
    )?;
    Ok(Posterior {
        probabilities,
        evidence,
    })
}

/// Bayes inversion over an arbitrary hypothesis key with a caller-supplied
/// likelihood. Returns the posterior and the evidence.
pub fn bayes_invert_with<K: Ord + Clone>(
    prior: &BTreeMap<K, f64>,
    likelihood: impl Fn(&K) -> f64,
    describe: impl FnOnce() -> String,
) -> Result<(BTreeMap<K, f64>, f64)> {
    let mut joint = BTreeMap::new();
    let mut evidence = CompensatedSum::new();
    let mut any_support = false;
    for (key, &p) in prior {
        if p < 0.0 || !p.is_finite() {
            return Err(Error::Domain {
                name: "prior",
                value: p,
                reason: "prior probabilities must be finite and non-negative",
            });
        }
        let l = likelihood(key);
        if l > 0.0 && p > 0.0 {
            any_support = true;
        }
        let w = l * p;
        evidence.add(w);
        joint.insert(key.clone(), w);
    }
    let evidence = evidence.value();
    if !any_support {
        return Err(Error::ImpossibleEvidence(describe()));
    }
    if evidence.is_nan() || evidence < f64::MIN_POSITIVE {
        return Err(Error::EvidenceUnderflow(evidence));
    }
    for w in joint.values_mut() {
        *w /= evidence;
    }
    Ok((joint, evidence))
}

/// Threshold-outcome probabilities from a distribution over ideal counts:
/// `Q(q'r's't') = sum P(q'r's't' | i'j'k'l') P(i'j'k'l')`.
pub fn coincidences_from_counts(
    counts: &BTreeMap<PhotonCountPattern, f64>,
    params: &DetectorParams,
) -> BTreeMap<ClickPattern, f64> {
    ClickPattern::all()
        .map(|clicks| {
            let q = counts
                .iter()
                .map(|(c, p)| p_pattern(clicks, *c, params) * p)
                .collect::<CompensatedSum>()
                .value();
            (clicks, q)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn no_click_examples() {
        assert_eq!(p_no_click(0, 0.3, 0.0).unwrap(), 1.0);
        for i in 0..10 {
            assert_eq!(p_no_click(i, 0.0, 0.0).unwrap(), 1.0);
        }
        let p0 = p_no_click(1, 0.04, 1e-5).unwrap();
        // (1 - 1e-5) * (1 - 0.04 * (1 - 1e-5)) evaluated by hand
        assert!((p0 - 0.959_990_8).abs() < 1e-9, "{p0}");
        assert!((p_click(1, 0.04, 1e-5).unwrap() - 0.040_009_2).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(p_no_click(1, 1.5, 0.0).is_err());
        assert!(p_no_click(1, 0.5, 1.0).is_err());
        assert!(p_no_click(1, 0.5, -0.1).is_err());
        assert!(DetectorParams::new(0.5, 1.2, 0.0).is_err());
    }

    #[test]
    fn effective_efficiency_is_product() {
        let d = DetectorParams::new(0.7, 0.25, 1e-5).unwrap();
        assert_eq!(d.eta, 0.7 * 0.25);
    }

    #[test]
    fn pattern_products() {
        let perfect = DetectorParams::perfect();
        assert_eq!(
            p_pattern(
                ClickPattern::new(0, 0, 0, 0).unwrap(),
                PhotonCountPattern::VACUUM,
                &perfect
            ),
            1.0
        );
        assert_eq!(
            p_pattern(
                ClickPattern::new(1, 1, 1, 1).unwrap(),
                PhotonCountPattern::VACUUM,
                &perfect
            ),
            0.0
        );
        let d = DetectorParams::effective(0.04, 1e-5).unwrap();
        let p = p_pattern(
            ClickPattern::new(1, 0, 0, 0).unwrap(),
            PhotonCountPattern::new(1, 0, 0, 0),
            &d,
        );
        let expected = (1.0 - 0.959_990_8) * 0.99999f64.powi(3);
        assert!((p - expected).abs() < 1e-9);
    }

    #[test]
    fn click_pattern_parsing_and_order() {
        let p: ClickPattern = "1010".parse().unwrap();
        assert_eq!(p, ClickPattern::PSI);
        assert_eq!(p.to_string(), "1010");
        assert!("10102".parse::<ClickPattern>().is_err());
        assert!("1020".parse::<ClickPattern>().is_err());
        let all: Vec<String> = ClickPattern::all().map(|p| p.to_string()).collect();
        assert_eq!(all.len(), 16);
        assert_eq!(all[0], "0000");
        assert_eq!(all[10], "1010");
        assert_eq!(all[15], "1111");
    }

    #[test]
    fn bayes_examples() {
        let clicks0 = ClickPattern::new(0, 0, 0, 0).unwrap();
        let mut prior = BTreeMap::new();
        prior.insert(PhotonCountPattern::VACUUM, 1.0);
        let post = bayes_invert(
            &prior,
            clicks0,
            &DetectorParams::effective(0.3, 0.0).unwrap(),
        )
        .unwrap();
        assert_eq!(post.probabilities[&PhotonCountPattern::VACUUM], 1.0);

        let c1000 = ClickPattern::new(1, 0, 0, 0).unwrap();
        let mut prior = BTreeMap::new();
        prior.insert(PhotonCountPattern::VACUUM, 0.5);
        prior.insert(PhotonCountPattern::new(1, 0, 0, 0), 0.5);
        let post = bayes_invert(&prior, c1000, &DetectorParams::perfect()).unwrap();
        assert_eq!(
            post.probabilities[&PhotonCountPattern::new(1, 0, 0, 0)],
            1.0
        );
        assert_eq!(post.probabilities[&PhotonCountPattern::VACUUM], 0.0);

        // weights 1 - (1 - eta)^i at eta = 0.5: 0.5 and 0.75
        let mut prior = BTreeMap::new();
        prior.insert(PhotonCountPattern::new(1, 0, 0, 0), 0.5);
        prior.insert(PhotonCountPattern::new(2, 0, 0, 0), 0.5);
        let post =
            bayes_invert(&prior, c1000, &DetectorParams::effective(0.5, 0.0).unwrap()).unwrap();
        assert!((post.probabilities[&PhotonCountPattern::new(1, 0, 0, 0)] - 0.4).abs() < 1e-15);
        assert!((post.probabilities[&PhotonCountPattern::new(2, 0, 0, 0)] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn dark_counts_can_lower_click_probability_at_high_efficiency() {
        // d/d(dark) of (1-dark)(1-eta(1-dark))^i at dark=0 is (1-eta)^(i-1) (i eta + eta - 1).
        let (i, eta) = (4, 0.7);
        assert!(p_click(i, eta, 1e-3).unwrap() < p_click(i, eta, 0.0).unwrap());
        assert!(p_click(0, eta, 1e-3).unwrap() > p_click(0, eta, 0.0).unwrap());
    }

    #[test]
    fn tiny_click_probabilities_keep_precision() {
        let p = p_click(1, 1e-150, 0.0).unwrap();
        assert!((p / 1e-150 - 1.0).abs() < 1e-12);
        assert_eq!(p_click(3, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(p_click(0, 0.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn impossible_and_underflow_are_distinct() {
        let mut prior = BTreeMap::new();
        prior.insert(PhotonCountPattern::VACUUM, 1.0);
        let err = bayes_invert(&prior, ClickPattern::PSI, &DetectorParams::perfect()).unwrap_err();
        assert!(matches!(err, Error::ImpossibleEvidence(_)));

        let mut prior = BTreeMap::new();
        prior.insert(PhotonCountPattern::new(1, 0, 1, 0), 1e-200);
        let d = DetectorParams::effective(1e-150, 0.0).unwrap();
        let err = bayes_invert(&prior, ClickPattern::PSI, &d).unwrap_err();
        assert!(matches!(err, Error::EvidenceUnderflow(_)), "{err:?}");
    }

    fn count_pattern() -> impl Strategy<Value = PhotonCountPattern> {
        prop::array::uniform4(0usize..5).prop_map(PhotonCountPattern)
    }

    proptest! {
        #[test]
        fn outcome_probabilities_sum_to_one(i in 0usize..=50, eta in 0.0f64..=1.0, dark in 0.0f64..0.999) {
            let d = DetectorParams::effective(eta, dark).unwrap();
            prop_assert_eq!(d.outcome(false, i) + d.outcome(true, i), 1.0);
        }

        #[test]
        fn click_probability_monotone(i in 0usize..30, eta in 0.0f64..0.99, dark in 0.0f64..0.99,
                                      de in 0.0f64..0.01, dd in 0.0f64..0.009) {
            let base = p_click(i, eta, dark).unwrap();
            prop_assert!(p_click(i + 1, eta, dark).unwrap() >= base);
            prop_assert!(p_click(i, eta + de, dark).unwrap() >= base - 1e-15);
            // With dark counts also thinning the signal inside the bracket, the
            // click probability only grows with `dark` while
            // (1 - dark) * i * eta <= 1 - eta * (1 - dark).
            if (1.0 - dark) * i as f64 * eta <= 1.0 - eta * (1.0 - dark) {
                prop_assert!(p_click(i, eta, dark + dd).unwrap() >= base - 1e-15);
            }
        }

        #[test]
        fn posterior_normalized_and_consistent(
            entries in prop::collection::btree_map(count_pattern(), 0.0f64..1.0, 1..20),
            bits in prop::array::uniform4(any::<bool>()),
            eta in 0.01f64..1.0, dark in 1e-6f64..0.1,
        ) {
            let total: f64 = entries.values().sum();
            prop_assume!(total > 0.0);
            let prior: BTreeMap<_, _> = entries.into_iter().map(|(k, v)| (k, v / total)).collect();
            let d = DetectorParams::effective(eta, dark).unwrap();
            let clicks = ClickPattern::from_bits(bits);
            let post = bayes_invert(&prior, clicks, &d).unwrap();
            let s: f64 = post.probabilities.values().sum();
            prop_assert!((s - 1.0).abs() < 1e-10);
            let direct: f64 = prior.iter().map(|(c, p)| p_pattern(clicks, *c, &d) * p).sum();
            prop_assert!((direct - post.evidence).abs() <= 1e-12 * direct.max(1e-300));
        }
    }
}
