//! Scalar key-distribution figures of merit.
//!
//! Rates that can fall below the `f64` range in deep chains are also
//! available as `log10` values.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_non_negative, check_unit, Error, Result};

/// Default InGaAs trade-off prefactor.
pub const INGAAS_A: f64 = 6.1e-7;
/// Default InGaAs trade-off exponent.
pub const INGAAS_B: f64 = 17.0;

/// Base of the exponential in the channel-efficiency formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelBase {
    /// Decibel semantics, `10^(-loss/10)`.
    #[default]
    Ten,
    /// Natural base, `e^(-loss/10)`.
    E,
}

/// Fiber link description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Fiber loss in dB/km.
    pub alpha: f64,
    /// Distance-independent loss in dB.
    pub alpha0: f64,
    pub length_km: f64,
    /// Reconciliation efficiency in `(0, 1]`.
    pub kappa: f64,
    #[serde(default)]
    pub base: ChannelBase,
}

impl LinkParams {
    pub fn new(alpha: f64, alpha0: f64, length_km: f64, kappa: f64) -> Result<Self> {
        let link = Self {
            alpha,
            alpha0,
            length_km,
            kappa,
            base: ChannelBase::Ten,
        };
        link.validate()?;
        Ok(link)
    }

    /// 0.25 dB/km, 4 dB fixed loss, perfect reconciliation.
    pub fn standard(length_km: f64) -> Result<Self> {
        Self::new(0.25, 4.0, length_km, 1.0)
    }

    pub fn with_base(mut self, base: ChannelBase) -> Self {
        self.base = base;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_non_negative("alpha", self.alpha)?;
        check_non_negative("alpha0", self.alpha0)?;
        check_non_negative("length_km", self.length_km)?;
        check_kappa(self.kappa)
    }

    /// Transmission of one of the `4N` arms of an `N`-swap chain, fixed
    /// loss included.
    pub fn arm_efficiency(&self, n_swaps: usize) -> Result<f64> {
        check_swaps(n_swaps)?;
        channel_efficiency_with(
            self.base,
            self.alpha,
            self.length_km / (4 * n_swaps) as f64,
            self.alpha0,
        )
    }

    /// Fixed-loss transmission alone.
    pub fn fixed_efficiency(&self) -> Result<f64> {
        channel_efficiency_with(self.base, 0.0, 0.0, self.alpha0)
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "kappa",
            value: kappa,
            reason: "must lie in (0, 1]",
        })
    }
}

fn check_swaps(n_swaps: usize) -> Result<()> {
    if n_swaps == 0 {
        return Err(Error::Domain {
            name: "n_swaps",
            value: 0.0,
            reason: "at least one swap is required",
        });
    }
    Ok(())
}

/// `10^(-(alpha * l + alpha0) / 10)`.
pub fn channel_efficiency(alpha: f64, length_km: f64, alpha0: f64) -> Result<f64> {
    channel_efficiency_with(ChannelBase::Ten, alpha, length_km, alpha0)
}

pub fn channel_efficiency_with(
    base: ChannelBase,
    alpha: f64,
    length_km: f64,
    alpha0: f64,
) -> Result<f64> {
    check_non_negative("alpha", alpha)?;
    check_non_negative("length_km", length_km)?;
    check_non_negative("alpha0", alpha0)?;
    let loss = (alpha * length_km + alpha0) / 10.0;
    Ok(match base {
        ChannelBase::Ten => 10f64.powf(-loss),
        ChannelBase::E => (-loss).exp(),
    })
}

/// `(1 - V) / 2`.
pub fn qber(visibility: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&visibility) {
        return Err(Error::Domain {
            name: "visibility",
            value: visibility,
            reason: "must lie in [-1, 1]",
        });
    }
    Ok((1.0 - visibility) / 2.0)
}

/// Binary entropy in bits, zero at both ends.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_unit("x", x)?;
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (-x).ln_1p() / std::f64::consts::LN_2)
}

/// `max(0, 1 - kappa H2(Q) - H2(Q))`.
pub fn shor_preskill_rate(qber: f64, kappa: f64) -> Result<f64> {
    check_unit("qber", qber)?;
    check_kappa(kappa)?;
    let h = binary_entropy(qber)?;
    Ok((1.0 - kappa * h - h).max(0.0))
}

/// The distance factor `10^((-alpha l / (40 N)) * 4N)` exactly as composed.
pub fn sifted_distance_factor(n_swaps: usize, alpha: f64, length_km: f64) -> f64 {
    let n = n_swaps as f64;
    10f64.powf((-alpha * length_km / (40.0 * n)) * 4.0 * n)
}

/// `log10` of [`sifted_rate`]; `-inf` when `chi` or `eta` is zero.
pub fn log10_sifted_rate(
    n_swaps: usize,
    chi: f64,
    eta: f64,
    alpha: f64,
    length_km: f64,
) -> Result<f64> {
    check_swaps(n_swaps)?;
    check_non_negative("chi", chi)?;
    check_unit("eta", eta)?;
    check_non_negative("alpha", alpha)?;
    check_non_negative("length_km", length_km)?;
    let n = n_swaps as f64;
    Ok(-std::f64::consts::LOG10_2
        + 4.0 * n * chi.log10()
        + (-alpha * length_km / (40.0 * n)) * 4.0 * n
        + (2.0 * n - 1.0) * (2.0 * eta.log10() - std::f64::consts::LOG10_2)
        + 2.0 * eta.log10())
}

/// `(1/2) (chi^2)^(2N) 10^((-alpha l/(40N)) 4N) (eta^2/2)^(2N-1) eta^2`.
pub fn sifted_rate(n_swaps: usize, chi: f64, eta: f64, alpha: f64, length_km: f64) -> Result<f64> {
    check_swaps(n_swaps)?;
    check_non_negative("chi", chi)?;
    check_unit("eta", eta)?;
    check_non_negative("alpha", alpha)?;
    check_non_negative("length_km", length_km)?;
    let n = n_swaps as i32;
    Ok(0.5
        * (chi * chi).powi(2 * n)
        * sifted_distance_factor(n_swaps, alpha, length_km)
        * (eta * eta / 2.0).powi(2 * n - 1)
        * eta
        * eta)
}

/// Inputs a key-rate figure was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub chi: f64,
    pub eta0: f64,
    pub dark: f64,
    pub n_swaps: usize,
    pub length_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRateResult {
    pub visibility: f64,
    pub qber: f64,
    pub r_sifted: f64,
    pub log10_r_sifted: f64,
    pub r_shor_preskill: f64,
    pub r_net: f64,
    /// `-inf` when there is no key.
    pub log10_r_net: f64,
    pub provenance: Option<Provenance>,
}

impl KeyRateResult {
    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn has_key(&self) -> bool {
        self.r_shor_preskill > 0.0 && self.log10_r_sifted > f64::NEG_INFINITY
    }
}

/// Net rate from a visibility and a sifted rate.
pub fn net_key_rate(visibility: f64, sifted: f64, kappa: f64) -> Result<KeyRateResult> {
    check_non_negative("sifted", sifted)?;
    net_key_rate_log10(visibility, sifted.log10(), kappa)
}

/// Net rate from a visibility and the `log10` of a sifted rate.
pub fn net_key_rate_log10(visibility: f64, log10_sifted: f64, kappa: f64) -> Result<KeyRateResult> {
    if log10_sifted.is_nan() || log10_sifted == f64::INFINITY {
        check_finite("log10_sifted", log10_sifted)?;
    }
    let q = qber(visibility)?;
    let sp = shor_preskill_rate(q, kappa)?;
    let log10_r_net = if sp > 0.0 {
        log10_sifted + sp.log10()
    } else {
        f64::NEG_INFINITY
    };
    Ok(KeyRateResult {
        visibility,
        qber: q,
        r_sifted: 10f64.powf(log10_sifted),
        log10_r_sifted: log10_sifted,
        r_shor_preskill: sp,
        r_net: 10f64.powf(log10_r_net),
        log10_r_net,
        provenance: None,
    })
}

/// `log2((1 + T) / (1 - T))` with `T = 10^(-alpha l / 10)`.
pub fn tgw_bound(alpha: f64, length_km: f64) -> Result<f64> {
    let t = tgw_transmission(alpha, length_km)?;
    Ok(((t).ln_1p() - (-t).ln_1p()) / std::f64::consts::LN_2)
}

/// `log10` of [`tgw_bound`], finite even when the transmission underflows.
pub fn log10_tgw_bound(alpha: f64, length_km: f64) -> Result<f64> {
    let t = tgw_transmission(alpha, length_km)?;
    let log10_t = -alpha * length_km / 10.0;
    if t > 1e-8 {
        Ok(tgw_bound(alpha, length_km)?.log10())
    } else {
        // log2((1+T)/(1-T)) = (2T + O(T^3)) / ln 2
        Ok(log10_t + (2.0 / std::f64::consts::LN_2).log10())
    }
}

fn tgw_transmission(alpha: f64, length_km: f64) -> Result<f64> {
    check_non_negative("alpha", alpha)?;
    check_non_negative("length_km", length_km)?;
    if alpha * length_km == 0.0 {
        return Err(Error::Unbounded);
    }
    Ok(10f64.powf(-alpha * length_km / 10.0))
}

/// InGaAs efficiency/dark-count trade-off constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeOff {
    pub a: f64,
    pub b: f64,
}

impl Default for TradeOff {
    fn default() -> Self {
        Self {
            a: INGAAS_A,
            b: INGAAS_B,
        }
    }
}

impl TradeOff {
    pub fn dark(&self, eta0: f64) -> Result<f64> {
        ingaas_dark_count(eta0, self.a, self.b)
    }

    /// Largest `eta0` with a dark-count probability below one.
    pub fn max_physical_eta0(&self) -> f64 {
        (-self.a.ln() / self.b).min(1.0)
    }
}

/// `A exp(B eta0)`; fails when the result reaches one.
pub fn ingaas_dark_count(eta0: f64, a: f64, b: f64) -> Result<f64> {
    check_unit("eta0", eta0)?;
    check_non_negative("a", a)?;
    check_finite("b", b)?;
    let dark = a * (b * eta0).exp();
    if dark >= 1.0 {
        return Err(Error::UnphysicalDarkCount(dark));
    }
    Ok(dark)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn channel_examples() {
        assert_eq!(channel_efficiency(0.25, 0.0, 0.0).unwrap(), 1.0);
        assert!((channel_efficiency(0.25, 40.0, 0.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(
            (channel_efficiency(0.25, 40.0, 4.0).unwrap() - 0.039_810_717_055_349_7).abs() < 1e-15
        );
        let e = channel_efficiency_with(ChannelBase::E, 0.25, 40.0, 0.0).unwrap();
        assert!((e - (-1.0f64).exp()).abs() < 1e-15);
        assert!(channel_efficiency(-0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn arm_efficiency_splits_length_evenly() {
        let link = LinkParams::standard(800.0).unwrap();
        let arm = link.arm_efficiency(2).unwrap();
        assert!((arm - 10f64.powf(-(0.25 * 100.0 + 4.0) / 10.0)).abs() < 1e-18);
    }

    #[test]
    fn qber_examples() {
        assert_eq!(qber(1.0).unwrap(), 0.0);
        assert_eq!(qber(0.0).unwrap(), 0.5);
        assert!((qber(0.16).unwrap() - 0.42).abs() < 1e-15);
        assert!(qber(1.01).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert!((binary_entropy(0.11).unwrap() - 0.499_915_958).abs() < 1e-8);
        assert!(binary_entropy(-0.1).is_err());
    }

    #[test]
    fn shor_preskill_examples() {
        assert_eq!(shor_preskill_rate(0.0, 1.0).unwrap(), 1.0);
        assert_eq!(shor_preskill_rate(0.5, 1.0).unwrap(), 0.0);
        let edge = shor_preskill_rate(0.11, 1.0).unwrap();
        assert!(edge > 0.0 && edge < 5e-4, "{edge}");
        assert!((edge - 1.680_8e-4).abs() < 1e-7, "{edge}");
        assert!(shor_preskill_rate(0.1, 0.0).is_err());
    }

    #[test]
    fn shor_preskill_clamps_above_threshold() {
        for k in 0..=1000 {
            let q = 0.11003 + k as f64 * (0.5 - 0.11003) / 1000.0;
            assert_eq!(shor_preskill_rate(q, 1.0).unwrap(), 0.0, "q={q}");
        }
    }

    #[test]
    fn sifted_examples() {
        assert_eq!(sifted_rate(1, 0.0, 0.5, 0.25, 10.0).unwrap(), 0.0);
        let r = sifted_rate(1, 0.1, 0.5, 0.25, 0.0).unwrap();
        assert!((r - 1.5625e-6).abs() < 1e-20);
        assert_eq!(
            log10_sifted_rate(1, 0.0, 0.5, 0.25, 0.0).unwrap(),
            f64::NEG_INFINITY
        );
        let lg = log10_sifted_rate(1, 0.1, 0.5, 0.25, 0.0).unwrap();
        assert!((lg - 1.5625e-6f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn sifted_exponent_identity() {
        for n in 1..=6 {
            for &l in &[0.0, 1.0, 37.5, 100.0, 400.0, 850.0] {
                let f = sifted_distance_factor(n, 0.25, l);
                let direct = 10f64.powf(-0.25 * l / 10.0);
                assert!(((f - direct) / direct).abs() < 1e-14, "N={n} l={l}");
            }
        }
    }

    #[test]
    fn net_rate_examples() {
        let r = net_key_rate(1.0, 3e-7, 1.0).unwrap();
        assert!((r.r_net - 3e-7).abs() < 1e-20);
        assert!(r.has_key());
        let r = net_key_rate(0.0, 3e-7, 1.0).unwrap();
        assert_eq!(r.r_net, 0.0);
        assert_eq!(r.log10_r_net, f64::NEG_INFINITY);
        let r = net_key_rate(0.16, 3e-7, 1.0).unwrap();
        assert!((binary_entropy(0.42).unwrap() - 0.981_5).abs() < 1e-4);
        assert_eq!(r.r_net, 0.0);
        assert!(!r.has_key());
    }

    #[test]
    fn net_rate_survives_underflow_in_log_domain() {
        let r = net_key_rate_log10(1.0, -400.0, 1.0).unwrap();
        assert_eq!(r.r_net, 0.0);
        assert_eq!(r.log10_r_net, -400.0);
    }

    #[test]
    fn tgw_examples() {
        let t = tgw_bound(0.25, 40.0).unwrap();
        assert!((t - (1.1f64 / 0.9).log2()).abs() < 1e-15);
        let t80 = tgw_bound(0.25, 80.0).unwrap();
        assert!((t80 - (1.01f64 / 0.99).log2()).abs() < 1e-15);
        assert!((t80 - 0.028_853).abs() < 5e-6, "{t80}");
        assert!(tgw_bound(0.25, 1e5).unwrap() >= 0.0);
        assert!(matches!(tgw_bound(0.25, 0.0), Err(Error::Unbounded)));
        let lg = log10_tgw_bound(0.25, 4000.0).unwrap();
        assert!((lg - (-100.0 + (2.0 / std::f64::consts::LN_2).log10())).abs() < 1e-12);
        assert!((log10_tgw_bound(0.25, 40.0).unwrap() - t.log10()).abs() < 1e-15);
    }

    #[test]
    fn ingaas_examples() {
        assert_eq!(ingaas_dark_count(0.0, INGAAS_A, INGAAS_B).unwrap(), 6.1e-7);
        assert!((ingaas_dark_count(0.3, INGAAS_A, INGAAS_B).unwrap() - 1.0005e-4).abs() < 1e-7);
        assert!((ingaas_dark_count(0.7, INGAAS_A, INGAAS_B).unwrap() - 0.0898).abs() < 1e-4);
        assert!(matches!(
            ingaas_dark_count(0.9, INGAAS_A, INGAAS_B),
            Err(Error::UnphysicalDarkCount(_))
        ));
        let limit = TradeOff::default().max_physical_eta0();
        assert!((limit - 0.842).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn entropy_is_symmetric(x in 0.0f64..=1.0) {
            let a = binary_entropy(x).unwrap();
            let b = binary_entropy(1.0 - x).unwrap();
            prop_assert!((a - b).abs() < 1e-14);
        }

        #[test]
        fn tgw_decreases_with_length(l in 0.1f64..2000.0, dl in 0.1f64..100.0) {
            prop_assert!(tgw_bound(0.25, l + dl).unwrap() < tgw_bound(0.25, l).unwrap());
        }

        #[test]
        fn sifted_monotone(n in 1usize..=4, chi in 0.01f64..0.5, eta in 0.01f64..0.9,
                           l in 0.0f64..300.0, dl in 1.0f64..50.0, de in 0.001f64..0.09) {
            let base = sifted_rate(n, chi, eta, 0.25, l).unwrap();
            prop_assert!(sifted_rate(n, chi, eta, 0.25, l + dl).unwrap() < base);
            prop_assert!(sifted_rate(n, chi, eta + de, 0.25, l).unwrap() > base);
        }

        #[test]
        fn dark_count_increases_with_efficiency(e in 0.0f64..0.8, de in 1e-3f64..0.04) {
            let a = ingaas_dark_count(e, INGAAS_A, INGAAS_B).unwrap();
            let b = ingaas_dark_count(e + de, INGAAS_A, INGAAS_B).unwrap();
            prop_assert!(b > a);
        }
    }
}
