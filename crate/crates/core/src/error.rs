use thiserror::Error;

/// Errors raised by the simulator and rate calculators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} is out of range: {reason}")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The conditioning click pattern cannot occur under the detector model
    /// (for example clicks without photons and without dark counts).
    #[error("click pattern {0} is impossible: evidence probability is exactly zero")]
    ImpossibleEvidence(String),

    /// Evidence is non-zero in exact arithmetic but underflowed in `f64`.
    #[error("evidence probability underflowed to {0:e}")]
    EvidenceUnderflow(f64),

    #[error("photon number {count} at index {index} exceeds truncation {truncation}")]
    TruncationOverflow {
        index: usize,
        count: usize,
        truncation: usize,
    },

    #[error("truncation mismatch between evaluators: {0} vs {1}")]
    TruncationMismatch(usize, usize),

    #[error("no coincidences: Q_max + Q_min = 0")]
    DegenerateVisibility,

    #[error("bound is unbounded at zero length")]
    Unbounded,

    #[error("spatial mode {mode} is not present in the state")]
    InvalidMode { mode: usize },

    #[error("spatial modes overlap: {0:?}")]
    ModeOverlap(Vec<usize>),

    #[error("dark-count probability {0} is unphysical (must be < 1)")]
    UnphysicalDarkCount(f64),

    /// Every grid point failed to evaluate; distinct from a surface that
    /// evaluates to zero key everywhere.
    #[error("optimization failed: no grid point could be evaluated ({0})")]
    NoEvaluablePoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            reason: "must be finite",
        })
    }
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            reason: "must be finite and non-negative",
        })
    }
}
