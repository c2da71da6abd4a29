//! Simulation and key-rate analysis of concatenated entanglement swapping
//! with multipair down-conversion sources, lossy channels and noisy threshold
//! detectors.

pub mod chain;
pub mod detector;
pub mod error;
pub mod fock;
pub mod numeric;
pub mod optimizer;
pub mod rates;

pub use chain::{ChainClickPattern, ChainConfig, CoincidenceTable, VisibilityMode};
pub use detector::{ClickPattern, DetectorParams, PhotonCountPattern};
pub use error::{Error, Result};
pub use optimizer::{OptimizationResult, OptimizationSpec};
pub use rates::{KeyRateResult, LinkParams};
