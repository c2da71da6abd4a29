//! Run configuration: defaults, JSON ingestion and command-line overrides.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use swapchain::chain::{ChainClickPattern, ChainConfig, VisibilityMode, MAX_TRUNCATION};
use swapchain::optimizer::{DarkCountModel, GridAxis, OptimizationSpec};
use swapchain::rates::{ChannelBase, LinkParams, TradeOff};

/// Input that could not be parsed, as opposed to a value out of range.
#[derive(Debug)]
pub struct ParseError(pub String);

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ParseError {}

/// Parameter axis for `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

pub const SWEEP_PARAMETERS: &[&str] = &[
    "chi",
    "eta0",
    "dark",
    "alpha",
    "alpha0",
    "length_km",
    "delta_a",
    "delta_b",
    "kappa",
    "n_swaps",
];

impl SweepAxis {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !SWEEP_PARAMETERS.contains(&self.parameter.as_str()) {
            bail!(
                "unknown sweep parameter `{}` (expected one of {})",
                self.parameter,
                SWEEP_PARAMETERS.join(", ")
            );
        }
        if self.steps == 0 {
            bail!("sweep needs at least one step");
        }
        Ok(
            GridAxis::new(self.from.min(self.to), self.from.max(self.to), self.steps).map(|a| {
                let mut v = a.values();
                if self.from > self.to {
                    v.reverse();
                }
                v
            })?,
        )
    }
}

/// Search box and refinement schedule for `optimize` and `reproduce key-rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub chi: GridAxis,
    pub eta0: GridAxis,
    pub refinement_levels: usize,
    pub refinement_points: usize,
    pub search_truncation: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            chi: GridAxis {
                min: 0.01,
                max: 0.5,
                points: 32,
            },
            eta0: GridAxis {
                min: 0.05,
                max: 0.95,
                points: 32,
            },
            refinement_levels: 3,
            refinement_points: 9,
            search_truncation: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
}

/// Everything one invocation needs. Angles are stored in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: String,
    pub figure: Option<String>,
    pub chi: f64,
    pub eta0: f64,
    pub dark: Option<f64>,
    pub trade_off: Option<TradeOff>,
    pub alpha: f64,
    pub alpha0: f64,
    pub length_km: f64,
    pub channel_base: ChannelBase,
    pub delta_a: f64,
    pub delta_b: f64,
    pub n_swaps: usize,
    /// Chain depths for `reproduce`.
    pub n_swaps_list: Vec<usize>,
    pub truncation: usize,
    pub oracle_truncation: Option<usize>,
    pub kappa: f64,
    pub inner_pattern: Option<ChainClickPattern>,
    pub visibility_mode: VisibilityMode,
    pub sweep: Option<SweepAxis>,
    pub optimizer: OptimizerSettings,
    pub output: Option<String>,
    pub format: OutputFormat,
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            figure: None,
            chi: 0.1,
            eta0: 0.7,
            dark: Some(1e-5),
            trade_off: None,
            alpha: 0.25,
            alpha0: 4.0,
            length_km: 0.0,
            channel_base: ChannelBase::default(),
            delta_a: PI / 2.0,
            delta_b: PI / 2.0,
            n_swaps: 1,
            n_swaps_list: vec![1, 2, 3],
            truncation: 3,
            oracle_truncation: None,
            kappa: 1.0,
            inner_pattern: None,
            visibility_mode: VisibilityMode::FixedAngles,
            sweep: None,
            optimizer: OptimizerSettings::default(),
            output: None,
            format: OutputFormat::Csv,
            workers: None,
        }
    }
}

impl RunConfig {
    /// Reads a config file. A metadata sidecar is accepted too; its
    /// `config` object is used.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| ParseError(format!("parsing {}: {e}", path.display())))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        Ok(serde_json::from_value(value)
            .map_err(|e| ParseError(format!("invalid config in {}: {e}", path.display())))?)
    }

    pub fn dark_model(&self) -> Result<DarkCountModel> {
        match (self.dark, self.trade_off) {
            (Some(dark), None) => Ok(DarkCountModel::Fixed { dark }),
            (None, Some(t)) => Ok(DarkCountModel::TradeOff(t)),
            (Some(_), Some(_)) => bail!("set either `dark` or `trade_off`, not both"),
            (None, None) => bail!("one of `dark` or `trade_off` is required"),
        }
    }

    pub fn dark_at(&self, eta0: f64) -> Result<f64> {
        Ok(self.dark_model()?.dark(eta0)?)
    }

    pub fn link(&self) -> Result<LinkParams> {
        Ok(
            LinkParams::new(self.alpha, self.alpha0, self.length_km, self.kappa)?
                .with_base(self.channel_base),
        )
    }

    /// Effective detector efficiency including arm and fixed losses.
    pub fn eta_detector(&self) -> Result<f64> {
        Ok(self.eta0 * self.link()?.arm_efficiency(self.n_swaps)?)
    }

    pub fn chain(&self) -> Result<ChainConfig> {
        let dark = self.dark_at(self.eta0)?;
        let mut config = ChainConfig::new(self.n_swaps, self.chi, self.eta_detector()?, dark)?
            .with_angles(self.delta_a, self.delta_b)
            .with_truncation(self.truncation);
        if let Some(p) = &self.inner_pattern {
            config = config.with_inner_pattern(p.clone());
        }
        config.validate()?;
        Ok(config)
    }

    pub fn optimization_spec(&self) -> Result<OptimizationSpec> {
        let mut spec = OptimizationSpec::new(self.n_swaps, self.link()?)?;
        spec.chi = self.optimizer.chi;
        spec.eta0 = self.optimizer.eta0;
        spec.refinement_levels = self.optimizer.refinement_levels;
        spec.refinement_points = self.optimizer.refinement_points;
        spec.search_truncation = self.optimizer.search_truncation;
        spec.final_truncation = self.truncation;
        spec.dark_model = self.dark_model()?;
        spec.visibility_mode = self.visibility_mode;
        spec.validate()?;
        Ok(spec)
    }

    /// Checks every field against its domain.
    pub fn validate(&self) -> Result<()> {
        self.dark_model()?;
        if let Some(dark) = self.dark {
            if !(0.0..1.0).contains(&dark) {
                bail!("dark = {dark} must lie in [0, 1)");
            }
        }
        if !(0.0..=1.0).contains(&self.eta0) {
            bail!("eta0 = {} must lie in [0, 1]", self.eta0);
        }
        if !(self.chi >= 0.0 && self.chi.is_finite()) {
            bail!("chi = {} must be finite and non-negative", self.chi);
        }
        if !(self.delta_a.is_finite() && self.delta_b.is_finite()) {
            bail!("rotator angles must be finite");
        }
        if self.n_swaps == 0 || self.n_swaps_list.contains(&0) {
            bail!("at least one swap is required");
        }
        if self.truncation == 0 || self.truncation > MAX_TRUNCATION {
            bail!(
                "truncation = {} must lie in 1..={MAX_TRUNCATION}",
                self.truncation
            );
        }
        if self.workers == Some(0) {
            bail!("worker count must be at least 1");
        }
        self.link()?;
        if let Some(axis) = &self.sweep {
            axis.values()?;
        }
        self.optimizer.chi.validate()?;
        self.optimizer.eta0.validate()?;
        Ok(())
    }

    /// Sets one sweepable parameter. Angles are in radians here.
    pub fn set_parameter(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "chi" => self.chi = value,
            "eta0" => self.eta0 = value,
            "dark" => {
                self.dark = Some(value);
                self.trade_off = None;
            }
            "alpha" => self.alpha = value,
            "alpha0" => self.alpha0 = value,
            "length_km" => self.length_km = value,
            "delta_a" => self.delta_a = value,
            "delta_b" => self.delta_b = value,
            "kappa" => self.kappa = value,
            "n_swaps" => {
                if value < 1.0 || value.fract() != 0.0 {
                    bail!("n_swaps = {value} must be a positive integer");
                }
                self.n_swaps = value as usize;
            }
            other => bail!("unknown parameter `{other}`"),
        }
        Ok(())
    }
}

pub fn is_angle(name: &str) -> bool {
    matches!(name, "delta_a" | "delta_b")
}
