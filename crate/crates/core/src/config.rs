//! Run configuration files (TOML): an experiment plus optional sections for
//! the individual subcommands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capacity::CollisionRegime;
use crate::error::{Error, Result};
use crate::experiments::ExperimentConfig;

const TOP_LEVEL_KEYS: &[&str] = &[
    "beta", "d", "hurst", "interval", "mesh", "shift", "replicas", "threshold", "seed", "sweep", "gapfit", "capacity",
    "boxdim", "small_time",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub hurst: Vec<f64>,
}

fn default_t0() -> Vec<f64> {
    vec![1.0]
}

fn default_gap_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapFitSection {
    /// Evaluation point, one coordinate per Hurst component.
    #[serde(default = "default_t0")]
    pub t0: Vec<f64>,
    #[serde(default = "default_gap_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

impl Default for GapFitSection {
    fn default() -> Self {
        GapFitSection { t0: default_t0(), samples: default_gap_samples(), window: None }
    }
}

fn default_alpha() -> Vec<f64> {
    vec![0.5, 1.5]
}

fn default_pairs() -> usize {
    1_000_000
}

fn default_chart_scale() -> f64 {
    1.0
}

/// Capacity bounds of the degenerate set along a level chart with the
/// identity frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySection {
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    /// Levels vary uniformly in `[-scale, scale]` around distinct centers.
    #[serde(default = "default_chart_scale")]
    pub scale: f64,
}

impl Default for CapacitySection {
    fn default() -> Self {
        CapacitySection { alpha: default_alpha(), pairs: default_pairs(), scale: default_chart_scale() }
    }
}

fn default_box_samples() -> usize {
    20_000
}

fn default_box_scales() -> usize {
    7
}

fn default_largest_box() -> f64 {
    0.5
}

/// Box counting over random degenerate matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDimSection {
    #[serde(default = "default_box_samples")]
    pub samples: usize,
    /// Number of dyadic box sizes.
    #[serde(default = "default_box_scales")]
    pub scales: usize,
    #[serde(default = "default_largest_box")]
    pub largest: f64,
}

impl Default for BoxDimSection {
    fn default() -> Self {
        BoxDimSection { samples: default_box_samples(), scales: default_box_scales(), largest: default_largest_box() }
    }
}

fn default_small_mesh() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallTimeSection {
    /// Decreasing horizons `T`.
    pub horizons: Vec<f64>,
    #[serde(default = "default_small_mesh")]
    pub mesh: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gapfit: Option<GapFitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<CapacitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxdim: Option<BoxDimSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub small_time: Option<SmallTimeSection>,
}

impl RunConfig {
    pub fn new(experiment: ExperimentConfig) -> Self {
        RunConfig { experiment, sweep: None, gapfit: None, capacity: None, boxdim: None, small_time: None }
    }

    /// Checks every field; warns when the Hurst index sits at the critical value.
    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        if self.experiment.regime() == CollisionRegime::Critical {
            log::warn!("Q equals beta + 1: the collision question is open at the critical Hurst index");
        }
        if let Some(s) = &self.sweep {
            if s.hurst.is_empty() || s.hurst.iter().any(|&h| !(h > 0.0 && h < 1.0)) {
                return Err(Error::config("sweep.hurst", "need one or more values in (0, 1)"));
            }
        }
        if let Some(g) = &self.gapfit {
            if g.t0.len() != self.experiment.hurst.dim() || g.t0.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                return Err(Error::config("gapfit.t0", "need one positive coordinate per Hurst component"));
            }
            if let Some([lo, hi]) = g.window {
                if !(lo > 0.0 && lo < hi) {
                    return Err(Error::config("gapfit.window", format!("need 0 < lo < hi, got [{lo}, {hi}]")));
                }
            }
        }
        if let Some(c) = &self.capacity {
            if c.alpha.iter().any(|a| !a.is_finite()) {
                return Err(Error::config("capacity.alpha", "orders must be finite"));
            }
            if c.pairs == 0 {
                return Err(Error::config("capacity.pairs", "need at least one pair"));
            }
            if !(c.scale > 0.0 && c.scale.is_finite()) {
                return Err(Error::config("capacity.scale", "must be positive"));
            }
        }
        if let Some(b) = &self.boxdim {
            if b.samples == 0 || b.scales < 2 || !(b.largest > 0.0 && b.largest.is_finite()) {
                return Err(Error::config("boxdim", "need samples >= 1, scales >= 2 and a positive largest box"));
            }
        }
        if let Some(s) = &self.small_time {
            if s.horizons.is_empty() || s.horizons.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                return Err(Error::config("small_time.horizons", "need positive horizons"));
            }
            if s.horizons.windows(2).any(|w| w[0] <= w[1]) {
                return Err(Error::config("small_time.horizons", "must be strictly decreasing"));
            }
            if s.mesh < 2 {
                return Err(Error::config("small_time.mesh", "need at least two points"));
            }
        }
        Ok(())
    }
}

/// Field-level error: names the key on the offending line when there is one.
fn config_error(text: &str, e: toml::de::Error) -> Error {
    let field = match e.span() {
        Some(span) => {
            let start = span.start.min(text.len());
            let line_no = text[..start].matches('\n').count() + 1;
            let line = text.lines().nth(line_no - 1).unwrap_or("");
            match line.split_once('=') {
                Some((key, _)) => format!("{} (line {line_no})", key.trim()),
                None => format!("line {line_no}"),
            }
        }
        None => "config".to_string(),
    };
    Error::config(field, e.message().trim().to_string())
}

/// Parse and validate configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| config_error(text, e))?;
    if let Some(key) = table.keys().find(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())) {
        return Err(Error::config(key.clone(), "unknown field"));
    }
    // the flattened parse loses positions, so surface experiment errors first
    let _: ExperimentConfig = toml::from_str(text).map_err(|e| config_error(text, e))?;
    let config: RunConfig = toml::from_str(text).map_err(|e| config_error(text, e))?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

/// TOML text that parses back to the same configuration.
pub fn emit_config(config: &RunConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::config("config", e.to_string()))
}
