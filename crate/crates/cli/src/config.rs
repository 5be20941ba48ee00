//! Run configuration and its flat TOML form.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use curvecut_core::{NeighborhoodMode, TrustRegionParams};
use serde::{Deserialize, Serialize};

use crate::exit::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    Segment,
    Inpaint,
    Energy,
    ResponseMap,
    CircleAccuracy,
    Theorem1,
    DumpNeighborhood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[default]
    LsaTr,
    Icm,
    Brute,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::LsaTr => "lsa-tr",
            OptimizerKind::Icm => "icm",
            OptimizerKind::Brute => "brute",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lsa-tr" | "lsa_tr" | "lsatr" => Ok(OptimizerKind::LsaTr),
            "icm" => Ok(OptimizerKind::Icm),
            "brute" => Ok(OptimizerKind::Brute),
            other => Err(format!(
                "unknown optimizer `{other}` (expected lsa-tr, icm or brute)"
            )),
        }
    }
}

/// Everything a run needs. All fields have defaults, so a config file only
/// lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    /// Curvature weight, applied on the grid after upscaling.
    pub lambda: f64,
    pub clique_radius: usize,
    pub neighborhood: String,
    /// Integer upscale factor applied to the input (and mask) before segmenting.
    pub scale: usize,
    pub mean_fg: f64,
    pub mean_bg: f64,
    pub variance: f64,
    pub optimizer: OptimizerKind,
    pub tr_init: f64,
    pub tr_growth: f64,
    pub tr_max: f64,
    pub tr_tau: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Adds wall-clock seconds to the report, which makes it non-reproducible.
    pub timing: bool,
    pub radii: Vec<f64>,
    pub center_samples: usize,
    pub kappas: Vec<f64>,
    pub lengths: Vec<f64>,
    pub subpixel: f64,
    /// Chord direction for the rasterized fired-area check, radians.
    pub theta: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tr = TrustRegionParams::default();
        RunConfig {
            task: Task::Segment,
            input: None,
            output: None,
            mask: None,
            report: None,
            trace: None,
            lambda: 1.0,
            clique_radius: 3,
            neighborhood: NeighborhoodMode::FullBox.to_string(),
            scale: 1,
            mean_fg: 1.0,
            mean_bg: 0.0,
            variance: 0.1,
            optimizer: OptimizerKind::LsaTr,
            tr_init: tr.init,
            tr_growth: tr.growth,
            tr_max: tr.max,
            tr_tau: tr.tau,
            max_iterations: tr.max_iterations,
            seed: 0,
            timing: false,
            radii: vec![8.0, 12.0, 16.0, 24.0, 32.0],
            center_samples: 16,
            kappas: vec![0.05, 0.1, 0.25, 0.5],
            lengths: vec![0.1, 0.25, 0.5, 1.0],
            subpixel: 0.05,
            theta: 0.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn neighborhood_mode(&self) -> CliResult<NeighborhoodMode> {
        Ok(self.neighborhood.parse::<NeighborhoodMode>()?)
    }

    pub fn trust_region(&self) -> TrustRegionParams {
        TrustRegionParams {
            init: self.tr_init,
            growth: self.tr_growth,
            max: self.tr_max,
            tau: self.tr_tau,
            max_iterations: self.max_iterations,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(CliError::usage(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.scale == 0 {
            return Err(CliError::usage("scale must be >= 1"));
        }
        if self.center_samples == 0 {
            return Err(CliError::usage("center-samples must be >= 1"));
        }
        self.neighborhood_mode()?;
        self.trust_region().validate()?;
        Ok(())
    }
}
