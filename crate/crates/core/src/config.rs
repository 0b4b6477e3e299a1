//! Run configuration files (TOML).
//!
//! ```toml
//! solvers = ["wgs", "wpgs"]
//! cost = "distance"
//! output = "runs/minimal"
//!
//! [task]
//! kind = "minimal_3x3"
//! shift = ["1.41421356 um", "-1.41421356 um"]
//! max_step = "0.2 um"
//!
//! [[task.source.layers]]
//! dims = [3, 3]
//! spacing = "5 um"
//!
//! [optical]
//! wavelength = "820 nm"
//! focal_length = "4 mm"
//! grid_x = 256
//! grid_y = 256
//! pixel_pitch = "17 um"
//!
//! [solver]
//! iterations = 5
//! wgs_iterations = 26
//!
//! [refresh]
//! tau = 1e-3
//! order = "exact"
//! ```
//!
//! Omitted tables take their defaults; lengths are meters unless suffixed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OpticalConfig, TaskSpec};
use crate::metrics::MetricsConfig;
use crate::planner::CostKind;
use crate::sequence::{Reference, SequenceOptions, SolverKind};
use crate::solvers::SolverSettings;
use crate::transient::RefreshModel;
use crate::units::MICRON;

/// Per-frame step used when the task does not set one.
pub const DEFAULT_MAX_STEP: f64 = 0.1 * MICRON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Leading frames excluded from timing statistics.
    pub warmup_frames: usize,
    /// Iteration budgets to time per solver; empty means the solver defaults.
    pub wpgs_iterations: Vec<usize>,
    pub wgs_iterations: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            warmup_frames: 3,
            wpgs_iterations: Vec::new(),
            wgs_iterations: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverKind>,
    #[serde(default)]
    pub cost: CostKind,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Worker threads; unset uses all cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Also export 8-bit PGM masks.
    #[serde(default)]
    pub pgm: bool,
    #[serde(default)]
    pub reference: Reference,
    pub task: TaskSpec,
    #[serde(default = "OpticalConfig::desk")]
    pub optical: OpticalConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub refresh: RefreshModel,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub bench: BenchConfig,
}

fn default_solvers() -> Vec<SolverKind> {
    vec![SolverKind::Wgs, SolverKind::Wpgs]
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

/// Named desk-scale and full-scale tasks.
pub const PRESETS: &[&str] = &[
    "minimal_3x3",
    "reconfig_2d",
    "reconfig_2d_full",
    "three_layer",
    "three_layer_full",
    "offset_bilayer",
    "offset_bilayer_full",
];

impl RunConfig {
    pub fn new(task: TaskSpec) -> Self {
        RunConfig {
            solvers: default_solvers(),
            cost: CostKind::default(),
            output: default_output(),
            threads: None,
            pgm: false,
            reference: Reference::default(),
            task,
            optical: OpticalConfig::desk(),
            solver: SolverSettings::default(),
            refresh: RefreshModel::default(),
            metrics: MetricsConfig::default(),
            bench: BenchConfig::default(),
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let (task, full) = match name {
            "minimal_3x3" => (TaskSpec::minimal_3x3(), false),
            "reconfig_2d" => (TaskSpec::reconfig_2d_desk(seed), false),
            "reconfig_2d_full" => (TaskSpec::reconfig_2d_full(seed), true),
            "three_layer" => (TaskSpec::three_layer_desk(seed), false),
            "three_layer_full" => (TaskSpec::three_layer_full(seed), true),
            "offset_bilayer" => (TaskSpec::offset_bilayer_desk(seed), false),
            "offset_bilayer_full" => (TaskSpec::offset_bilayer_full(seed), true),
            other => {
                return Err(Error::Config(format!(
                    "unknown task `{other}` (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        let mut cfg = RunConfig::new(task);
        if full {
            cfg.optical = OpticalConfig::full_scale();
        }
        cfg.output = PathBuf::from("runs").join(name);
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.optical.validate()?;
        self.solver.validate()?;
        self.refresh.validate()?;
        if self.solvers.is_empty() {
            return Err(Error::Config("no solver selected".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if let Some(step) = self.task.max_step {
            if !(step.0 > 0.0) {
                return Err(Error::Config("max_step must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn max_step(&self) -> f64 {
        self.task.max_step.map_or(DEFAULT_MAX_STEP, |l| l.0)
    }

    pub fn sequence_options(&self) -> SequenceOptions {
        SequenceOptions {
            settings: self.solver.clone(),
            refresh: self.refresh,
            metrics: self.metrics.clone(),
            reference: self.reference,
            transients: true,
            retain_masks: false,
            retain_samples: false,
        }
    }
}
