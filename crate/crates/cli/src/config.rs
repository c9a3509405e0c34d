//! Run configuration: JSON file, command-line overrides and per-mode resolution.

use std::path::{Path, PathBuf};

use rabi_dpt::quench::{InitialStateSource, LongTimeWindow, QuenchSpec};
use rabi_dpt::semiclassics::{EnsembleSpec, Sampling};
use rabi_dpt::Branch;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PhaseDiagram,
    Quench,
    Rate,
    Scaling,
    Semiclassical,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::PhaseDiagram => "phase-diagram",
            Mode::Quench => "quench",
            Mode::Rate => "rate",
            Mode::Scaling => "scaling",
            Mode::Semiclassical => "semiclassical",
        }
    }
}

/// Every key a config file may carry. Unset keys fall back to flags, then to
/// per-mode defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub g1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch: Option<Branch>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialStateSource>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub g1_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g1_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub g2_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<LongTimeWindow>,
    /// Write the full expectation-value series of each quench.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kink_threshold: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Sampling>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gnuplot_script: Option<bool>,
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
}

impl RunConfig {
    /// Keys set in `over` replace those in `self`.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        let mut base = serde_json::to_value(self).expect("config serializes");
        let top = serde_json::to_value(over).expect("config serializes");
        if let (Value::Object(b), Value::Object(t)) = (&mut base, top) {
            b.extend(t);
        }
        serde_json::from_value(base).expect("merged config deserializes")
    }

    pub fn require<T: Copy>(value: Option<T>, key: &str) -> Result<T, CliError> {
        value.ok_or_else(|| {
            CliError::usage(format!("missing required `{key}` (flag --{} or config key)", key.replace('_', "-")))
        })
    }

    pub fn quench_spec(&self) -> Result<QuenchSpec, CliError> {
        let mut spec = QuenchSpec::new(
            Self::require(self.g1, "g1")?,
            Self::require(self.g2, "g2")?,
            Self::require(self.eta, "eta")?,
        );
        spec.omega0 = self.omega0.unwrap_or(1.0);
        spec.cutoff = self.cutoff;
        spec.branch = self.branch.unwrap_or(Branch::Plus);
        spec.initial_state_source = self.initial_state.unwrap_or_default();
        spec.validate()?;
        Ok(spec)
    }

    pub fn ensemble_spec(&self) -> EnsembleSpec {
        let d = EnsembleSpec::default();
        EnsembleSpec {
            n_samples: self.n_samples.unwrap_or(d.n_samples),
            sampling: self.sampling.unwrap_or(d.sampling),
            seed: self.seed.unwrap_or(d.seed),
            variance_scale: self.variance_scale.unwrap_or(d.variance_scale),
            dt: self.dt.unwrap_or(d.dt),
        }
    }

    pub fn window(&self) -> LongTimeWindow {
        self.window.unwrap_or_default()
    }
}
