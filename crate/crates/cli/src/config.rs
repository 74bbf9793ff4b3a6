use std::path::{Path, PathBuf};

use cvgauss::dynamics::{CalibrationSpec, Couplings, DeviceParams, PulseSequence, RunOptions};
use cvgauss::measurement::{EfficiencyModel, DEFAULT_READOUT_PHASES};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

fn paper_device() -> DeviceParams {
    DeviceParams::paper_defaults()
}

fn default_readout_phases() -> [f64; 2] {
    DEFAULT_READOUT_PHASES
}

fn paper_efficiencies() -> EfficiencyModel {
    EfficiencyModel::paper()
}

fn default_entangle() -> f64 {
    16.8e-6
}

fn default_shots() -> usize {
    10_000
}

fn default_bootstrap() -> usize {
    1000
}

fn default_run() -> RunOptions {
    RunOptions {
        sample_interval: Some(0.1e-6),
        ..RunOptions::exact()
    }
}

/// One JSON document describing a run. Rates are angular (`_rad_per_s`),
/// times in seconds (`_s`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Required, either here or via `--seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "paper_device")]
    pub device: DeviceParams,
    #[serde(default)]
    pub calibration: CalibrationSpec,
    /// Skip calibration and use these couplings.
    #[serde(default)]
    pub couplings: Option<Couplings>,
    /// Explicit pulse sequence, replacing the calibrated cool and entangle pulses.
    #[serde(default)]
    pub sequence: Option<PulseSequence>,
    #[serde(default = "default_entangle", rename = "entangle_duration_s")]
    pub entangle_duration: f64,
    #[serde(default, rename = "sweep_durations_s")]
    pub sweep_durations: Vec<f64>,
    #[serde(default = "paper_efficiencies")]
    pub efficiencies: EfficiencyModel,
    /// Readout phase references of drums 1 and 2 relative to the drive frame.
    #[serde(default = "default_readout_phases", rename = "readout_phases_rad")]
    pub readout_phases: [f64; 2],
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_run")]
    pub run: RunOptions,
    #[serde(default)]
    pub outputs: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub shots: Option<usize>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub bootstrap: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies overrides and validates; afterwards `seed` is set.
    pub fn resolve(mut self, o: &Overrides) -> CliResult<Self> {
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if let Some(n) = o.shots {
            self.shots = n;
        }
        if let Some(e) = o.eta1 {
            self.efficiencies.eta1 = e;
        }
        if let Some(e) = o.eta2 {
            self.efficiencies.eta2 = e;
        }
        if let Some(b) = o.bootstrap {
            self.bootstrap = b;
        }
        if o.out.is_some() {
            self.outputs = o.out.clone();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.seed.is_none() {
            return Err(CliError::Config(
                "a seed is required (config \"seed\" or --seed)".into(),
            ));
        }
        self.device.validate().map_err(CliError::config)?;
        self.efficiencies.validate().map_err(CliError::config)?;
        if let Some(seq) = &self.sequence {
            seq.validate().map_err(CliError::config)?;
        }
        if !(self.entangle_duration >= 0.0) || !self.entangle_duration.is_finite() {
            return Err(CliError::Config(format!(
                "entangle_duration_s must be non-negative, got {}",
                self.entangle_duration
            )));
        }
        if let Some(d) = self
            .sweep_durations
            .iter()
            .find(|d| !(**d >= 0.0) || !d.is_finite())
        {
            return Err(CliError::Config(format!("invalid sweep duration {d}")));
        }
        if self.readout_phases.iter().any(|p| !p.is_finite()) {
            return Err(CliError::Config(format!(
                "readout_phases_rad must be finite, got {:?}",
                self.readout_phases
            )));
        }
        if self.shots < 2 {
            return Err(CliError::Config(format!(
                "shots must be at least 2, got {}",
                self.shots
            )));
        }
        if self.bootstrap < cvgauss::statistics::MIN_REPLICATES {
            return Err(CliError::Config(format!(
                "bootstrap must be at least {}, got {}",
                cvgauss::statistics::MIN_REPLICATES,
                self.bootstrap
            )));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("resolved config has a seed")
    }

    pub fn output_dir(&self) -> PathBuf {
        self.outputs.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}
