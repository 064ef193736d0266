use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracking::{Predictor, ScenarioConfig};

/// Full description of a sweep. Every table and key is optional in the file;
/// omitted values take the defaults of the reference preset. Unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario_id: String,
    pub master_seed: u64,
    pub trials: usize,
    pub snr_grid_db: Vec<f64>,
    pub predictors: Vec<Predictor>,
    /// Independently seeded fits per learned predictor and trial; the
    /// spread of their estimates gives `tau1` and `tau2`.
    pub dispersion_fits: usize,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub output_path: PathBuf,
    /// Fill the `wall_time` column with measured seconds. Off by default
    /// because timings make otherwise identical runs differ.
    pub record_wall_time: bool,
    /// Carrier wavelength, kept for provenance only; the array model uses
    /// the spacing ratio.
    pub wavelength: f64,
    pub scenario: ScenarioConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario_id: "reference".into(),
            master_seed: 2024,
            trials: 10,
            snr_grid_db: (0..=6).map(|k| 5.0 * k as f64).collect(),
            predictors: Predictor::ALL.to_vec(),
            dispersion_fits: 3,
            jobs: 1,
            output_path: PathBuf::from("results.csv"),
            record_wall_time: false,
            wavelength: 1.36,
            scenario: ScenarioConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Array sizes, cluster counts and learner settings of the reference
    /// study.
    pub fn reference() -> Self {
        Self::default()
    }

    /// Small scenario that runs in seconds; handy for smoke tests.
    pub fn quick() -> Self {
        let mut cfg = Self {
            scenario_id: "quick".into(),
            trials: 2,
            snr_grid_db: vec![0.0, 15.0, 30.0],
            dispersion_fits: 2,
            ..Self::default()
        };
        let s = &mut cfg.scenario;
        s.geometry.n_tx = 16;
        s.geometry.n_rx = 8;
        s.clusters.n_clusters = 2;
        s.clusters.n_rays = 2;
        s.samples = 400;
        s.tracked_steps = 5;
        s.erm.reservoir_size = 40;
        s.erm.washout = 20;
        s.ensemble.m1 = 3;
        s.rf.n_tx_rf = 2;
        s.rf.n_rx_rf = 2;
        s.rf.n_streams = 2;
        cfg
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "reference" => Some(Self::reference()),
            "quick" => Some(Self::quick()),
            _ => None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario_id.is_empty() || self.scenario_id.contains([',', '"', '\n', '\r']) {
            return Err(Error::Config(
                "scenario_id must be non-empty and free of commas, quotes and newlines".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("snr_grid_db must not be empty".into()));
        }
        if let Some(x) = self.snr_grid_db.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("snr_grid_db: {x} is not finite")));
        }
        if self.predictors.is_empty() {
            return Err(Error::Config(format!(
                "predictors must name at least one of: {}",
                Predictor::valid_names()
            )));
        }
        let mut seen = self.predictors.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.predictors.len() {
            return Err(Error::Config("predictors: duplicate entries".into()));
        }
        if self.dispersion_fits == 0 {
            return Err(Error::Config("dispersion_fits must be >= 1".into()));
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::Config("wavelength must be > 0".into()));
        }
        self.scenario.validate().map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("scenario.{m}")),
            other => other,
        })
    }
}
