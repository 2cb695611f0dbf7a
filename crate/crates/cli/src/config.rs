use std::fmt;
use std::path::{Path, PathBuf};

use nvgf::design::Nonlinearity;
use nvgf::nn::{Architecture, GridSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything a run depends on. Loaded from JSON, then overridden by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Graph JSON (`{"n", "edges", "labels"}`) or edge CSV; the bundled toy graph when absent.
    pub graph: Option<PathBuf>,
    /// Tap JSON; random node-variant taps of `order` when absent.
    pub taps: Option<PathBuf>,
    pub order: usize,
    /// Eigenvalue index of the single-frequency input; the largest when absent.
    pub frequency: Option<usize>,

    pub samples: usize,
    pub nonlinearity: Nonlinearity,
    pub input_mean: f64,
    pub input_std: f64,
    /// Signals CSV (rows are samples) replacing the Gaussian inputs of `design`.
    pub signals: Option<PathBuf>,

    pub epsilons: Vec<f64>,
    pub trials: usize,

    pub arch: Architecture,
    /// Dataset directory written by `wan` or `movies`; the synthetic band dataset when absent.
    pub dataset: Option<PathBuf>,
    pub nodes: usize,
    pub edge_probability: f64,
    pub band_samples: usize,
    pub features: usize,
    pub readout: ReadoutChoice,
    pub train: TrainConfig,
    pub grid: GridSpec,

    pub texts: Option<PathBuf>,
    pub others: Option<PathBuf>,
    pub function_words: Option<PathBuf>,
    pub alpha: f64,
    pub window: usize,

    pub ratings: Option<PathBuf>,
    pub items: usize,
    pub knn: usize,
    /// Item id whose ratings are interpolated.
    pub target: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            graph: None,
            taps: None,
            order: 3,
            frequency: None,
            samples: 10_000,
            nonlinearity: Nonlinearity::Relu,
            input_mean: 0.0,
            input_std: 1.0,
            signals: None,
            epsilons: vec![1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2],
            trials: 20,
            arch: Architecture::LearnNvgf,
            dataset: None,
            nodes: 32,
            edge_probability: 0.2,
            band_samples: 1000,
            features: 32,
            readout: ReadoutChoice::Auto,
            train: TrainConfig::default(),
            grid: GridSpec::default(),
            texts: None,
            others: None,
            function_words: None,
            alpha: 0.75,
            window: 10,
            ratings: None,
            items: 250,
            knn: 10,
            target: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutChoice {
    /// Pooled for the band dataset, the target node for regression, flatten otherwise.
    Auto,
    Flatten,
    Pooled,
    Node,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("bad config {}: {e}", path.display())))
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn check_paths(&self) -> Result<(), ConfigError> {
        let paths = [
            &self.graph,
            &self.taps,
            &self.signals,
            &self.dataset,
            &self.texts,
            &self.others,
            &self.function_words,
            &self.ratings,
        ];
        for p in paths.into_iter().flatten() {
            if !p.exists() {
                return Err(ConfigError(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, ConfigError> {
        field
            .as_deref()
            .ok_or_else(|| ConfigError(format!("`{name}` is required for this command")))
    }
}
