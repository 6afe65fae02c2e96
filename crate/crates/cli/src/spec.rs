//! Run description: what to run, on which data, with which settings.

use std::path::{Path, PathBuf};

use ldssl::data::{generate_two_gaussians, generate_two_moons, load_csv, LabelTokens, LabeledDataset};
use ldssl::experiment::{ExperimentOptions, Method};
use ldssl::training::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const DEFAULT_N: usize = 2000;
pub const DEFAULT_NOISE: f64 = 0.1;
pub const DEFAULT_SEPARATION: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    TwoMoons {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        /// Generator seed; the run seed when absent.
        #[serde(default)]
        seed: Option<u64>,
    },
    TwoGaussians {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
        #[serde(default)]
        tokens: LabelTokens,
    },
}

fn default_n() -> usize {
    DEFAULT_N
}
fn default_noise() -> f64 {
    DEFAULT_NOISE
}
fn default_separation() -> f64 {
    DEFAULT_SEPARATION
}
fn default_label_column() -> String {
    "label".into()
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::TwoMoons {
            n: DEFAULT_N,
            noise: DEFAULT_NOISE,
            seed: None,
        }
    }
}

impl DatasetSpec {
    pub fn load(&self, run_seed: u64) -> Result<LabeledDataset, CliError> {
        let ds = match self {
            DatasetSpec::TwoMoons { n, noise, seed } => generate_two_moons(*n, *noise, seed.unwrap_or(run_seed))?,
            DatasetSpec::TwoGaussians { n, separation, seed } => {
                generate_two_gaussians(*n, *separation, seed.unwrap_or(run_seed))?
            }
            DatasetSpec::Csv {
                path,
                label_column,
                tokens,
            } => load_csv(path, label_column, tokens)?,
        };
        Ok(ds)
    }
}

/// Serializable description of one invocation. Written as `spec.json` and
/// embedded in the run manifest, so a run can be repeated from either file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub command: String,
    pub method: Method,
    pub dataset: DatasetSpec,
    pub m_fraction: f64,
    pub k: usize,
    pub seed: u64,
    pub jobs: usize,
    pub standardize: bool,
    pub repetitions: Option<usize>,
    pub m_list: Vec<f64>,
    pub k_list: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for RunSpec {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            command: "train".into(),
            method: Method::Sembc,
            dataset: DatasetSpec::default(),
            m_fraction: 0.10,
            k: train.k,
            seed: 0,
            jobs: 1,
            standardize: true,
            repetitions: None,
            m_list: vec![0.10, 0.30, 0.50],
            k_list: vec![3, 11, 19],
            train,
        }
    }
}

impl RunSpec {
    /// Defaults overlaid with a config file. The file may hold a partial
    /// spec, a full `spec.json`, or a run manifest.
    pub fn from_config(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("config {} is not valid JSON: {e}", path.display())))?;
        if value.get("format").and_then(Value::as_str) == Some(ldssl::experiment::MANIFEST_FORMAT) {
            value = value.get("spec").cloned().unwrap_or(Value::Null);
        }
        let mut base = serde_json::to_value(Self::default()).expect("spec serializes");
        merge(&mut base, value);
        serde_json::from_value(base).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }

    /// The experiment settings with run-level `seed` and `k` applied.
    pub fn options(&self) -> ExperimentOptions {
        ExperimentOptions {
            method: self.method,
            m_fraction: self.m_fraction,
            config: self.train_config(),
            standardize: self.standardize,
            jobs: self.jobs,
            repetitions: self.repetitions,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            k: self.k,
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Keeps the nested training config in step with run-level fields.
    pub fn normalize(&mut self) {
        self.train.k = self.k;
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.m_fraction > 0.0 && self.m_fraction <= 1.0) {
            return Err(CliError::config(format!("--m must lie in (0, 1], got {}", self.m_fraction)));
        }
        if self.k == 0 {
            return Err(CliError::config("--k must be >= 1"));
        }
        if self.jobs == 0 {
            return Err(CliError::config("--jobs must be >= 1"));
        }
        if self.repetitions == Some(0) {
            return Err(CliError::config("--repetitions must be >= 1"));
        }
        if let Some(m) = self.m_list.iter().find(|m| !(**m > 0.0 && **m <= 1.0)) {
            return Err(CliError::config(format!("m list entry {m} outside (0, 1]")));
        }
        if self.k_list.contains(&0) {
            return Err(CliError::config("k list entries must be >= 1"));
        }
        self.train_config().validate().map_err(|e| CliError::Config {
            module: "training",
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

/// Recursive object merge; a dataset of a different `source` replaces the
/// base dataset wholesale.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            let replace = b.get("source").is_some() && o.get("source").is_some() && b.get("source") != o.get("source");
            if replace {
                *b = o;
                return;
            }
            for (key, value) in o {
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn partial_config_keeps_defaults() {
        let mut base = serde_json::to_value(RunSpec::default()).unwrap();
        merge(&mut base, json!({"k": 3, "train": {"epochs": 5}}));
        let spec: RunSpec = serde_json::from_value(base).unwrap();
        assert_eq!(spec.k, 3);
        assert_eq!(spec.train.epochs, 5);
        assert_eq!(spec.train.batch_size, 32);
        assert_eq!(spec.m_fraction, 0.10);
    }

    #[test]
    fn dataset_source_switch_replaces() {
        let mut base = serde_json::to_value(RunSpec::default()).unwrap();
        merge(&mut base, json!({"dataset": {"source": "two-gaussians", "n": 100}}));
        let spec: RunSpec = serde_json::from_value(base).unwrap();
        assert_eq!(
            spec.dataset,
            DatasetSpec::TwoGaussians {
                n: 100,
                separation: DEFAULT_SEPARATION,
                seed: None
            }
        );
    }

    #[test]
    fn spec_round_trips() {
        let spec = RunSpec {
            dataset: DatasetSpec::Csv {
                path: "a.csv".into(),
                label_column: "y".into(),
                tokens: LabelTokens::default(),
            },
            ..RunSpec::default()
        };
        let back: RunSpec = serde_json::from_str(&spec.to_json()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut base = serde_json::to_value(RunSpec::default()).unwrap();
        merge(&mut base, json!({"epochz": 3}));
        assert!(serde_json::from_value::<RunSpec>(base).is_err());
    }
}
