//! JSON run configuration for `search` and `trial`.
//!
//! Every field except `dataset` is optional. Values are resolved in three
//! layers: dataset defaults, then the `--profile`, then the fields present
//! in the file.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use shiftlab::datasets::DatasetKind;
use shiftlab::penalties::Algorithm;
use shiftlab::trainer::{BatchSize, ExperimentConfig, LearningRate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    #[serde(default)]
    pub mnist_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub data_seed: Option<u64>,
    #[serde(default)]
    pub base_seed: Option<u64>,
    #[serde(default)]
    pub algorithms: Option<Vec<Algorithm>>,
    #[serde(default)]
    pub n_trials: Option<usize>,
    #[serde(default)]
    pub repeats: Option<usize>,
    #[serde(default)]
    pub total_steps: Option<usize>,
    #[serde(default)]
    pub lr_decay_at: Option<usize>,
    #[serde(default)]
    pub lr_decay_factor: Option<f64>,
    #[serde(default)]
    pub warmup_steps: Option<usize>,
    #[serde(default)]
    pub val_fraction: Option<f64>,
    #[serde(default)]
    pub alpha_range: Option<(f64, f64)>,
    #[serde(default)]
    pub beta_range: Option<(f64, f64)>,
    #[serde(default)]
    pub lr: Option<LearningRate>,
    #[serde(default)]
    pub batch: Option<BatchSize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    /// Dataset defaults: 25 or 10 trials, 5 or 3 repeats, 2000 steps.
    Full,
    /// 10 trials, 3 repeats, 800 steps.
    Desk,
}

pub const DEFAULT_DATA_SEED: u64 = 2024;
pub const DEFAULT_BASE_SEED: u64 = 7;

impl RunConfig {
    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(DEFAULT_DATA_SEED)
    }

    pub fn experiment(&self, profile: Profile) -> shiftlab::Result<ExperimentConfig> {
        let algorithms = self.algorithms.clone().unwrap_or_else(|| Algorithm::ALL.to_vec());
        let mut e = ExperimentConfig::defaults_for(self.dataset, algorithms, self.base_seed.unwrap_or(DEFAULT_BASE_SEED));
        if profile == Profile::Desk {
            e = e.desk();
        }
        if let Some(v) = self.n_trials {
            e.search.n_trials = v;
        }
        if let Some(v) = self.repeats {
            e.repeats = v;
        }
        if let Some(v) = self.total_steps {
            e.total_steps = v;
        }
        if let Some(v) = self.lr_decay_at {
            e.lr_decay_at = v;
        }
        if let Some(v) = self.lr_decay_factor {
            e.lr_decay_factor = v;
        }
        if let Some(v) = self.warmup_steps {
            e.warmup_steps = v;
        }
        if let Some(v) = self.val_fraction {
            e.val_fraction = v;
        }
        if let Some(v) = self.alpha_range {
            e.search.alpha_range = v;
        }
        if let Some(v) = self.beta_range {
            e.search.beta_range = v;
        }
        if let Some(v) = self.lr {
            e.search.lr = v;
        }
        if let Some(v) = self.batch {
            e.search.batch = v;
        }
        e.validate()?;
        Ok(e)
    }
}
