use rand::Rng;
use serde::{Deserialize, Serialize};

use super::results::{AlgorithmSummary, Summary};
use super::{run_trial, PreparedData, TrialConfig, TrialResult, DEFAULT_VAL_FRACTION};
use crate::datasets::DatasetKind;
use crate::penalties::{Algorithm, ObjectiveConfig, DEFAULT_WARMUP_STEPS};
use crate::rng::Streams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LearningRate {
    Fixed(f64),
    /// Log-uniform in `[lo, hi]`.
    LogUniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BatchSize {
    Fixed(usize),
    /// `2^k` with `k` uniform in `[min_exp, max_exp]`.
    PowerOfTwo { min_exp: u32, max_exp: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    pub n_trials: usize,
    pub alpha_range: (f64, f64),
    pub beta_range: (f64, f64),
    pub lr: LearningRate,
    pub batch: BatchSize,
    pub base_seed: u64,
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        for (name, (lo, hi)) in [("alpha_range", self.alpha_range), ("beta_range", self.beta_range)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Config(format!("{name} must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
            }
        }
        match self.lr {
            LearningRate::Fixed(v) if !(v > 0.0 && v.is_finite()) => {
                return Err(Error::Config(format!("learning rate must be positive, got {v}")))
            }
            LearningRate::LogUniform { lo, hi } if !(lo > 0.0 && lo <= hi && hi.is_finite()) => {
                return Err(Error::Config(format!("learning-rate range must satisfy 0 < lo <= hi, got [{lo}, {hi}]")))
            }
            _ => {}
        }
        match self.batch {
            BatchSize::Fixed(b) if b < 2 => return Err(Error::Config("batch size must be at least 2".into())),
            BatchSize::PowerOfTwo { min_exp, max_exp } if min_exp < 1 || min_exp > max_exp || max_exp > 16 => {
                return Err(Error::Config(format!("bad batch exponent range [{min_exp}, {max_exp}]")))
            }
            _ => {}
        }
        Ok(())
    }

    /// Trial configurations derived from `template`. Every trial draws
    /// `(alpha, beta, lr, batch)` in that order from one stream, whether or
    /// not the algorithm uses them, so two algorithms searched with the same
    /// seed see the same learning rates and batch sizes.
    pub fn sample(&self, template: &TrialConfig) -> Result<Vec<TrialConfig>> {
        self.validate()?;
        let streams = Streams::new(self.base_seed);
        let mut rng = streams.stream("search/hyperparameters");
        (0..self.n_trials)
            .map(|i| {
                let alpha = log_uniform(&mut rng, self.alpha_range);
                let beta = log_uniform(&mut rng, self.beta_range);
                let lr = match self.lr {
                    LearningRate::Fixed(v) => v,
                    LearningRate::LogUniform { lo, hi } => log_uniform(&mut rng, (lo, hi)),
                };
                let batch_size = match self.batch {
                    BatchSize::Fixed(b) => b,
                    BatchSize::PowerOfTwo { min_exp, max_exp } => 1usize << rng.random_range(min_exp..=max_exp),
                };
                let mut cfg = *template;
                cfg.objective.alpha = alpha;
                cfg.objective.beta = beta;
                cfg.lr = lr;
                cfg.batch_size = batch_size;
                cfg.seed = streams.derive_seed(&format!("trial/{i}"));
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}

fn run_all<F>(configs: &[(usize, usize, TrialConfig)], data: &PreparedData, jobs: usize, progress: &F) -> Result<Vec<TrialResult>>
where
    F: Fn(&TrialResult) + Sync,
{
    let one = |&(repeat, trial, cfg): &(usize, usize, TrialConfig)| -> Result<TrialResult> {
        let mut r = run_trial(&cfg, data)?;
        r.repeat = repeat;
        r.trial = trial;
        progress(&r);
        Ok(r)
    };
    #[cfg(feature = "parallel")]
    if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
        return pool.install(|| configs.par_iter().map(one).collect());
    }
    let _ = jobs;
    configs.iter().map(one).collect()
}

/// Runs every sampled configuration; failed trials stay in the list.
pub fn hyperparameter_search<F>(
    spec: &SearchSpec,
    template: &TrialConfig,
    data: &PreparedData,
    jobs: usize,
    progress: &F,
) -> Result<Vec<TrialResult>>
where
    F: Fn(&TrialResult) + Sync,
{
    let configs: Vec<_> = spec.sample(template)?.into_iter().enumerate().map(|(i, c)| (0, i, c)).collect();
    run_all(&configs, data, jobs, progress)
}

/// Highest validation accuracy; ties go to the lowest trial index.
pub fn select_model(results: &[TrialResult]) -> Result<&TrialResult> {
    let mut best: Option<&TrialResult> = None;
    for r in results {
        best = match best {
            None => Some(r),
            Some(b) if r.val_accuracy > b.val_accuracy => Some(r),
            Some(b) if r.val_accuracy == b.val_accuracy && r.trial < b.trial => Some(r),
            keep => keep,
        };
    }
    best.ok_or_else(|| Error::Argument("select_model on an empty result list".into()))
}

/// Mean and sample standard deviation (`n - 1`) of the unseen-domain
/// accuracy; the deviation of a single repeat is zero.
pub fn aggregate_repeats(selected: &[TrialResult]) -> Result<(f64, f64)> {
    let values: Vec<f64> = selected.iter().map(|r| r.test_accuracy).collect();
    mean_std(&values)
}

pub(crate) fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Argument("aggregate of zero repeats".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// Full protocol for one dataset: search, select and repeat for each
/// algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset_kind: DatasetKind,
    pub algorithms: Vec<Algorithm>,
    pub search: SearchSpec,
    pub repeats: usize,
    pub total_steps: usize,
    pub lr_decay_at: usize,
    pub lr_decay_factor: f64,
    pub warmup_steps: usize,
    pub val_fraction: f64,
}

impl ExperimentConfig {
    /// 25 trials, 5 repeats, batch 128, lr 0.1, 2000 steps.
    pub fn cs_cmnist(algorithms: Vec<Algorithm>, base_seed: u64) -> Self {
        Self {
            dataset_kind: DatasetKind::CsCmnist,
            algorithms,
            search: SearchSpec {
                n_trials: 25,
                alpha_range: (1e-1, 1e4),
                beta_range: (1e-1, 1e4),
                lr: LearningRate::Fixed(0.1),
                batch: BatchSize::Fixed(128),
                base_seed,
            },
            repeats: 5,
            total_steps: 2000,
            lr_decay_at: 600,
            lr_decay_factor: 0.1,
            warmup_steps: DEFAULT_WARMUP_STEPS,
            val_fraction: DEFAULT_VAL_FRACTION,
        }
    }

    /// 10 trials, 3 repeats, lr log-uniform in `[10^-4.5, 10^-3.5]`, batch
    /// `2^3 ..= 2^9`.
    pub fn cmnist(algorithms: Vec<Algorithm>, base_seed: u64) -> Self {
        Self {
            dataset_kind: DatasetKind::Cmnist,
            search: SearchSpec {
                n_trials: 10,
                lr: LearningRate::LogUniform { lo: 10f64.powf(-4.5), hi: 10f64.powf(-3.5) },
                batch: BatchSize::PowerOfTwo { min_exp: 3, max_exp: 9 },
                ..Self::cs_cmnist(vec![], base_seed).search
            },
            repeats: 3,
            ..Self::cs_cmnist(algorithms, base_seed)
        }
    }

    pub fn defaults_for(kind: DatasetKind, algorithms: Vec<Algorithm>, base_seed: u64) -> Self {
        match kind {
            DatasetKind::CsCmnist => Self::cs_cmnist(algorithms, base_seed),
            DatasetKind::Cmnist => Self::cmnist(algorithms, base_seed),
        }
    }

    /// Reduced profile for CI-sized runs: 10 trials, 3 repeats, 800 steps.
    pub fn desk(mut self) -> Self {
        self.search.n_trials = 10;
        self.repeats = 3;
        self.total_steps = 800;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be at least 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config("val_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn template(&self, algorithm: Algorithm) -> TrialConfig {
        TrialConfig {
            objective: ObjectiveConfig { algorithm, alpha: 0.0, beta: 0.0, warmup_steps: self.warmup_steps },
            lr: 0.1,
            batch_size: 128,
            total_steps: self.total_steps,
            lr_decay_at: self.lr_decay_at,
            lr_decay_factor: self.lr_decay_factor,
            seed: 0,
            dataset_kind: self.dataset_kind,
        }
    }

    /// Search spec of repeat `r`; repeats differ only in their base seed.
    pub fn repeat_spec(&self, r: usize) -> SearchSpec {
        SearchSpec { base_seed: Streams::new(self.search.base_seed).derive_seed(&format!("repeat/{r}")), ..self.search }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    /// Every trial, ordered by algorithm, repeat, trial.
    pub results: Vec<TrialResult>,
    /// `(algorithm index, repeat) -> position in results` of the selected trial.
    pub selected: Vec<usize>,
    pub summary: Summary,
}

pub fn run_experiment<F>(config: &ExperimentConfig, data: &PreparedData, jobs: usize, progress: &F) -> Result<ExperimentOutcome>
where
    F: Fn(&TrialResult) + Sync,
{
    config.validate()?;
    if data.kind != config.dataset_kind {
        return Err(Error::Config("experiment and data disagree on the dataset".into()));
    }
    let mut configs = Vec::new();
    for &algorithm in &config.algorithms {
        let template = config.template(algorithm);
        for r in 0..config.repeats {
            for (i, cfg) in config.repeat_spec(r).sample(&template)?.into_iter().enumerate() {
                configs.push((r, i, cfg));
            }
        }
    }
    let results = run_all(&configs, data, jobs, progress)?;

    let n = config.search.n_trials;
    let mut selected = Vec::new();
    let mut summaries = Vec::new();
    for (a, &algorithm) in config.algorithms.iter().enumerate() {
        let mut picked = Vec::with_capacity(config.repeats);
        for r in 0..config.repeats {
            let start = (a * config.repeats + r) * n;
            let block = &results[start..start + n];
            let best = select_model(block)?;
            selected.push(start + best.trial);
            picked.push(*best);
        }
        let (mean, std) = aggregate_repeats(&picked)?;
        summaries.push(AlgorithmSummary {
            algorithm,
            mean,
            std,
            repeats: picked.iter().map(|p| p.test_accuracy).collect(),
            selected_val: picked.iter().map(|p| p.val_accuracy).collect(),
            selected_alpha: picked.iter().map(|p| p.config.objective.alpha).collect(),
            selected_beta: picked.iter().map(|p| p.config.objective.beta).collect(),
            failed_trials: results[a * config.repeats * n..(a + 1) * config.repeats * n]
                .iter()
                .filter(|r| r.failed)
                .count(),
        });
    }
    let summary = Summary {
        dataset: config.dataset_kind,
        n_trials: n,
        repeats: config.repeats,
        total_steps: config.total_steps,
        algorithms: summaries,
    };
    Ok(ExperimentOutcome { results, selected, summary })
}
