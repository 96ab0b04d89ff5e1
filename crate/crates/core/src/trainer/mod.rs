//! Training protocol: per-step objective, random search over `(alpha,
//! beta)`, training-domain validation model selection, repeat aggregation.

mod results;
mod search;

use std::time::Instant;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::datasets::{split_train_val, ColoredDataset, DatasetKind, DomainRole};
use crate::models::{build_network, Network};
use crate::penalties::{record_objective, DomainOutputs, ObjectiveConfig};
use crate::rng::Streams;
use crate::tensor::{sgd_step, StepDecay, Tape, Tensor};
use crate::{Error, Result};

pub use results::{
    read_summary, render_markdown_table, results_csv_bytes, write_atomic, write_results_csv, write_summary, AlgorithmSummary,
    ResultRow, Summary,
};
pub use search::{
    aggregate_repeats, hyperparameter_search, run_experiment, select_model, BatchSize, ExperimentConfig,
    ExperimentOutcome, LearningRate, SearchSpec,
};

pub const DEFAULT_VAL_FRACTION: f64 = 0.2;
pub const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub objective: ObjectiveConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub lr_decay_at: usize,
    pub lr_decay_factor: f64,
    pub seed: u64,
    pub dataset_kind: DatasetKind,
}

impl TrialConfig {
    /// Batch 128, lr 0.1 decayed tenfold after 600 steps, 2000 steps.
    pub fn cs_cmnist_defaults(objective: ObjectiveConfig, seed: u64) -> Self {
        Self {
            objective,
            lr: 0.1,
            batch_size: 128,
            total_steps: 2000,
            lr_decay_at: 600,
            lr_decay_factor: 0.1,
            seed,
            dataset_kind: DatasetKind::CsCmnist,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return Err(Error::Config("lr_decay_factor must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> StepDecay {
        StepDecay { decay_at: self.lr_decay_at, factor: self.lr_decay_factor }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config: TrialConfig,
    pub repeat: usize,
    pub trial: usize,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    /// Mean seen-domain risk over the last tenth of the steps; `None` for a failed run.
    pub final_train_risk: Option<f64>,
    pub failed: bool,
    pub wall_time_s: f64,
}

/// Seen-domain train/validation splits and the unseen domain.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub kind: DatasetKind,
    pub train: Vec<ColoredDataset>,
    pub val: Vec<ColoredDataset>,
    pub unseen: ColoredDataset,
}

impl PreparedData {
    pub fn new(domains: [ColoredDataset; 3], val_fraction: f64, split_seed: u64) -> Result<Self> {
        let kind = domains[0].kind;
        let mut train = Vec::new();
        let mut val = Vec::new();
        let mut unseen = None;
        for d in domains {
            if d.kind != kind {
                return Err(Error::Argument("domains come from different datasets".into()));
            }
            match d.domain.role {
                DomainRole::Seen => {
                    let (t, v) = split_train_val(&d, val_fraction, split_seed)?;
                    train.push(t);
                    val.push(v);
                }
                DomainRole::Unseen if unseen.is_none() => unseen = Some(d),
                DomainRole::Unseen => return Err(Error::Argument("more than one unseen domain".into())),
            }
        }
        let unseen = unseen.ok_or_else(|| Error::Argument("no unseen domain".into()))?;
        if train.len() < 2 {
            return Err(Error::Argument("need two seen domains".into()));
        }
        Ok(Self { kind, train, val, unseen })
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Number of correct argmax predictions over the whole dataset.
fn count_correct(net: &Network, ds: &ColoredDataset, batch: usize) -> Result<usize> {
    let mut correct = 0;
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(batch.max(1)) {
        let (x, y) = ds.batch(chunk);
        let (_, logits) = net.predict(x)?;
        let c = logits.shape()[1];
        correct += logits.data().chunks_exact(c).zip(&y).filter(|(row, &t)| argmax(row) == t).count();
    }
    Ok(correct)
}

/// Fraction of items whose argmax prediction matches the label.
pub fn evaluate(net: &Network, ds: &ColoredDataset, batch: usize) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Argument("evaluate on an empty dataset".into()));
    }
    Ok(count_correct(net, ds, batch)? as f64 / ds.len() as f64)
}

/// Accuracy over the union of several datasets.
pub fn evaluate_pooled(net: &Network, sets: &[ColoredDataset], batch: usize) -> Result<f64> {
    let total: usize = sets.iter().map(|s| s.len()).sum();
    if total == 0 {
        return Err(Error::Argument("evaluate on an empty dataset".into()));
    }
    let mut correct = 0;
    for s in sets {
        correct += count_correct(net, s, batch)?;
    }
    Ok(correct as f64 / total as f64)
}

/// Per-step record of a training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub objective: f64,
    pub risk: f64,
}

/// Trains a fresh network. Returns the network and one log entry per step,
/// or `Ok(None)` if the objective became non-finite.
pub fn train(config: &TrialConfig, data: &PreparedData) -> Result<Option<(Network, Vec<StepLog>)>> {
    config.validate()?;
    if config.dataset_kind != data.kind {
        return Err(Error::Config(format!(
            "trial configured for {} but data is {}",
            config.dataset_kind.display_name(),
            data.kind.display_name()
        )));
    }
    let streams = Streams::new(config.seed);
    let mut net = build_network(config.dataset_kind, &mut streams.stream("init"));
    let mut sampler = streams.stream("batches");
    let mut log = Vec::with_capacity(config.total_steps);

    for step in 0..config.total_steps {
        let batches: Vec<(Tensor, Vec<usize>)> = data
            .train
            .iter()
            .map(|d| {
                let picks = index::sample(&mut sampler, d.len(), config.batch_size.min(d.len())).into_vec();
                d.batch(&picks)
            })
            .collect();

        let mut tape = Tape::new();
        let outcome = (|| -> Result<StepLog> {
            let bound = net.bind(&mut tape);
            let mut outputs = Vec::with_capacity(batches.len());
            for (x, _) in &batches {
                let x = tape.input(x.clone())?;
                outputs.push(net.forward(&mut tape, &bound, x)?);
            }
            let domains: Vec<DomainOutputs<'_>> = outputs
                .iter()
                .zip(&batches)
                .map(|(&(features, logits), (_, y))| DomainOutputs { features, logits, labels: y })
                .collect();
            let terms = record_objective(&mut tape, &config.objective, &domains, step)?;
            tape.backward(terms.total, &mut net.params)?;
            Ok(StepLog {
                step,
                objective: tape.value(terms.total).item()?,
                risk: tape.value(terms.risk).item()?,
            })
        })();
        match outcome {
            Ok(entry) => log.push(entry),
            Err(Error::NonFinite(_)) => return Ok(None),
            Err(e) => return Err(e),
        }
        sgd_step(&mut net.params, config.lr, step, config.schedule())?;
        if !net.params.iter().all(|p| p.tensor.is_finite()) {
            return Ok(None);
        }
    }
    Ok(Some((net, log)))
}

/// Trains one configuration and scores it on the pooled seen-domain
/// validation splits and on the unseen domain. A diverged run is reported
/// as failed with zero accuracies.
pub fn run_trial(config: &TrialConfig, data: &PreparedData) -> Result<TrialResult> {
    Ok(run_trial_with_model(config, data)?.0)
}

/// [`run_trial`] that also hands back the trained network.
pub fn run_trial_with_model(config: &TrialConfig, data: &PreparedData) -> Result<(TrialResult, Option<Network>)> {
    let started = Instant::now();
    let mut result = TrialResult {
        config: *config,
        repeat: 0,
        trial: 0,
        val_accuracy: 0.0,
        test_accuracy: 0.0,
        final_train_risk: None,
        failed: true,
        wall_time_s: 0.0,
    };
    let trained = train(config, data)?;
    if let Some((net, log)) = &trained {
        let tail = (log.len() / 10).max(1);
        result.final_train_risk = Some(log[log.len() - tail..].iter().map(|l| l.risk).sum::<f64>() / tail as f64);
        result.val_accuracy = evaluate_pooled(net, &data.val, EVAL_BATCH)?;
        result.test_accuracy = evaluate(net, &data.unseen, EVAL_BATCH)?;
        result.failed = false;
    }
    result.wall_time_s = started.elapsed().as_secs_f64();
    Ok((result, trained.map(|(net, _)| net)))
}
