//! results.csv, summary.json and the markdown accuracy table.
//!
//! results.csv has one row per trial. `wall_time_s` is always the last
//! column so that determinism checks can drop it with a single `cut`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrialResult;
use crate::datasets::DatasetKind;
use crate::penalties::Algorithm;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub algorithm: String,
    pub repeat: usize,
    pub trial: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub final_train_risk: Option<f64>,
    pub failed: bool,
    pub selected: bool,
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn new(r: &TrialResult, selected: bool) -> Self {
        Self {
            dataset: r.config.dataset_kind.slug().to_string(),
            algorithm: r.config.objective.algorithm.name().to_string(),
            repeat: r.repeat,
            trial: r.trial,
            alpha: r.config.objective.alpha,
            beta: r.config.objective.beta,
            lr: r.config.lr,
            batch_size: r.config.batch_size,
            total_steps: r.config.total_steps,
            seed: r.config.seed,
            val_accuracy: r.val_accuracy,
            test_accuracy: r.test_accuracy,
            final_train_risk: r.final_train_risk,
            failed: r.failed,
            selected,
            wall_time_s: r.wall_time_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    /// Mean unseen-domain accuracy of the selected models, in `[0, 1]`.
    pub mean: f64,
    /// Sample standard deviation across repeats.
    pub std: f64,
    pub repeats: Vec<f64>,
    pub selected_val: Vec<f64>,
    pub selected_alpha: Vec<f64>,
    pub selected_beta: Vec<f64>,
    pub failed_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub dataset: DatasetKind,
    pub n_trials: usize,
    pub repeats: usize,
    pub total_steps: usize,
    pub algorithms: Vec<AlgorithmSummary>,
}

impl Summary {
    pub fn get(&self, algorithm: Algorithm) -> Option<&AlgorithmSummary> {
        self.algorithms.iter().find(|a| a.algorithm == algorithm)
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Argument(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn results_csv_bytes(results: &[TrialResult], selected: &[usize]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (i, r) in results.iter().enumerate() {
        w.serialize(ResultRow::new(r, selected.contains(&i)))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// `selected` holds positions in `results` of the selected trials.
pub fn write_results_csv(path: &Path, results: &[TrialResult], selected: &[usize]) -> Result<()> {
    write_atomic(path, &results_csv_bytes(results, selected)?)
}

pub fn write_summary(path: &Path, summaries: &[Summary]) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(summaries)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Accepts either a single summary object or a list of them.
pub fn read_summary(path: &Path) -> Result<Vec<Summary>> {
    let text = fs::read_to_string(path)?;
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<Summary>),
        One(Summary),
    }
    match serde_json::from_str(&text)? {
        OneOrMany::Many(v) => Ok(v),
        OneOrMany::One(s) => Ok(vec![s]),
    }
}

/// Algorithms as columns in the fixed table order, datasets as rows, cells
/// `mean ± std` in percent with one decimal. Only algorithms present in at
/// least one summary get a column; missing cells are `-`.
pub fn render_markdown_table(summaries: &[Summary]) -> String {
    let columns: Vec<Algorithm> =
        Algorithm::ALL.iter().copied().filter(|a| summaries.iter().any(|s| s.get(*a).is_some())).collect();
    let mut out = String::from("| Dataset |");
    for a in &columns {
        out.push_str(&format!(" {a} |"));
    }
    out.push_str("\n|---|");
    for _ in &columns {
        out.push_str("---|");
    }
    out.push('\n');
    for s in summaries {
        out.push_str(&format!("| {} |", s.dataset.display_name()));
        for a in &columns {
            match s.get(*a) {
                Some(v) => out.push_str(&format!(" {:.1} ± {:.1} |", 100.0 * v.mean, 100.0 * v.std)),
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}
