//! Alignment penalties and composite training objectives.
//!
//! Covariate alignment compares the marginal feature distributions of two
//! seen domains ([`mmd2`], [`coral`]). Concept alignment acts on the
//! classifier: the IRM penalty ([`irm_penalty`]) asks the head to be
//! simultaneously optimal on every domain, and [`cem_loss`] adds the
//! class-conditional feature entropy on top of it. The objective of a
//! training step is
//!
//! ```text
//! R(f, g) + alpha * covariate(f) + beta * concept(f, g)
//! ```
//!
//! where `R` is the mean per-domain cross-entropy and both weights are held
//! at zero during the warmup steps.
//!
//! Every penalty is available as a plain function on [`Tensor`]s and as a
//! fused [`ScalarFunction`] that can be recorded on a [`Tape`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::tensor::{ScalarFunction, Tape, Tensor, Var};
use crate::{Error, Result};

/// RBF bandwidths `gamma` in `k(u, v) = exp(-gamma * |u - v|^2)`.
pub const MMD_GAMMAS: [f64; 7] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];

/// Variance floor of the Gaussian entropy estimator.
pub const ENTROPY_FLOOR: f64 = 1e-5;

pub const DEFAULT_WARMUP_STEPS: usize = 500;

/// Features, labels and logits of one seen domain in the current step.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub domain_id: usize,
    pub z: Tensor,
    pub y: Vec<usize>,
    pub logits: Tensor,
}

impl FeatureBatch {
    pub fn validate(&self) -> Result<()> {
        let (n, _) = dims(&self.z, "features")?;
        let (ln, c) = dims(&self.logits, "logits")?;
        if n == 0 {
            return Err(Error::Argument(format!("domain {} has an empty batch", self.domain_id)));
        }
        if ln != n || self.y.len() != n {
            return Err(Error::Dimension(format!(
                "domain {}: {n} feature rows, {ln} logit rows, {} labels",
                self.domain_id,
                self.y.len()
            )));
        }
        if let Some(&y) = self.y.iter().find(|&&y| y >= c) {
            return Err(Error::Index(format!("label {y} outside [0, {c})")));
        }
        if !self.z.is_finite() || !self.logits.is_finite() {
            return Err(Error::NonFinite(format!("domain {} batch is not finite", self.domain_id)));
        }
        Ok(())
    }
}

fn dims(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match t.shape() {
        [n, d] => Ok((*n, *d)),
        s => Err(Error::Dimension(format!("{what} must be [n, d], got {s:?}"))),
    }
}

fn nonempty_pair(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    let (na, da) = dims(a, "first batch")?;
    let (nb, db) = dims(b, "second batch")?;
    if na == 0 || nb == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    if da != db {
        return Err(Error::Argument(format!("feature dimension mismatch: {da} vs {db}")));
    }
    Ok((na, nb, da))
}

fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum()
}

fn kernel_sum(d2: f64, gammas: &[f64]) -> f64 {
    gammas.iter().map(|g| (-g * d2).exp()).sum()
}

/// `sum_gamma -2 gamma exp(-gamma d2)`, the derivative of the kernel sum in `d2`.
fn kernel_slope(d2: f64, gammas: &[f64]) -> f64 {
    gammas.iter().map(|g| -2.0 * g * (-g * d2).exp()).sum()
}

/// Biased (V-statistic) squared MMD summed over RBF kernels.
pub fn mmd2(a: &Tensor, b: &Tensor, gammas: &[f64]) -> Result<f64> {
    let (na, nb, _) = nonempty_pair(a, b)?;
    if gammas.is_empty() || gammas.iter().any(|g| g.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
        return Err(Error::Argument("bandwidths must be positive".into()));
    }
    let mean_k = |x: &Tensor, nx: usize, y: &Tensor, ny: usize| {
        let mut s = 0.0;
        for i in 0..nx {
            for j in 0..ny {
                s += kernel_sum(sq_dist(x.row(i), y.row(j)), gammas);
            }
        }
        s / (nx * ny) as f64
    };
    Ok(mean_k(a, na, a, na) + mean_k(b, nb, b, nb) - 2.0 * mean_k(a, na, b, nb))
}

fn mmd2_gradient(a: &Tensor, b: &Tensor, gammas: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (na, nb, d) = nonempty_pair(a, b)?;
    // d/dx_i sum_k K(x_i, x_k) over the self block counts each pair twice.
    let self_block = |x: &Tensor, n: usize, out: &mut [f64], coef: f64| {
        for i in 0..n {
            for k in 0..n {
                if i == k {
                    continue;
                }
                let (xi, xk) = (x.row(i), x.row(k));
                let w = coef * kernel_slope(sq_dist(xi, xk), gammas);
                for j in 0..d {
                    out[i * d + j] += w * (xi[j] - xk[j]);
                }
            }
        }
    };
    let mut ga = vec![0.0; na * d];
    let mut gb = vec![0.0; nb * d];
    self_block(a, na, &mut ga, 2.0 / (na * na) as f64);
    self_block(b, nb, &mut gb, 2.0 / (nb * nb) as f64);
    let cross = -2.0 / (na * nb) as f64;
    for i in 0..na {
        for l in 0..nb {
            let (ai, bl) = (a.row(i), b.row(l));
            let w = cross * kernel_slope(sq_dist(ai, bl), gammas);
            for j in 0..d {
                let diff = ai[j] - bl[j];
                ga[i * d + j] += w * diff;
                gb[l * d + j] -= w * diff;
            }
        }
    }
    Ok((ga, gb))
}

/// Row means and population covariance of an `[n, d]` batch.
fn moments(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.shape()[0], x.shape()[1]);
    let mut mu = vec![0.0; d];
    for i in 0..n {
        mu.iter_mut().zip(x.row(i)).for_each(|(m, v)| *m += v);
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        let r = x.row(i);
        for p in 0..d {
            let cp = r[p] - mu[p];
            for q in 0..d {
                cov[p * d + q] += cp * (r[q] - mu[q]);
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= n as f64);
    (mu, cov)
}

/// `|mu_A - mu_B|^2 + |C_A - C_B|_F^2` with population covariances.
pub fn coral(a: &Tensor, b: &Tensor) -> Result<f64> {
    nonempty_pair(a, b)?;
    let (ma, ca) = moments(a);
    let (mb, cb) = moments(b);
    let mean_gap: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y).powi(2)).sum();
    let cov_gap: f64 = ca.iter().zip(&cb).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(mean_gap + cov_gap)
}

fn coral_gradient(a: &Tensor, b: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let (na, nb, d) = nonempty_pair(a, b)?;
    let (ma, ca) = moments(a);
    let (mb, cb) = moments(b);
    let dm: Vec<f64> = ma.iter().zip(&mb).map(|(x, y)| x - y).collect();
    let dc: Vec<f64> = ca.iter().zip(&cb).map(|(x, y)| x - y).collect();
    let side = |x: &Tensor, n: usize, mu: &[f64], sign: f64| {
        let mut g = vec![0.0; n * d];
        for i in 0..n {
            let r = x.row(i);
            for p in 0..d {
                let mut acc = 2.0 * dm[p];
                for q in 0..d {
                    acc += 4.0 * dc[p * d + q] * (r[q] - mu[q]);
                }
                g[i * d + p] = sign * acc / n as f64;
            }
        }
        g
    };
    Ok((side(a, na, &ma, 1.0), side(b, nb, &mb, -1.0)))
}

fn softmax_row(o: &[f64]) -> Vec<f64> {
    let max = o.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = o.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Derivative at `w = 1` of `w -> mean cross-entropy(w * logits)`:
/// the batch mean of `<softmax(o_i) - onehot(y_i), o_i>`.
pub fn irm_slope(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let (n, c) = dims(logits, "logits")?;
    if n == 0 || labels.len() != n {
        return Err(Error::Argument(format!("{} labels for {n} logit rows", labels.len())));
    }
    let mut s = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Index(format!("label {y} outside [0, {c})")));
        }
        let o = logits.row(i);
        let p = softmax_row(o);
        s += p.iter().zip(o).map(|(pk, ok)| pk * ok).sum::<f64>() - o[y];
    }
    Ok(s / n as f64)
}

fn irm_slope_gradient(logits: &Tensor, labels: &[usize]) -> Vec<f64> {
    let (n, c) = (logits.shape()[0], logits.shape()[1]);
    let mut g = vec![0.0; n * c];
    for (i, &y) in labels.iter().enumerate() {
        let o = logits.row(i);
        let p = softmax_row(o);
        let po: f64 = p.iter().zip(o).map(|(a, b)| a * b).sum();
        for k in 0..c {
            let onehot = if k == y { 1.0 } else { 0.0 };
            g[i * c + k] = (p[k] - onehot + p[k] * (o[k] - po)) / n as f64;
        }
    }
    g
}

/// Mean over domains of the squared IRM slope.
pub fn irm_penalty(batches: &[FeatureBatch]) -> Result<f64> {
    if batches.is_empty() {
        return Err(Error::Argument("irm_penalty needs at least one batch".into()));
    }
    let mut total = 0.0;
    for b in batches {
        b.validate()?;
        total += irm_slope(&b.logits, &b.y)?.powi(2);
    }
    Ok(total / batches.len() as f64)
}

/// Count, mean and variance per class.
type ClassStats = (usize, Vec<f64>, Vec<f64>);

fn class_stats(z: &Tensor, y: &[usize]) -> Result<Vec<ClassStats>> {
    let (n, d) = dims(z, "features")?;
    if n == 0 {
        return Err(Error::Argument("conditional_entropy of an empty batch".into()));
    }
    if y.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} rows", y.len())));
    }
    let classes = y.iter().max().map_or(0, |m| m + 1);
    let mut count = vec![0usize; classes];
    let mut mean = vec![vec![0.0; d]; classes];
    for (i, &c) in y.iter().enumerate() {
        count[c] += 1;
        mean[c].iter_mut().zip(z.row(i)).for_each(|(m, v)| *m += v);
    }
    for (m, &k) in mean.iter_mut().zip(&count) {
        if k > 0 {
            m.iter_mut().for_each(|v| *v /= k as f64);
        }
    }
    let mut var = vec![vec![0.0; d]; classes];
    for (i, &c) in y.iter().enumerate() {
        for (j, v) in z.row(i).iter().enumerate() {
            var[c][j] += (v - mean[c][j]).powi(2);
        }
    }
    Ok(count
        .into_iter()
        .zip(mean)
        .zip(var)
        .filter(|((k, _), _)| *k > 0)
        .map(|((k, m), mut v)| {
            v.iter_mut().for_each(|x| *x /= k as f64);
            (k, m, v)
        })
        .collect())
}

/// Class-conditional diagonal-Gaussian entropy of the features:
/// `sum_c (n_c/n) * 1/2 * sum_j ln(2 pi e * max(var_cj, eps))`.
pub fn conditional_entropy(z: &Tensor, y: &[usize]) -> Result<f64> {
    let n = y.len() as f64;
    let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
    Ok(class_stats(z, y)?
        .iter()
        .map(|(k, _, var)| {
            let h: f64 = var.iter().map(|v| 0.5 * (two_pi_e * v.max(ENTROPY_FLOOR)).ln()).sum();
            *k as f64 / n * h
        })
        .sum())
}

fn conditional_entropy_gradient(z: &Tensor, y: &[usize]) -> Result<Vec<f64>> {
    let d = z.shape()[1];
    let n = y.len() as f64;
    let stats = class_stats(z, y)?;
    let classes = y.iter().max().map_or(0, |m| m + 1);
    let mut lookup: Vec<Option<usize>> = vec![None; classes];
    // `stats` keeps present classes in increasing label order.
    let mut present = (0..classes).filter(|c| y.contains(c));
    for (slot, _) in stats.iter().enumerate() {
        lookup[present.next().expect("class present")] = Some(slot);
    }
    let mut g = vec![0.0; y.len() * d];
    for (i, &c) in y.iter().enumerate() {
        let (_, mean, var) = &stats[lookup[c].expect("class present")];
        for j in 0..d {
            if var[j] > ENTROPY_FLOOR {
                g[i * d + j] = (z.row(i)[j] - mean[j]) / (n * var[j]);
            }
        }
    }
    Ok(g)
}

/// Mean over feature dimensions of the population variance.
pub fn ib_variance_penalty(z: &Tensor) -> Result<f64> {
    let (n, d) = dims(z, "features")?;
    if n == 0 || d == 0 {
        return Err(Error::Argument("ib_variance_penalty of an empty batch".into()));
    }
    let (_, cov) = moments(z);
    Ok((0..d).map(|j| cov[j * d + j]).sum::<f64>() / d as f64)
}

fn ib_variance_gradient(z: &Tensor) -> Vec<f64> {
    let (n, d) = (z.shape()[0], z.shape()[1]);
    let (mu, _) = moments(z);
    let scale = 2.0 / (n * d) as f64;
    let mut g = Vec::with_capacity(n * d);
    for i in 0..n {
        g.extend(z.row(i).iter().zip(&mu).map(|(v, m)| scale * (v - m)));
    }
    g
}

/// IRM penalty plus the class-conditional entropy of the pooled features.
pub fn cem_loss(batches: &[FeatureBatch]) -> Result<f64> {
    let irm = irm_penalty(batches)?;
    let zs: Vec<&Tensor> = batches.iter().map(|b| &b.z).collect();
    let pooled = Tensor::concat_rows(&zs)?;
    let labels: Vec<usize> = batches.iter().flat_map(|b| b.y.iter().copied()).collect();
    Ok(irm + conditional_entropy(&pooled, &labels)?)
}

// ---------------------------------------------------------------------------
// Tape nodes

struct MmdNode {
    gammas: Vec<f64>,
}

impl ScalarFunction for MmdNode {
    fn name(&self) -> &str {
        "mmd2"
    }
    fn value(&self, inputs: &[&Tensor]) -> Result<f64> {
        mmd2(inputs[0], inputs[1], &self.gammas)
    }
    fn gradient(&self, inputs: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
        let (a, b) = mmd2_gradient(inputs[0], inputs[1], &self.gammas)?;
        Ok(vec![a, b])
    }
}

struct CoralNode;

impl ScalarFunction for CoralNode {
    fn name(&self) -> &str {
        "coral"
    }
    fn value(&self, inputs: &[&Tensor]) -> Result<f64> {
        coral(inputs[0], inputs[1])
    }
    fn gradient(&self, inputs: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
        let (a, b) = coral_gradient(inputs[0], inputs[1])?;
        Ok(vec![a, b])
    }
}

/// Inputs: one logits tensor per domain.
struct IrmNode {
    labels: Vec<Vec<usize>>,
}

impl ScalarFunction for IrmNode {
    fn name(&self) -> &str {
        "irm_penalty"
    }
    fn value(&self, inputs: &[&Tensor]) -> Result<f64> {
        let mut total = 0.0;
        for (o, y) in inputs.iter().zip(&self.labels) {
            total += irm_slope(o, y)?.powi(2);
        }
        Ok(total / inputs.len() as f64)
    }
    fn gradient(&self, inputs: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
        let e = inputs.len() as f64;
        inputs
            .iter()
            .zip(&self.labels)
            .map(|(o, y)| {
                let s = irm_slope(o, y)?;
                let mut g = irm_slope_gradient(o, y);
                g.iter_mut().for_each(|v| *v *= 2.0 * s / e);
                Ok(g)
            })
            .collect()
    }
}

/// Inputs: one feature tensor per domain, pooled before estimation.
struct EntropyNode {
    labels: Vec<Vec<usize>>,
}

impl EntropyNode {
    fn pooled(&self, inputs: &[&Tensor]) -> Result<(Tensor, Vec<usize>)> {
        let z = Tensor::concat_rows(inputs)?;
        let y = self.labels.iter().flatten().copied().collect();
        Ok((z, y))
    }
}

impl ScalarFunction for EntropyNode {
    fn name(&self) -> &str {
        "conditional_entropy"
    }
    fn value(&self, inputs: &[&Tensor]) -> Result<f64> {
        let (z, y) = self.pooled(inputs)?;
        conditional_entropy(&z, &y)
    }
    fn gradient(&self, inputs: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
        let (z, y) = self.pooled(inputs)?;
        let g = conditional_entropy_gradient(&z, &y)?;
        let mut out = Vec::with_capacity(inputs.len());
        let mut offset = 0;
        for t in inputs {
            out.push(g[offset..offset + t.len()].to_vec());
            offset += t.len();
        }
        Ok(out)
    }
}

struct IbVarianceNode;

impl ScalarFunction for IbVarianceNode {
    fn name(&self) -> &str {
        "ib_variance"
    }
    fn value(&self, inputs: &[&Tensor]) -> Result<f64> {
        ib_variance_penalty(inputs[0])
    }
    fn gradient(&self, inputs: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![ib_variance_gradient(inputs[0])])
    }
}

pub fn record_mmd2(tape: &mut Tape, a: Var, b: Var, gammas: &[f64]) -> Result<Var> {
    tape.custom(&[a, b], Box::new(MmdNode { gammas: gammas.to_vec() }))
}

pub fn record_coral(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    tape.custom(&[a, b], Box::new(CoralNode))
}

pub fn record_irm_penalty(tape: &mut Tape, logits: &[Var], labels: &[&[usize]]) -> Result<Var> {
    let labels = labels.iter().map(|y| y.to_vec()).collect();
    tape.custom(logits, Box::new(IrmNode { labels }))
}

pub fn record_conditional_entropy(tape: &mut Tape, z: &[Var], labels: &[&[usize]]) -> Result<Var> {
    let labels = labels.iter().map(|y| y.to_vec()).collect();
    tape.custom(z, Box::new(EntropyNode { labels }))
}

pub fn record_ib_variance(tape: &mut Tape, z: Var) -> Result<Var> {
    tape.custom(&[z], Box::new(IbVarianceNode))
}

// ---------------------------------------------------------------------------
// Composite objectives

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ERM")]
    Erm,
    #[serde(rename = "IRM")]
    Irm,
    #[serde(rename = "IB-ERM")]
    IbErm,
    #[serde(rename = "IB-IRM")]
    IbIrm,
    #[serde(rename = "MMD-IRM")]
    MmdIrm,
    #[serde(rename = "CEM")]
    Cem,
    #[serde(rename = "MMD-CEM")]
    MmdCem,
    #[serde(rename = "CORAL-CEM")]
    CoralCem,
    #[serde(rename = "MMD")]
    Mmd,
    #[serde(rename = "CORAL")]
    Coral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariatePenalty {
    Mmd,
    Coral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConceptPenalty {
    Irm,
    Cem,
    Ib,
    IbIrm,
}

impl Algorithm {
    /// Results-table column order.
    pub const ALL: [Algorithm; 10] = [
        Algorithm::Erm,
        Algorithm::Irm,
        Algorithm::IbErm,
        Algorithm::IbIrm,
        Algorithm::MmdIrm,
        Algorithm::Cem,
        Algorithm::MmdCem,
        Algorithm::CoralCem,
        Algorithm::Mmd,
        Algorithm::Coral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Erm => "ERM",
            Algorithm::Irm => "IRM",
            Algorithm::IbErm => "IB-ERM",
            Algorithm::IbIrm => "IB-IRM",
            Algorithm::MmdIrm => "MMD-IRM",
            Algorithm::Cem => "CEM",
            Algorithm::MmdCem => "MMD-CEM",
            Algorithm::CoralCem => "CORAL-CEM",
            Algorithm::Mmd => "MMD",
            Algorithm::Coral => "CORAL",
        }
    }

    /// Penalty weighted by `alpha`.
    pub fn covariate(self) -> Option<CovariatePenalty> {
        match self {
            Algorithm::Mmd | Algorithm::MmdIrm | Algorithm::MmdCem => Some(CovariatePenalty::Mmd),
            Algorithm::Coral | Algorithm::CoralCem => Some(CovariatePenalty::Coral),
            _ => None,
        }
    }

    /// Penalty weighted by `beta`.
    pub fn concept(self) -> Option<ConceptPenalty> {
        match self {
            Algorithm::Irm | Algorithm::MmdIrm => Some(ConceptPenalty::Irm),
            Algorithm::Cem | Algorithm::MmdCem | Algorithm::CoralCem => Some(ConceptPenalty::Cem),
            Algorithm::IbErm => Some(ConceptPenalty::Ib),
            Algorithm::IbIrm => Some(ConceptPenalty::IbIrm),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
}

fn default_warmup() -> usize {
    DEFAULT_WARMUP_STEPS
}

impl ObjectiveConfig {
    pub fn new(algorithm: Algorithm, alpha: f64, beta: f64) -> Self {
        Self { algorithm, alpha, beta, warmup_steps: DEFAULT_WARMUP_STEPS }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {w}")));
            }
        }
        Ok(())
    }

    /// `(alpha, beta)` in force at `step`.
    pub fn effective_weights(&self, step: usize) -> (f64, f64) {
        if step < self.warmup_steps {
            return (0.0, 0.0);
        }
        let alpha = if self.algorithm.covariate().is_some() { self.alpha } else { 0.0 };
        let beta = if self.algorithm.concept().is_some() { self.beta } else { 0.0 };
        (alpha, beta)
    }
}

/// Tape handles for one seen domain.
#[derive(Debug, Clone, Copy)]
pub struct DomainOutputs<'a> {
    pub features: Var,
    pub logits: Var,
    pub labels: &'a [usize],
}

#[derive(Debug, Clone, Copy)]
pub struct ObjectiveTerms {
    pub total: Var,
    pub risk: Var,
    pub covariate: Option<Var>,
    pub concept: Option<Var>,
}

/// Records the step objective on `tape`. Penalties whose effective weight
/// is zero are not evaluated at all, so a zero-weight objective is the plain
/// risk bit for bit.
pub fn record_objective(
    tape: &mut Tape,
    config: &ObjectiveConfig,
    domains: &[DomainOutputs<'_>],
    step: usize,
) -> Result<ObjectiveTerms> {
    config.validate()?;
    if domains.is_empty() {
        return Err(Error::Argument("objective needs at least one seen domain".into()));
    }
    let mut risk = tape.softmax_cross_entropy(domains[0].logits, domains[0].labels)?;
    for d in &domains[1..] {
        let r = tape.softmax_cross_entropy(d.logits, d.labels)?;
        risk = tape.add(risk, r)?;
    }
    if domains.len() > 1 {
        risk = tape.scale(risk, 1.0 / domains.len() as f64)?;
    }

    let (alpha, beta) = config.effective_weights(step);
    let mut total = risk;

    let mut covariate = None;
    if alpha > 0.0 {
        if let Some(kind) = config.algorithm.covariate() {
            let mut acc: Option<Var> = None;
            let mut pairs = 0usize;
            for i in 0..domains.len() {
                for j in i + 1..domains.len() {
                    let (a, b) = (domains[i].features, domains[j].features);
                    let v = match kind {
                        CovariatePenalty::Mmd => record_mmd2(tape, a, b, &MMD_GAMMAS)?,
                        CovariatePenalty::Coral => record_coral(tape, a, b)?,
                    };
                    acc = Some(match acc {
                        Some(s) => tape.add(s, v)?,
                        None => v,
                    });
                    pairs += 1;
                }
            }
            if let Some(mut term) = acc {
                if pairs > 1 {
                    term = tape.scale(term, 1.0 / pairs as f64)?;
                }
                let weighted = tape.scale(term, alpha)?;
                total = tape.add(total, weighted)?;
                covariate = Some(term);
            }
        }
    }

    let mut concept = None;
    if beta > 0.0 {
        if let Some(kind) = config.algorithm.concept() {
            let logits: Vec<Var> = domains.iter().map(|d| d.logits).collect();
            let feats: Vec<Var> = domains.iter().map(|d| d.features).collect();
            let labels: Vec<&[usize]> = domains.iter().map(|d| d.labels).collect();
            let term = match kind {
                ConceptPenalty::Irm => record_irm_penalty(tape, &logits, &labels)?,
                ConceptPenalty::Cem => {
                    let irm = record_irm_penalty(tape, &logits, &labels)?;
                    let h = record_conditional_entropy(tape, &feats, &labels)?;
                    tape.add(irm, h)?
                }
                ConceptPenalty::Ib => record_mean_ib(tape, &feats)?,
                ConceptPenalty::IbIrm => {
                    let irm = record_irm_penalty(tape, &logits, &labels)?;
                    let ib = record_mean_ib(tape, &feats)?;
                    tape.add(irm, ib)?
                }
            };
            let weighted = tape.scale(term, beta)?;
            total = tape.add(total, weighted)?;
            concept = Some(term);
        }
    }

    Ok(ObjectiveTerms { total, risk, covariate, concept })
}

fn record_mean_ib(tape: &mut Tape, feats: &[Var]) -> Result<Var> {
    let mut acc = record_ib_variance(tape, feats[0])?;
    for &z in &feats[1..] {
        let v = record_ib_variance(tape, z)?;
        acc = tape.add(acc, v)?;
    }
    if feats.len() > 1 {
        acc = tape.scale(acc, 1.0 / feats.len() as f64)?;
    }
    Ok(acc)
}

/// Value of the step objective on fixed feature batches.
pub fn composite_objective(config: &ObjectiveConfig, batches: &[FeatureBatch], step: usize) -> Result<f64> {
    for b in batches {
        b.validate()?;
    }
    let mut tape = Tape::new();
    let mut handles = Vec::with_capacity(batches.len());
    for b in batches {
        let features = tape.input(b.z.clone())?;
        let logits = tape.input(b.logits.clone())?;
        handles.push(DomainOutputs { features, logits, labels: &b.y });
    }
    let terms = record_objective(&mut tape, config, &handles, step)?;
    tape.value(terms.total).item()
}
