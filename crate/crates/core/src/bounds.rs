//! Unseen-domain risk bound on finite latent spaces.
//!
//! For a fixed representation the latent space is a finite set of `m`
//! points. A domain is a pmf over those points plus its optimal labeling
//! function, given as a distribution over the `C` labels at every point.
//! The classifier `g` is likewise a row-stochastic table. With the
//! disagreement loss `d(q1, q2) = P(A != B)` for independent `A ~ q1`,
//! `B ~ q2`, the unseen risk satisfies
//!
//! ```text
//! eps_u(g, l_u) <= eps_s(g, l_s)
//!                + sum_z |p_u(z) - p_s(z)| d(g(z), l_u(z))
//!                + sum_z p_s(z) d(l_u(z), l_s(z))
//! ```
//!
//! and the looser form obtained by bounding each gap by its maximum
//! (`delta1`, `delta2`). Everything here is evaluated exactly by summation.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::rng::Streams;
use crate::{Error, Result};

pub const TOLERANCE: f64 = 1e-12;

/// Row-stochastic `m x C` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticTable {
    pub classes: usize,
    pub rows: Vec<f64>,
}

impl StochasticTable {
    pub fn new(classes: usize, rows: Vec<f64>) -> Result<Self> {
        if classes == 0 || !rows.len().is_multiple_of(classes) {
            return Err(Error::Argument(format!("{} entries do not form rows of {classes}", rows.len())));
        }
        let t = Self { classes, rows };
        for z in 0..t.points() {
            check_distribution(t.row(z), &format!("row {z}"))?;
        }
        Ok(t)
    }

    /// Point mass on `labels[z]` at every point.
    pub fn deterministic(classes: usize, labels: &[usize]) -> Result<Self> {
        let mut rows = vec![0.0; labels.len() * classes];
        for (z, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(Error::Index(format!("label {y} outside [0, {classes})")));
            }
            rows[z * classes + y] = 1.0;
        }
        Self::new(classes, rows)
    }

    pub fn points(&self) -> usize {
        self.rows.len() / self.classes
    }

    pub fn row(&self, z: usize) -> &[f64] {
        &self.rows[z * self.classes..(z + 1) * self.classes]
    }
}

pub type StochasticClassifier = StochasticTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDomain {
    pub pmf: Vec<f64>,
    pub labeler: StochasticTable,
}

impl DiscreteDomain {
    pub fn new(pmf: Vec<f64>, labeler: StochasticTable) -> Result<Self> {
        check_distribution(&pmf, "pmf")?;
        if labeler.points() != pmf.len() {
            return Err(Error::Argument(format!(
                "pmf over {} points but labeler has {} rows",
                pmf.len(),
                labeler.points()
            )));
        }
        Ok(Self { pmf, labeler })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDGInstance {
    pub seen: DiscreteDomain,
    pub unseen: DiscreteDomain,
    pub classifier: StochasticClassifier,
}

impl DiscreteDGInstance {
    pub fn new(seen: DiscreteDomain, unseen: DiscreteDomain, classifier: StochasticClassifier) -> Result<Self> {
        let m = seen.pmf.len();
        let c = seen.labeler.classes;
        if unseen.pmf.len() != m || classifier.points() != m {
            return Err(Error::Argument("latent point counts differ".into()));
        }
        if unseen.labeler.classes != c || classifier.classes != c {
            return Err(Error::Argument("label counts differ".into()));
        }
        Ok(Self { seen, unseen, classifier })
    }

    pub fn points(&self) -> usize {
        self.seen.pmf.len()
    }
}

fn check_distribution(q: &[f64], what: &str) -> Result<()> {
    if q.is_empty() {
        return Err(Error::Argument(format!("{what} is empty")));
    }
    if q.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Argument(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = q.iter().sum();
    if (s - 1.0).abs() > TOLERANCE * q.len().max(1) as f64 {
        return Err(Error::Argument(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

/// `P(A != B)` for independent draws `A ~ q1`, `B ~ q2`.
pub fn disagreement_loss(q1: &[f64], q2: &[f64]) -> Result<f64> {
    if q1.len() != q2.len() {
        return Err(Error::Argument(format!("label counts differ: {} vs {}", q1.len(), q2.len())));
    }
    check_distribution(q1, "first distribution")?;
    check_distribution(q2, "second distribution")?;
    Ok(disagreement(q1, q2))
}

fn disagreement(q1: &[f64], q2: &[f64]) -> f64 {
    1.0 - q1.iter().zip(q2).map(|(a, b)| a * b).sum::<f64>()
}

/// `sum_z pmf(z) d(g(z), labeler(z))`.
pub fn risk(pmf: &[f64], g: &StochasticClassifier, labeler: &StochasticTable) -> Result<f64> {
    if g.points() != pmf.len() || labeler.points() != pmf.len() || g.classes != labeler.classes {
        return Err(Error::Argument("risk: table shapes disagree".into()));
    }
    Ok((0..pmf.len()).map(|z| pmf[z] * disagreement(g.row(z), labeler.row(z))).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Terms {
    /// Seen risk against the seen labeler.
    pub seen_risk: f64,
    /// `sum |p_u - p_s| d(g, l_u)`.
    pub covariate_gap: f64,
    /// `sum p_s d(l_u, l_s)`.
    pub concept_gap: f64,
    /// Unseen risk against the unseen labeler.
    pub unseen_risk: f64,
}

impl Theorem1Terms {
    pub fn rhs(&self) -> f64 {
        self.seen_risk + self.covariate_gap + self.concept_gap
    }

    pub fn slack(&self) -> f64 {
        self.rhs() - self.unseen_risk
    }
}

pub fn theorem1_terms(inst: &DiscreteDGInstance) -> Theorem1Terms {
    let (s, u, g) = (&inst.seen, &inst.unseen, &inst.classifier);
    let mut t = Theorem1Terms { seen_risk: 0.0, covariate_gap: 0.0, concept_gap: 0.0, unseen_risk: 0.0 };
    for z in 0..inst.points() {
        let d_gu = disagreement(g.row(z), u.labeler.row(z));
        t.seen_risk += s.pmf[z] * disagreement(g.row(z), s.labeler.row(z));
        t.covariate_gap += (u.pmf[z] - s.pmf[z]).abs() * d_gu;
        t.concept_gap += s.pmf[z] * disagreement(u.labeler.row(z), s.labeler.row(z));
        t.unseen_risk += u.pmf[z] * d_gu;
    }
    t
}

/// Largest pointwise gap between the two pmfs.
pub fn delta1(inst: &DiscreteDGInstance) -> f64 {
    inst.seen.pmf.iter().zip(&inst.unseen.pmf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Largest pointwise disagreement between the two optimal labelers.
pub fn delta2(inst: &DiscreteDGInstance) -> f64 {
    (0..inst.points())
        .map(|z| disagreement(inst.unseen.labeler.row(z), inst.seen.labeler.row(z)))
        .fold(0.0, f64::max)
}

/// `eps_s + delta1 * sum_z d(g(z), l_u(z)) + delta2`, the sum over `z`
/// taken with counting measure.
pub fn corollary1_rhs(inst: &DiscreteDGInstance) -> f64 {
    let g = &inst.classifier;
    let mass: f64 = (0..inst.points()).map(|z| disagreement(g.row(z), inst.unseen.labeler.row(z))).sum();
    let seen_risk = (0..inst.points())
        .map(|z| inst.seen.pmf[z] * disagreement(g.row(z), inst.seen.labeler.row(z)))
        .sum::<f64>();
    seen_risk + delta1(inst) * mass + delta2(inst)
}

fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = draws.iter().sum();
    draws.into_iter().map(|v| v / s).collect()
}

fn random_table<R: Rng + ?Sized>(m: usize, c: usize, rng: &mut R) -> StochasticTable {
    StochasticTable { classes: c, rows: (0..m).flat_map(|_| random_simplex(c, rng)).collect() }
}

/// Random instance with strictly positive pmfs and stochastic tables.
pub fn random_instance<R: Rng + ?Sized>(m: usize, classes: usize, rng: &mut R) -> DiscreteDGInstance {
    DiscreteDGInstance {
        seen: DiscreteDomain { pmf: random_simplex(m, rng), labeler: random_table(m, classes, rng) },
        unseen: DiscreteDomain { pmf: random_simplex(m, rng), labeler: random_table(m, classes, rng) },
        classifier: random_table(m, classes, rng),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checked: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` of the pointwise bound; `None` when nothing was checked.
    pub min_slack: Option<f64>,
    /// Smallest `corollary rhs - theorem rhs`.
    pub min_corollary_margin: Option<f64>,
}

/// Evaluates both bounds on `n` random instances. An instance counts as a
/// violation if either inequality fails by more than [`TOLERANCE`].
pub fn verify_random_instances(n: usize, m: usize, classes: usize, seed: u64) -> Result<VerificationReport> {
    if m == 0 || classes == 0 {
        return Err(Error::Argument("need at least one latent point and one class".into()));
    }
    let mut rng = Streams::new(seed).stream("boundlab/instances");
    let mut report = VerificationReport { checked: 0, violations: 0, min_slack: None, min_corollary_margin: None };
    for _ in 0..n {
        let inst = random_instance(m, classes, &mut rng);
        let terms = theorem1_terms(&inst);
        let slack = terms.slack();
        let margin = corollary1_rhs(&inst) - terms.rhs();
        if slack < -TOLERANCE || margin < -TOLERANCE {
            report.violations += 1;
        }
        report.checked += 1;
        report.min_slack = Some(report.min_slack.map_or(slack, |s| s.min(slack)));
        report.min_corollary_margin = Some(report.min_corollary_margin.map_or(margin, |s| s.min(margin)));
    }
    Ok(report)
}
