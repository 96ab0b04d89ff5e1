//! Browser bindings: the discrete risk bound, alignment penalties between
//! two point clouds, and label-level samplers of the colored datasets.
//!
//! Every export returns a JSON string.

use rand::Rng;
use serde::Serialize;
use shiftlab::bounds::{
    corollary1_rhs, delta1, delta2, theorem1_terms, verify_random_instances, DiscreteDGInstance, DiscreteDomain,
    StochasticTable, VerificationReport,
};
use shiftlab::datasets::{binary_label, cs_acceptance_probability, CMNIST_LABEL_NOISE};
use shiftlab::penalties::{coral, mmd2, MMD_GAMMAS};
use shiftlab::rng::Streams;
use shiftlab::tensor::Tensor;
use shiftlab::{Error, Result};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct BoundView {
    pub seen_risk: f64,
    pub covariate_gap: f64,
    pub concept_gap: f64,
    pub unseen_risk: f64,
    pub bound: f64,
    pub slack: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub corollary_bound: f64,
}

fn binary_table(p_one: &[f64]) -> Result<StochasticTable> {
    if p_one.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Argument("probabilities must lie in [0, 1]".into()));
    }
    StochasticTable::new(2, p_one.iter().flat_map(|&p| [1.0 - p, p]).collect())
}

fn pmf(first: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&first) {
        return Err(Error::Argument("mass must lie in [0, 1]".into()));
    }
    Ok(vec![first, 1.0 - first])
}

/// Two latent points, two labels. `seen_mass` and `unseen_mass` are the
/// probabilities of the first point; the tables give `P(y = 1 | z)` per
/// point.
pub fn bound_view(
    seen_mass: f64,
    unseen_mass: f64,
    seen_labeler: &[f64],
    unseen_labeler: &[f64],
    classifier: &[f64],
) -> Result<BoundView> {
    if [seen_labeler.len(), unseen_labeler.len(), classifier.len()] != [2, 2, 2] {
        return Err(Error::Dimension("each table needs one entry per latent point (2)".into()));
    }
    let inst = DiscreteDGInstance::new(
        DiscreteDomain::new(pmf(seen_mass)?, binary_table(seen_labeler)?)?,
        DiscreteDomain::new(pmf(unseen_mass)?, binary_table(unseen_labeler)?)?,
        binary_table(classifier)?,
    )?;
    let t = theorem1_terms(&inst);
    Ok(BoundView {
        seen_risk: t.seen_risk,
        covariate_gap: t.covariate_gap,
        concept_gap: t.concept_gap,
        unseen_risk: t.unseen_risk,
        bound: t.rhs(),
        slack: t.slack(),
        delta1: delta1(&inst),
        delta2: delta2(&inst),
        corollary_bound: corollary1_rhs(&inst),
    })
}

#[derive(Debug, Serialize)]
pub struct AlignmentView {
    pub mmd: f64,
    pub coral: f64,
    pub first: Vec<[f64; 2]>,
    pub second: Vec<[f64; 2]>,
}

/// Two 2-D Gaussian clouds of `n` points; the second is shifted by `shift`
/// along x and scaled by `spread`.
pub fn alignment_view(shift: f64, spread: f64, n: usize, seed: u64) -> Result<AlignmentView> {
    if n == 0 || n > 2_000 {
        return Err(Error::Argument("n must lie in 1..=2000".into()));
    }
    if !(spread.is_finite() && spread > 0.0 && shift.is_finite()) {
        return Err(Error::Argument("spread must be positive and shift finite".into()));
    }
    let streams = Streams::new(seed);
    let a = Tensor::randn(vec![n, 2], 1.0, &mut streams.stream("first"));
    let raw = Tensor::randn(vec![n, 2], 1.0, &mut streams.stream("second"));
    let b = Tensor::new(
        vec![n, 2],
        raw.data().iter().enumerate().map(|(i, v)| v * spread + if i % 2 == 0 { shift } else { 0.0 }).collect(),
    )?;
    let points = |t: &Tensor| (0..n).map(|i| [t.row(i)[0], t.row(i)[1]]).collect();
    Ok(AlignmentView { mmd: mmd2(&a, &b, &MMD_GAMMAS)?, coral: coral(&a, &b)?, first: points(&a), second: points(&b) })
}

#[derive(Debug, Serialize)]
pub struct SamplerView {
    pub kind: &'static str,
    pub bias: f64,
    pub accepted: usize,
    pub proposals: usize,
    pub color_label_agreement: f64,
    pub expected_agreement: f64,
    pub label_flip_rate: f64,
}

/// Label-level run of a generator with bias `bias`: digits are uniform and
/// no pixels are produced.
pub fn sampler_view(kind: &str, bias: f64, n: usize, seed: u64) -> Result<SamplerView> {
    if !(0.0..=1.0).contains(&bias) {
        return Err(Error::Argument("bias must lie in [0, 1]".into()));
    }
    if n == 0 || n > 200_000 {
        return Err(Error::Argument("n must lie in 1..=200000".into()));
    }
    let mut rng = Streams::new(seed).stream("web/sampler");
    let (mut agree, mut flips, mut proposals) = (0usize, 0usize, 0usize);
    match kind {
        "cmnist" => {
            for _ in 0..n {
                let digit: u8 = rng.random_range(0..10);
                let y = binary_label(digit) ^ u8::from(rng.random_bool(CMNIST_LABEL_NOISE));
                let c = y ^ u8::from(rng.random_bool(bias));
                agree += usize::from(c == y);
                flips += usize::from(y != binary_label(digit));
            }
            proposals = n;
        }
        "cs-cmnist" => {
            if bias == 0.0 {
                return Err(Error::Argument("bias 0 accepts only matching colors; use a positive bias".into()));
            }
            let mut accepted = 0;
            while accepted < n {
                proposals += 1;
                let digit: u8 = rng.random_range(0..10);
                let c: u8 = rng.random_range(0..10);
                if rng.random_bool(cs_acceptance_probability(bias, c, digit)) {
                    accepted += 1;
                    agree += usize::from(c == digit);
                }
            }
        }
        other => return Err(Error::Argument(format!("unknown dataset `{other}`"))),
    }
    let (kind, expected) = match kind {
        "cmnist" => ("cmnist", 1.0 - bias),
        _ => ("cs-cmnist", (1.0 - bias) / (1.0 + 8.0 * bias)),
    };
    Ok(SamplerView {
        kind,
        bias,
        accepted: n,
        proposals,
        color_label_agreement: agree as f64 / n as f64,
        expected_agreement: expected,
        label_flip_rate: flips as f64 / n as f64,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = boundTerms)]
pub fn bound_terms(
    seen_mass: f64,
    unseen_mass: f64,
    seen_labeler: Vec<f64>,
    unseen_labeler: Vec<f64>,
    classifier: Vec<f64>,
) -> std::result::Result<String, JsError> {
    to_js(bound_view(seen_mass, unseen_mass, &seen_labeler, &unseen_labeler, &classifier))
}

#[wasm_bindgen(js_name = verifyBounds)]
pub fn verify_bounds(instances: usize, latent: usize, classes: usize, seed: u64) -> std::result::Result<String, JsError> {
    to_js::<VerificationReport>(verify_random_instances(instances, latent, classes, seed))
}

#[wasm_bindgen(js_name = alignmentPenalties)]
pub fn alignment_penalties(shift: f64, spread: f64, n: usize, seed: u64) -> std::result::Result<String, JsError> {
    to_js(alignment_view(shift, spread, n, seed))
}

#[wasm_bindgen(js_name = samplerStatistics)]
pub fn sampler_statistics(kind: &str, bias: f64, n: usize, seed: u64) -> std::result::Result<String, JsError> {
    to_js(sampler_view(kind, bias, n, seed))
}
