#![allow(dead_code)]

use std::path::PathBuf;

use shiftlab::penalties::DomainOutputs;
use shiftlab::rng::Streams;
use shiftlab::tensor::{ParamSet, Tape, Tensor, Var};
use shiftlab::Result;

pub const FD_STEP: f64 = 1e-5;

/// Worst relative error, over parameter tensors, between the tape gradient of
/// `f` and central finite differences. Each tensor is compared as a vector:
/// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
pub fn gradient_error<F>(params: &ParamSet, f: &F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |ps: &ParamSet| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = (0..ps.len()).map(|s| tape.param(ps, s)).collect();
        let out = f(&mut tape, &vars).expect("forward");
        tape.value(out).item().expect("scalar")
    };

    let mut analytic = params.clone();
    {
        let mut tape = Tape::new();
        let vars: Vec<Var> = (0..analytic.len()).map(|s| tape.param(&analytic, s)).collect();
        let out = f(&mut tape, &vars).expect("forward");
        tape.backward(out, &mut analytic).expect("backward");
    }

    let mut worst: f64 = 0.0;
    for slot in 0..params.len() {
        let n = params.get(slot).tensor.len();
        let a = analytic.get(slot).tensor.grad.clone().unwrap_or_else(|| vec![0.0; n]);
        let mut numeric = vec![0.0; n];
        for (i, num) in numeric.iter_mut().enumerate() {
            let mut plus = params.clone();
            plus.get_mut(slot).tensor.data_mut()[i] += FD_STEP;
            let mut minus = params.clone();
            minus.get_mut(slot).tensor.data_mut()[i] -= FD_STEP;
            *num = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
        }
        let diff = norm(a.iter().zip(&numeric).map(|(x, y)| x - y));
        let scale = norm(a.iter().copied()).max(norm(numeric.iter().copied())).max(1e-7);
        worst = worst.max(diff / scale);
    }
    worst
}

fn norm(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|v| v * v).sum::<f64>().sqrt()
}

/// Reduces any tensor to a scalar through a fixed random projection so every
/// output element reaches the gradient.
pub fn project(tape: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(v).shape().to_vec();
    let r = Tensor::randn(shape, 1.0, &mut Streams::new(seed).stream("projection"));
    let r = tape.input(r)?;
    let p = tape.mul(v, r)?;
    tape.sum(p)
}

/// Two seen domains through a one-block conv featurizer and a dense head.
pub struct ToyProblem {
    pub params: ParamSet,
    pub inputs: [Tensor; 2],
    pub labels: [Vec<usize>; 2],
}

pub const TOY_CLASSES: usize = 3;

impl ToyProblem {
    pub fn new(seed: u64) -> Self {
        let s = Streams::new(seed);
        let mut rng = s.stream("toy");
        let mut params = ParamSet::new();
        params.push("conv.weight", Tensor::randn(vec![4, 3, 3, 3], 0.5, &mut rng)).unwrap();
        params.push("conv.bias", Tensor::randn(vec![4], 0.1, &mut rng)).unwrap();
        params.push("head.weight", Tensor::randn(vec![4, TOY_CLASSES], 0.5, &mut rng)).unwrap();
        params.push("head.bias", Tensor::randn(vec![TOY_CLASSES], 0.1, &mut rng)).unwrap();
        let mut x = || Tensor::randn(vec![8, 3, 6, 6], 1.0, &mut rng);
        let inputs = [x(), x()];
        let labels = [vec![0, 1, 2, 0, 1, 2, 0, 1], vec![2, 2, 1, 0, 0, 1, 2, 0]];
        Self { params, inputs, labels }
    }

    /// `(features, logits)` per domain.
    pub fn forward(&self, tape: &mut Tape, p: &[Var]) -> Result<Vec<(Var, Var)>> {
        let mut out = Vec::new();
        for x in &self.inputs {
            let x = tape.input(x.clone())?;
            let h = tape.conv2d(x, p[0], 2, 1)?;
            let h = tape.channel_bias(h, p[1])?;
            let h = tape.relu(h)?;
            let z = tape.mean_pool(h)?;
            let o = tape.dense(z, p[2], p[3])?;
            out.push((z, o));
        }
        Ok(out)
    }

    pub fn domains<'a>(&'a self, outs: &[(Var, Var)]) -> Vec<DomainOutputs<'a>> {
        outs.iter()
            .zip(&self.labels)
            .map(|(&(features, logits), labels)| DomainOutputs { features, logits, labels })
            .collect()
    }
}

/// Direct seven-loop convolution, zero padding, NCHW / OIHW.
pub fn naive_conv2d(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * o * oh * ow];
    for b in 0..n {
        for oc in 0..o {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for u in 0..kh {
                            for v in 0..kw {
                                let r = (i * stride + u) as isize - pad as isize;
                                let s = (j * stride + v) as isize - pad as isize;
                                if r < 0 || s < 0 || r >= h as isize || s >= w as isize {
                                    continue;
                                }
                                acc += x.data()[((b * c + ic) * h + r as usize) * w + s as usize]
                                    * k.data()[((oc * c + ic) * kh + u) * kw + v];
                            }
                        }
                    }
                    out[((b * o + oc) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, o, oh, ow], out).unwrap()
}

/// Workspace `data/mnist`, or `SHIFTLAB_MNIST_DIR` when set.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("SHIFTLAB_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let present = ["train-images-idx3-ubyte", "t10k-images-idx3-ubyte"]
        .iter()
        .all(|f| dir.join(f).exists() || dir.join(format!("{f}.gz")).exists());
    present.then_some(dir)
}

/// Stand-in for MNIST: digit `k` lights the rows `2k+4..2k+6` with a little
/// per-image jitter, so labels are learnable from shape alone.
pub fn synthetic_pool(n: usize) -> shiftlab::datasets::GrayMnist {
    let mut pixels = vec![0u8; n * 784];
    let labels: Vec<u8> = (0..n).map(|i| ((i * 7 + i / 10) % 10) as u8).collect();
    for (i, img) in pixels.chunks_exact_mut(784).enumerate() {
        let d = labels[i] as usize;
        for r in 2 * d + 4..2 * d + 6 {
            for c in 4..24 {
                img[r * 28 + c] = 200 + ((i + c) % 50) as u8;
            }
        }
    }
    shiftlab::datasets::GrayMnist { rows: 28, cols: 28, pixels, labels }
}

/// `per_domain` items of each generated domain, split 80/20.
pub fn tiny_data(kind: shiftlab::datasets::DatasetKind, per_domain: usize) -> shiftlab::trainer::PreparedData {
    use shiftlab::datasets::{make_cmnist, make_cs_cmnist, DatasetKind};
    let domains = match kind {
        DatasetKind::Cmnist => make_cmnist(&synthetic_pool(70_000), 1).unwrap(),
        DatasetKind::CsCmnist => make_cs_cmnist(&synthetic_pool(2_000), 1).unwrap(),
    };
    let idx: Vec<usize> = (0..per_domain).collect();
    let domains = domains.map(|d| d.subset(&idx));
    shiftlab::trainer::PreparedData::new(domains, 0.2, 0).unwrap()
}

pub type Forward = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

/// A differentiable op reduced to a scalar, with the shapes of its inputs.
pub struct OpCase {
    pub name: String,
    pub shapes: Vec<Vec<usize>>,
    pub forward: Forward,
}

fn case(name: impl Into<String>, shapes: &[&[usize]], forward: impl Fn(&mut Tape, &[Var]) -> Result<Var> + 'static) -> OpCase {
    OpCase { name: name.into(), shapes: shapes.iter().map(|s| s.to_vec()).collect(), forward: Box::new(forward) }
}

pub fn random_params(shapes: &[Vec<usize>], seed: u64) -> ParamSet {
    let mut rng = Streams::new(seed).stream("params");
    let mut ps = ParamSet::new();
    for (i, s) in shapes.iter().enumerate() {
        ps.push(format!("p{i}"), Tensor::randn(s.clone(), 1.0, &mut rng)).unwrap();
    }
    ps
}

/// Every tape op and every fused penalty node.
pub fn op_cases() -> Vec<OpCase> {
    use shiftlab::penalties::{
        record_conditional_entropy, record_coral, record_ib_variance, record_irm_penalty, record_mmd2, MMD_GAMMAS,
    };
    let mut v = Vec::new();
    for (stride, pad) in [(1, 0), (1, 1), (2, 1), (2, 0), (3, 2)] {
        v.push(case(format!("conv2d s{stride} p{pad}"), &[&[2, 3, 7, 6], &[4, 3, 3, 3]], move |t, p| {
            let y = t.conv2d(p[0], p[1], stride, pad)?;
            project(t, y, 1)
        }));
    }
    v.push(case("channel_bias", &[&[2, 3, 4, 4], &[3]], |t, p| {
        let y = t.channel_bias(p[0], p[1])?;
        project(t, y, 2)
    }));
    v.push(case("dense", &[&[5, 4], &[4, 3], &[3]], |t, p| {
        let y = t.dense(p[0], p[1], p[2])?;
        project(t, y, 3)
    }));
    v.push(case("relu", &[&[6, 5]], |t, p| {
        let y = t.relu(p[0])?;
        project(t, y, 4)
    }));
    v.push(case("mean_pool", &[&[2, 3, 4, 5]], |t, p| {
        let y = t.mean_pool(p[0])?;
        project(t, y, 5)
    }));
    v.push(case("flatten", &[&[2, 3, 2, 2]], |t, p| {
        let y = t.flatten(p[0])?;
        project(t, y, 6)
    }));
    v.push(case("add", &[&[3, 4], &[3, 4]], |t, p| {
        let y = t.add(p[0], p[1])?;
        project(t, y, 7)
    }));
    v.push(case("sub", &[&[3, 4], &[3, 4]], |t, p| {
        let y = t.sub(p[0], p[1])?;
        project(t, y, 8)
    }));
    v.push(case("mul", &[&[3, 4], &[3, 4]], |t, p| {
        let y = t.mul(p[0], p[1])?;
        project(t, y, 9)
    }));
    v.push(case("scale", &[&[3, 4]], |t, p| {
        let y = t.scale(p[0], -2.5)?;
        project(t, y, 10)
    }));
    v.push(case("batch_mean", &[&[5, 3]], |t, p| {
        let y = t.batch_mean(p[0])?;
        project(t, y, 11)
    }));
    v.push(case("batch_variance", &[&[5, 3]], |t, p| {
        let y = t.batch_variance(p[0])?;
        project(t, y, 12)
    }));
    v.push(case("mean", &[&[4, 3]], |t, p| {
        let y = t.mean(p[0])?;
        t.mul(y, y)
    }));
    v.push(case("sum", &[&[4, 3]], |t, p| {
        let y = t.sum(p[0])?;
        t.mul(y, y)
    }));
    v.push(case("softmax_cross_entropy", &[&[5, 4]], |t, p| t.softmax_cross_entropy(p[0], &[0, 3, 1, 1, 2])));
    v.push(case("mmd2", &[&[6, 3], &[5, 3]], |t, p| record_mmd2(t, p[0], p[1], &MMD_GAMMAS)));
    v.push(case("mmd2 unit gamma", &[&[4, 2], &[4, 2]], |t, p| record_mmd2(t, p[0], p[1], &[1.0])));
    v.push(case("coral", &[&[6, 3], &[5, 3]], |t, p| record_coral(t, p[0], p[1])));
    v.push(case("irm", &[&[6, 3], &[5, 3]], |t, p| {
        record_irm_penalty(t, &[p[0], p[1]], &[&[0, 1, 2, 0, 1, 2], &[2, 0, 1, 1, 0]])
    }));
    v.push(case("conditional entropy", &[&[6, 3], &[6, 3]], |t, p| {
        record_conditional_entropy(t, &[p[0], p[1]], &[&[0, 1, 2, 0, 1, 2], &[1, 2, 0, 0, 2, 1]])
    }));
    v.push(case("ib variance", &[&[6, 4]], |t, p| record_ib_variance(t, p[0])));
    v
}

/// Worst gradient error of `case` over `points` random evaluation points.
pub fn op_error(case: &OpCase, points: u64) -> f64 {
    (0..points).map(|seed| gradient_error(&random_params(&case.shapes, seed), &case.forward)).fold(0.0, f64::max)
}

/// Worst gradient error of the full objective of `algorithm` on toy
/// problems built from `seeds`, with both penalties active.
pub fn objective_error(algorithm: shiftlab::penalties::Algorithm, seeds: std::ops::Range<u64>) -> f64 {
    use shiftlab::penalties::{record_objective, ObjectiveConfig};
    let cfg = ObjectiveConfig { algorithm, alpha: 0.7, beta: 1.3, warmup_steps: 0 };
    seeds
        .map(|seed| {
            let toy = ToyProblem::new(seed);
            gradient_error(&toy.params, &|t: &mut Tape, p: &[Var]| {
                let outs = toy.forward(t, p)?;
                Ok(record_objective(t, &cfg, &toy.domains(&outs), 0)?.total)
            })
        })
        .fold(0.0, f64::max)
}
