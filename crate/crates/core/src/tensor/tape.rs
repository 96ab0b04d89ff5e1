use super::conv::{conv2d_backward, conv2d_forward, gemm, ConvGeometry};
use super::{ParamSet, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A scalar-valued function of several tensors with an analytic gradient.
///
/// Used to record fused losses and penalties as a single tape node.
pub trait ScalarFunction: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, inputs: &[&Tensor]) -> Result<f64>;
    /// One gradient buffer per input, each shaped like that input.
    fn gradient(&self, inputs: &[&Tensor]) -> Result<Vec<Vec<f64>>>;
}

enum Op {
    Input,
    Param(usize),
    Conv2d { input: Var, kernel: Var, geom: ConvGeometry },
    ChannelBias { input: Var, bias: Var },
    Dense { input: Var, weight: Var, bias: Var },
    Relu(Var),
    MeanPool(Var),
    Flatten(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    BatchMean(Var),
    BatchVariance(Var),
    Mean(Var),
    Sum(Var),
    SoftmaxXent { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    Custom { inputs: Vec<Var>, func: Box<dyn ScalarFunction> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records executed ops so that [`Tape::backward`] can run reverse-mode
/// accumulation. Single-threaded; build one tape per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

fn check_finite(name: &str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{name} produced a non-finite value")))
    }
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{op}: operand shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn rank2(op: &str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [n, d] => Ok((*n, *d)),
        s => Err(Error::Dimension(format!("{op}: expected [n, d], got {s:?}"))),
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: Vec<f64>) {
    match slot {
        Some(g) => g.iter_mut().zip(delta).for_each(|(a, b)| *a += b),
        None => *slot = Some(delta),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated for `v` by the last backward pass.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Clears gradients so that another backward pass may run.
    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant leaf; no gradient is propagated into it.
    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        check_finite("input", t.data())?;
        Ok(self.push(t, Op::Input, false))
    }

    /// Leaf bound to `params[slot]`; its gradient is written back by
    /// [`Tape::backward`].
    pub fn param(&mut self, params: &ParamSet, slot: usize) -> Var {
        let mut value = params.get(slot).tensor.clone();
        value.grad = None;
        self.push(value, Op::Param(slot), true)
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let (x, k) = (self.value(input), self.value(kernel));
        let geom = ConvGeometry::new(x.shape(), k.shape(), stride, padding)?;
        let out = conv2d_forward(&geom, x.data(), k.data());
        check_finite("conv2d", &out)?;
        let value = Tensor::new(geom.output_shape(), out)?;
        let rg = self.needs(input) || self.needs(kernel);
        Ok(self.push(value, Op::Conv2d { input, kernel, geom }, rg))
    }

    /// Adds `bias[c]` to every position of channel `c` of an `[N,C,H,W]` input.
    pub fn channel_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(input), self.value(bias));
        let (n, c, hw) = match x.shape() {
            [n, c, h, w] => (*n, *c, h * w),
            s => return Err(Error::Dimension(format!("channel_bias: expected [N,C,H,W], got {s:?}"))),
        };
        if b.shape() != [c] {
            return Err(Error::Dimension(format!(
                "channel_bias: bias shape {:?} does not match channel axis 1 = {c}",
                b.shape()
            )));
        }
        let mut out = x.data().to_vec();
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * hw;
                out[base..base + hw].iter_mut().for_each(|v| *v += b.data()[ch]);
            }
        }
        check_finite("channel_bias", &out)?;
        let value = Tensor::new(x.shape().to_vec(), out)?;
        let rg = self.needs(input) || self.needs(bias);
        Ok(self.push(value, Op::ChannelBias { input, bias }, rg))
    }

    /// `x[N,D] · W[D,C] + b[C]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let (n, d) = rank2("dense input", x)?;
        let (wd, c) = rank2("dense weight", w)?;
        if wd != d {
            return Err(Error::Dimension(format!(
                "dense: input axis 1 = {d} but weight axis 0 = {wd}"
            )));
        }
        if b.shape() != [c] {
            return Err(Error::Dimension(format!(
                "dense: bias shape {:?} does not match weight axis 1 = {c}",
                b.shape()
            )));
        }
        let mut out = Vec::with_capacity(n * c);
        for _ in 0..n {
            out.extend_from_slice(b.data());
        }
        gemm(n, d, c, x.data(), (d, 1), w.data(), (c, 1), 1.0, &mut out, (c, 1));
        check_finite("dense", &out)?;
        let value = Tensor::new(vec![n, c], out)?;
        let rg = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(value, Op::Dense { input, weight, bias }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let out = t.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.needs(x);
        Ok(self.push(value, Op::Relu(x), rg))
    }

    /// Global mean over the spatial axes: `[N,C,H,W] -> [N,C]`.
    pub fn mean_pool(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (n, c, hw) = match t.shape() {
            [n, c, h, w] => (*n, *c, h * w),
            s => return Err(Error::Dimension(format!("mean_pool: expected [N,C,H,W], got {s:?}"))),
        };
        let out = t.data().chunks_exact(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect();
        let value = Tensor::new(vec![n, c], out)?;
        let rg = self.needs(x);
        Ok(self.push(value, Op::MeanPool(x), rg))
    }

    /// `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let n = *t.shape().first().ok_or_else(|| Error::Dimension("flatten of a scalar".into()))?;
        let rest = t.len().checked_div(n).unwrap_or(0);
        let value = t.clone().reshape(vec![n, rest])?;
        let rg = self.needs(x);
        Ok(self.push(value, Op::Flatten(x), rg))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(name, ta, tb)?;
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        check_finite(name, &out)?;
        let value = Tensor::new(ta.shape().to_vec(), out)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let t = self.value(x);
        let out: Vec<f64> = t.data().iter().map(|v| v * factor).collect();
        check_finite("scale", &out)?;
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.needs(x);
        Ok(self.push(value, Op::Scale(x, factor), rg))
    }

    /// Column means of `[n, d]`.
    pub fn batch_mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (n, d) = rank2("batch_mean", t)?;
        if n == 0 {
            return Err(Error::Argument("batch_mean of an empty batch".into()));
        }
        let value = Tensor::new(vec![d], column_means(t.data(), n, d))?;
        let rg = self.needs(x);
        Ok(self.push(value, Op::BatchMean(x), rg))
    }

    /// Column population variances of `[n, d]`.
    pub fn batch_variance(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (n, d) = rank2("batch_variance", t)?;
        if n == 0 {
            return Err(Error::Argument("batch_variance of an empty batch".into()));
        }
        let mu = column_means(t.data(), n, d);
        let mut var = vec![0.0; d];
        for row in t.data().chunks_exact(d) {
            for j in 0..d {
                var[j] += (row[j] - mu[j]).powi(2);
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let value = Tensor::new(vec![d], var)?;
        let rg = self.needs(x);
        Ok(self.push(value, Op::BatchVariance(x), rg))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(Error::Argument("mean of an empty tensor".into()));
        }
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.needs(x);
        Ok(self.push(Tensor::scalar(m), Op::Mean(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum::<f64>();
        check_finite("sum", &[s])?;
        let rg = self.needs(x);
        Ok(self.push(Tensor::scalar(s), Op::Sum(x), rg))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`, max-shifted.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (n, c) = rank2("softmax_cross_entropy", t)?;
        if labels.len() != n {
            return Err(Error::Dimension(format!(
                "softmax_cross_entropy: {} labels for batch axis 0 = {n}",
                labels.len()
            )));
        }
        if n == 0 {
            return Err(Error::Argument("softmax_cross_entropy of an empty batch".into()));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= c) {
            return Err(Error::Index(format!("label {y} at position {i} outside [0, {c})")));
        }
        let (loss, probs) = softmax_xent_forward(t.data(), labels, c);
        check_finite("softmax_cross_entropy", &[loss])?;
        let rg = self.needs(logits);
        let op = Op::SoftmaxXent { logits, labels: labels.to_vec(), probs };
        Ok(self.push(Tensor::scalar(loss), op, rg))
    }

    /// Records a fused scalar function of the given inputs.
    pub fn custom(&mut self, inputs: &[Var], func: Box<dyn ScalarFunction>) -> Result<Var> {
        let values: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
        let v = func.value(&values)?;
        check_finite(func.name(), &[v])?;
        let rg = inputs.iter().any(|&i| self.needs(i));
        Ok(self.push(Tensor::scalar(v), Op::Custom { inputs: inputs.to_vec(), func }, rg))
    }

    /// Reverse-mode accumulation from the scalar `loss`. Gradients of every
    /// parameter bound on this tape are written into `params`.
    pub fn backward(&mut self, loss: Var, params: &mut ParamSet) -> Result<()> {
        if self.backward_done {
            return Err(Error::State("backward already ran on this tape; call zero_grad first".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::State(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_done = true;
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = self.grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                self.grads[idx] = Some(g);
                continue;
            }
            let contributions = self.local_backward(idx, &g)?;
            self.grads[idx] = Some(g);
            for (target, delta) in contributions {
                if self.nodes[target.0].requires_grad {
                    accumulate(&mut self.grads[target.0], delta);
                }
            }
        }

        let mut per_slot: Vec<Option<Vec<f64>>> = vec![None; params.len()];
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(slot) = node.op {
                let g = self.grads[idx].clone().unwrap_or_else(|| vec![0.0; node.value.len()]);
                accumulate(&mut per_slot[slot], g);
            }
        }
        for (slot, g) in per_slot.into_iter().enumerate() {
            if let Some(g) = g {
                check_finite("backward", &g)?;
                params.get_mut(slot).tensor.grad = Some(g);
            }
        }
        Ok(())
    }

    fn local_backward(&self, idx: usize, g: &[f64]) -> Result<Vec<(Var, Vec<f64>)>> {
        let node = &self.nodes[idx];
        let out = match &node.op {
            Op::Input | Op::Param(_) => vec![],
            Op::Conv2d { input, kernel, geom } => {
                let (gi, gk) = conv2d_backward(
                    geom,
                    self.value(*input).data(),
                    self.value(*kernel).data(),
                    g,
                    self.needs(*input),
                );
                let mut v = vec![(*kernel, gk)];
                if let Some(gi) = gi {
                    v.push((*input, gi));
                }
                v
            }
            Op::ChannelBias { input, bias } => {
                let shape = self.value(*input).shape();
                let (c, hw) = (shape[1], shape[2] * shape[3]);
                let mut gb = vec![0.0; c];
                for (k, plane) in g.chunks_exact(hw).enumerate() {
                    gb[k % c] += plane.iter().sum::<f64>();
                }
                vec![(*input, g.to_vec()), (*bias, gb)]
            }
            Op::Dense { input, weight, bias } => {
                let (x, w) = (self.value(*input), self.value(*weight));
                let (n, d) = (x.shape()[0], x.shape()[1]);
                let c = w.shape()[1];
                let mut v = Vec::with_capacity(3);
                if self.needs(*input) {
                    let mut gx = vec![0.0; n * d];
                    gemm(n, c, d, g, (c, 1), w.data(), (1, c), 0.0, &mut gx, (d, 1));
                    v.push((*input, gx));
                }
                let mut gw = vec![0.0; d * c];
                gemm(d, n, c, x.data(), (1, d), g, (c, 1), 0.0, &mut gw, (c, 1));
                v.push((*weight, gw));
                let mut gb = vec![0.0; c];
                for row in g.chunks_exact(c) {
                    gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                v.push((*bias, gb));
                v
            }
            Op::Relu(x) => {
                let gx = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                    .collect();
                vec![(*x, gx)]
            }
            Op::MeanPool(x) => {
                let s = self.value(*x).shape();
                let hw = s[2] * s[3];
                let gx = g.iter().flat_map(|&gv| std::iter::repeat_n(gv / hw as f64, hw)).collect();
                vec![(*x, gx)]
            }
            Op::Flatten(x) => vec![(*x, g.to_vec())],
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|v| -v).collect())],
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                let ga = g.iter().zip(tb).map(|(x, y)| x * y).collect();
                let gb = g.iter().zip(ta).map(|(x, y)| x * y).collect();
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(x, f) => vec![(*x, g.iter().map(|v| v * f).collect())],
            Op::BatchMean(x) => {
                let t = self.value(*x);
                let n = t.shape()[0];
                let gx = (0..n).flat_map(|_| g.iter().map(move |v| v / n as f64)).collect();
                vec![(*x, gx)]
            }
            Op::BatchVariance(x) => {
                let t = self.value(*x);
                let (n, d) = (t.shape()[0], t.shape()[1]);
                let mu = column_means(t.data(), n, d);
                let gx = t
                    .data()
                    .chunks_exact(d)
                    .flat_map(|row| (0..d).map(|j| 2.0 * (row[j] - mu[j]) / n as f64 * g[j]).collect::<Vec<_>>())
                    .collect();
                vec![(*x, gx)]
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                vec![(*x, vec![g[0] / n as f64; n])]
            }
            Op::Sum(x) => vec![(*x, vec![g[0]; self.value(*x).len()])],
            Op::SoftmaxXent { logits, labels, probs } => {
                let n = labels.len();
                let c = probs.len() / n;
                let mut gl: Vec<f64> = probs.clone();
                for (i, &y) in labels.iter().enumerate() {
                    gl[i * c + y] -= 1.0;
                }
                let scale = g[0] / n as f64;
                gl.iter_mut().for_each(|v| *v *= scale);
                vec![(*logits, gl)]
            }
            Op::Custom { inputs, func } => {
                let values: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let grads = func.gradient(&values)?;
                inputs
                    .iter()
                    .zip(grads)
                    .map(|(&v, mut gr)| {
                        gr.iter_mut().for_each(|x| *x *= g[0]);
                        (v, gr)
                    })
                    .collect()
            }
        };
        Ok(out)
    }
}

fn column_means(data: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut mu = vec![0.0; d];
    for row in data.chunks_exact(d) {
        mu.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    mu
}

/// Mean cross-entropy and the row-wise softmax probabilities.
pub(crate) fn softmax_xent_forward(logits: &[f64], labels: &[usize], c: usize) -> (f64, Vec<f64>) {
    let mut probs = vec![0.0; logits.len()];
    let mut total = 0.0;
    for (i, row) in logits.chunks_exact(c).enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (p, &o) in probs[i * c..(i + 1) * c].iter_mut().zip(row) {
            *p = (o - max).exp();
            z += *p;
        }
        probs[i * c..(i + 1) * c].iter_mut().for_each(|p| *p /= z);
        total += z.ln() + max - row[labels[i]];
    }
    (total / labels.len() as f64, probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> (ParamSet, usize) {
        let mut ps = ParamSet::new();
        let slot = ps.push("x", Tensor::new(vec![1], vec![v]).unwrap()).unwrap();
        (ps, slot)
    }

    #[test]
    fn square_gradient() {
        let (mut ps, slot) = scalar_param(3.0);
        let mut tape = Tape::new();
        let x = tape.param(&ps, slot);
        let y = tape.mul(x, x).unwrap();
        let y = tape.sum(y).unwrap();
        tape.backward(y, &mut ps).unwrap();
        assert_eq!(ps.get(slot).tensor.grad.as_deref(), Some(&[6.0][..]));
    }

    #[test]
    fn second_backward_is_state_error() {
        let (mut ps, slot) = scalar_param(1.0);
        let mut tape = Tape::new();
        let x = tape.param(&ps, slot);
        let y = tape.sum(x).unwrap();
        tape.backward(y, &mut ps).unwrap();
        assert!(matches!(tape.backward(y, &mut ps), Err(Error::State(_))));
        tape.zero_grad();
        assert!(tape.backward(y, &mut ps).is_ok());
    }

    #[test]
    fn xent_uniform_saturated_and_direct() {
        let mut tape = Tape::new();
        let l = tape.input(Tensor::new(vec![1, 10], vec![0.3; 10]).unwrap()).unwrap();
        let v = tape.softmax_cross_entropy(l, &[4]).unwrap();
        assert!((tape.value(v).item().unwrap() - 10f64.ln()).abs() < 1e-12);

        let l = tape.input(Tensor::new(vec![1, 2], vec![1000.0, 0.0]).unwrap()).unwrap();
        let v = tape.softmax_cross_entropy(l, &[0]).unwrap();
        let loss = tape.value(v).item().unwrap();
        assert!(loss.is_finite() && loss <= 1e-10);

        let l = tape.input(Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let v = tape.softmax_cross_entropy(l, &[2]).unwrap();
        let expected = (1.0 + (-1f64).exp() + (-2f64).exp()).ln();
        assert!((tape.value(v).item().unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.407606).abs() < 1e-6);
    }

    #[test]
    fn xent_label_out_of_range() {
        let mut tape = Tape::new();
        let l = tape.input(Tensor::zeros(vec![2, 3])).unwrap();
        assert!(matches!(tape.softmax_cross_entropy(l, &[0, 3]), Err(Error::Index(_))));
    }

    #[test]
    fn xent_logit_gradient_rows_sum_to_zero() {
        let mut ps = ParamSet::new();
        let slot = ps
            .push("o", Tensor::new(vec![2, 3], vec![0.1, -2.0, 0.7, 3.0, 1.0, -1.0]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let o = tape.param(&ps, slot);
        let loss = tape.softmax_cross_entropy(o, &[2, 0]).unwrap();
        tape.backward(loss, &mut ps).unwrap();
        let g = ps.get(slot).tensor.grad.clone().unwrap();
        for row in g.chunks(3) {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn conv_shape_errors_name_axes() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::zeros(vec![1, 2, 4, 4])).unwrap();
        let k = tape.input(Tensor::zeros(vec![1, 3, 3, 3])).unwrap();
        let err = tape.conv2d(x, k, 1, 0).unwrap_err().to_string();
        assert!(err.contains("axis 1"), "{err}");
        let k = tape.input(Tensor::zeros(vec![1, 2, 7, 3])).unwrap();
        let err = tape.conv2d(x, k, 1, 1).unwrap_err().to_string();
        assert!(err.contains("axis 2"), "{err}");
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![1], vec![1e300]).unwrap()).unwrap();
        assert!(matches!(tape.scale(x, 1e300), Err(Error::NonFinite(_))));
    }
}
