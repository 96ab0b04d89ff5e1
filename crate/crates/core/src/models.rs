//! Featurizer `f` and classifier head `g`.
//!
//! Both networks are stacks of 3x3 convolutions (padding 1) with ReLU,
//! followed by a global mean-pool that yields the feature vector `z`, and a
//! single dense layer producing logits. There are no normalization layers.

use rand::Rng;

use crate::datasets::DatasetKind;
use crate::tensor::{ParamSet, Tape, Tensor, Var};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvBlock {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Featurizer {
    pub blocks: Vec<ConvBlock>,
    pub feature_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierHead {
    pub in_dim: usize,
    pub classes: usize,
    weight: usize,
    bias: usize,
}

/// Featurizer and head together with the parameters they own.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub params: ParamSet,
    pub featurizer: Featurizer,
    pub head: ClassifierHead,
}

/// Parameters of a [`Network`] bound to one tape.
#[derive(Debug, Clone)]
pub struct BoundNetwork {
    blocks: Vec<(Var, Var)>,
    head: (Var, Var),
}

/// `(in, out, stride)` per block.
type Layout<'a> = &'a [(usize, usize, usize)];

const CS_CMNIST_LAYOUT: [(usize, usize, usize); 3] = [(3, 256, 2), (256, 128, 2), (128, 64, 2)];
const CMNIST_LAYOUT: [(usize, usize, usize); 4] = [(3, 64, 2), (64, 128, 2), (128, 128, 2), (128, 128, 1)];

fn he_std(fan_in: usize) -> f64 {
    (2.0 / fan_in as f64).sqrt()
}

fn build<R: Rng + ?Sized>(layout: Layout<'_>, classes: usize, rng: &mut R) -> Network {
    let mut params = ParamSet::new();
    let mut blocks = Vec::with_capacity(layout.len());
    for (i, &(cin, cout, stride)) in layout.iter().enumerate() {
        let k = 3;
        let w = Tensor::randn(vec![cout, cin, k, k], he_std(cin * k * k), rng);
        let weight = params.push(format!("conv{}.weight", i + 1), w).expect("unique");
        let bias = params.push(format!("conv{}.bias", i + 1), Tensor::zeros(vec![cout])).expect("unique");
        blocks.push(ConvBlock { in_channels: cin, out_channels: cout, kernel: k, stride, padding: 1, weight, bias });
    }
    let d = layout.last().map_or(0, |l| l.1);
    let w = Tensor::randn(vec![d, classes], he_std(d), rng);
    let weight = params.push("head.weight", w).expect("unique");
    let bias = params.push("head.bias", Tensor::zeros(vec![classes])).expect("unique");
    Network {
        params,
        featurizer: Featurizer { blocks, feature_dim: d },
        head: ClassifierHead { in_dim: d, classes, weight, bias },
    }
}

/// Three stride-2 conv blocks with 256, 128 and 64 channels, `d' = 64`,
/// ten-way head.
pub fn build_cs_cmnist_net<R: Rng + ?Sized>(rng: &mut R) -> Network {
    build(&CS_CMNIST_LAYOUT, 10, rng)
}

/// Four conv blocks (64, 128, 128, 128 channels; the last with stride 1),
/// `d' = 128`, binary head.
pub fn build_cmnist_convnet<R: Rng + ?Sized>(rng: &mut R) -> Network {
    build(&CMNIST_LAYOUT, 2, rng)
}

pub fn build_network<R: Rng + ?Sized>(kind: DatasetKind, rng: &mut R) -> Network {
    match kind {
        DatasetKind::Cmnist => build_cmnist_convnet(rng),
        DatasetKind::CsCmnist => build_cs_cmnist_net(rng),
    }
}

impl Network {
    pub fn bind(&self, tape: &mut Tape) -> BoundNetwork {
        let blocks = self
            .featurizer
            .blocks
            .iter()
            .map(|b| (tape.param(&self.params, b.weight), tape.param(&self.params, b.bias)))
            .collect();
        let head = (tape.param(&self.params, self.head.weight), tape.param(&self.params, self.head.bias));
        BoundNetwork { blocks, head }
    }

    /// Features `[n, d']` of an `[n, 3, 28, 28]` input.
    pub fn features(&self, tape: &mut Tape, bound: &BoundNetwork, x: Var) -> Result<Var> {
        let mut h = x;
        for (block, &(w, b)) in self.featurizer.blocks.iter().zip(&bound.blocks) {
            h = tape.conv2d(h, w, block.stride, block.padding)?;
            h = tape.channel_bias(h, b)?;
            h = tape.relu(h)?;
        }
        tape.mean_pool(h)
    }

    pub fn logits(&self, tape: &mut Tape, bound: &BoundNetwork, z: Var) -> Result<Var> {
        tape.dense(z, bound.head.0, bound.head.1)
    }

    /// `(features, logits)` for one input batch.
    pub fn forward(&self, tape: &mut Tape, bound: &BoundNetwork, x: Var) -> Result<(Var, Var)> {
        let z = self.features(tape, bound, x)?;
        let o = self.logits(tape, bound, z)?;
        Ok((z, o))
    }

    /// Features and logits without keeping a tape around.
    pub fn predict(&self, x: Tensor) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = tape.input(x)?;
        let (z, o) = self.forward(&mut tape, &bound, x)?;
        Ok((tape.value(z).clone(), tape.value(o).clone()))
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }
}
