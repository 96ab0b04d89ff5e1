//! CMNIST and CS-CMNIST domain generators.
//!
//! Both datasets start from gray MNIST digits and attach a color whose
//! correlation with the label depends on a per-domain bias parameter.
//! Domains 1 and 2 are seen during training, domain 3 is the unseen domain.
//!
//! A colored image is never materialized for the whole set. Each item keeps
//! its gray intensities and color index, and [`ColoredDataset::image`]
//! expands them into `[3, 28, 28]` values `gray / 255 * palette[color]`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GrayMnist;
use crate::rng::Streams;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const IMAGE_SIDE: usize = 28;
const IMAGE_LEN: usize = IMAGE_SIDE * IMAGE_SIDE;

/// Per-domain color-flip probabilities `p^e`.
pub const CMNIST_BIASES: [f64; 3] = [0.1, 0.2, 0.9];
pub const CMNIST_SIZES: [usize; 3] = [25_000, 25_000, 20_000];
pub const CMNIST_LABEL_NOISE: f64 = 0.25;

/// Per-domain acceptance parameters `theta^e`.
pub const CS_CMNIST_BIASES: [f64; 3] = [0.1, 0.2, 0.9];
pub const CS_CMNIST_SIZE: usize = 20_000;

const CMNIST_PALETTE: [[f64; 3]; 2] = [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];

/// Colors of the ten CS-CMNIST classes (RGB weights in `[0, 1]`).
pub const CS_PALETTE: [[f64; 3]; 10] = [
    [1.0, 0.0, 0.0], // red
    [0.0, 1.0, 0.0], // green
    [0.0, 0.0, 1.0], // blue
    [1.0, 1.0, 0.0], // yellow
    [1.0, 0.0, 1.0], // magenta
    [0.0, 1.0, 1.0], // cyan
    [1.0, 0.5, 0.0], // orange
    [0.5, 0.0, 1.0], // violet
    [1.0, 1.0, 1.0], // white
    [0.5, 0.5, 0.5], // gray
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetKind {
    #[serde(rename = "cmnist", alias = "CMNIST")]
    Cmnist,
    #[serde(rename = "cs-cmnist", alias = "CS-CMNIST")]
    CsCmnist,
}

impl DatasetKind {
    pub fn slug(self) -> &'static str {
        match self {
            DatasetKind::Cmnist => "cmnist",
            DatasetKind::CsCmnist => "cs-cmnist",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DatasetKind::Cmnist => "CMNIST",
            DatasetKind::CsCmnist => "CS-CMNIST",
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            DatasetKind::Cmnist => 2,
            DatasetKind::CsCmnist => 10,
        }
    }

    pub fn palette(self) -> &'static [[f64; 3]] {
        match self {
            DatasetKind::Cmnist => &CMNIST_PALETTE,
            DatasetKind::CsCmnist => &CS_PALETTE,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DatasetKind::Cmnist => 0,
            DatasetKind::CsCmnist => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DatasetKind::Cmnist),
            1 => Some(DatasetKind::CsCmnist),
            _ => None,
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cmnist" => Ok(DatasetKind::Cmnist),
            "cs-cmnist" | "cscmnist" => Ok(DatasetKind::CsCmnist),
            _ => Err(Error::Config(format!("unknown dataset kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainRole {
    Seen,
    Unseen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    /// 1-based domain index `e`.
    pub index: usize,
    pub bias: f64,
    pub role: DomainRole,
    pub target_size: usize,
}

impl DomainSpec {
    fn new(index: usize, bias: f64, target_size: usize) -> Self {
        let role = if index == 3 { DomainRole::Unseen } else { DomainRole::Seen };
        Self { index, bias, role, target_size }
    }
}

/// One generated domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ColoredDataset {
    pub kind: DatasetKind,
    pub domain: DomainSpec,
    pub seed: u64,
    /// `count * 28 * 28` gray intensities.
    pub gray: Vec<u8>,
    /// Class label `Y` (binary for CMNIST, digit for CS-CMNIST).
    pub labels: Vec<u8>,
    /// Original MNIST digit of each item.
    pub digits: Vec<u8>,
    /// Color index `C`.
    pub colors: Vec<u8>,
    /// Index of the source image in the gray pool.
    pub source: Vec<u32>,
}

impl ColoredDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn gray_image(&self, i: usize) -> &[u8] {
        &self.gray[i * IMAGE_LEN..(i + 1) * IMAGE_LEN]
    }

    /// Writes item `i` as `[3, 28, 28]` channel-major values into `out`.
    pub fn write_image(&self, i: usize, out: &mut [f64]) {
        let rgb = self.kind.palette()[self.colors[i] as usize];
        for (ch, weight) in rgb.iter().enumerate() {
            let plane = &mut out[ch * IMAGE_LEN..(ch + 1) * IMAGE_LEN];
            for (dst, &g) in plane.iter_mut().zip(self.gray_image(i)) {
                *dst = g as f64 / 255.0 * weight;
            }
        }
    }

    pub fn image(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; 3 * IMAGE_LEN];
        self.write_image(i, &mut out);
        out
    }

    /// `[n, 3, 28, 28]` inputs and labels for the given item indices.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let mut data = vec![0.0; indices.len() * 3 * IMAGE_LEN];
        for (slot, &i) in indices.iter().enumerate() {
            self.write_image(i, &mut data[slot * 3 * IMAGE_LEN..(slot + 1) * 3 * IMAGE_LEN]);
        }
        let x = Tensor::new(vec![indices.len(), 3, IMAGE_SIDE, IMAGE_SIDE], data).expect("batch shape");
        (x, indices.iter().map(|&i| self.label(i)).collect())
    }

    /// Items at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> ColoredDataset {
        let mut gray = Vec::with_capacity(indices.len() * IMAGE_LEN);
        for &i in indices {
            gray.extend_from_slice(self.gray_image(i));
        }
        let pick = |v: &[u8]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        ColoredDataset {
            kind: self.kind,
            domain: DomainSpec { target_size: indices.len(), ..self.domain },
            seed: self.seed,
            gray,
            labels: pick(&self.labels),
            digits: pick(&self.digits),
            colors: pick(&self.colors),
            source: indices.iter().map(|&i| self.source[i]).collect(),
        }
    }

    /// Empirical `P(C = Y)`.
    pub fn color_label_agreement(&self) -> f64 {
        let agree = self.colors.iter().zip(&self.labels).filter(|(c, y)| c == y).count();
        agree as f64 / self.len().max(1) as f64
    }

    /// Empirical `P(Y != Y_g)`; zero for CS-CMNIST where labels are clean.
    pub fn label_flip_rate(&self) -> f64 {
        let flips = self
            .labels
            .iter()
            .zip(&self.digits)
            .filter(|(&y, &d)| match self.kind {
                DatasetKind::Cmnist => y != binary_label(d),
                DatasetKind::CsCmnist => y != d,
            })
            .count();
        flips as f64 / self.len().max(1) as f64
    }
}

/// `0` for digits up to four, `1` otherwise.
pub fn binary_label(digit: u8) -> u8 {
    u8::from(digit > 4)
}

fn check_geometry(gray: &GrayMnist) -> Result<()> {
    if (gray.rows, gray.cols) != (IMAGE_SIDE, IMAGE_SIDE) {
        return Err(Error::Argument(format!(
            "expected {IMAGE_SIDE}x{IMAGE_SIDE} images, got {}x{}",
            gray.rows, gray.cols
        )));
    }
    Ok(())
}

/// CMNIST: disjoint 25k/25k/20k partition of the pool, binary label
/// `Y = [digit > 4] xor Bern(0.25)` and color `C = Y xor Bern(p^e)`.
pub fn make_cmnist(gray: &GrayMnist, seed: u64) -> Result<[ColoredDataset; 3]> {
    check_geometry(gray)?;
    let needed: usize = CMNIST_SIZES.iter().sum();
    if gray.len() < needed {
        return Err(Error::Argument(format!(
            "CMNIST needs a pool of {needed} images, got {}",
            gray.len()
        )));
    }
    let streams = Streams::new(seed);
    let mut order: Vec<usize> = (0..gray.len()).collect();
    order.shuffle(&mut streams.stream("cmnist/partition"));

    let mut start = 0;
    let domains = [0, 1, 2].map(|e| {
        let spec = DomainSpec::new(e + 1, CMNIST_BIASES[e], CMNIST_SIZES[e]);
        let picks = &order[start..start + spec.target_size];
        start += spec.target_size;
        let mut noise = streams.stream(&format!("cmnist/domain{}/label-noise", spec.index));
        let mut flip = streams.stream(&format!("cmnist/domain{}/color", spec.index));
        let mut ds = empty(DatasetKind::Cmnist, spec, seed);
        for &src in picks {
            let digit = gray.labels[src];
            let y = binary_label(digit) ^ u8::from(noise.random_bool(CMNIST_LABEL_NOISE));
            let c = y ^ u8::from(flip.random_bool(spec.bias));
            push(&mut ds, gray, src, digit, y, c);
        }
        ds
    });
    Ok(domains)
}

/// CS-CMNIST: rejection sampling of (image, color) proposals. A proposal
/// with uniform color `C` is accepted with probability `1 - theta` when `C`
/// equals the digit and `theta` otherwise. Images are drawn with
/// replacement, so the same digit may appear in several colors.
pub fn make_cs_cmnist(gray: &GrayMnist, seed: u64) -> Result<[ColoredDataset; 3]> {
    check_geometry(gray)?;
    if gray.is_empty() {
        return Err(Error::Argument("CS-CMNIST needs a non-empty pool".into()));
    }
    let streams = Streams::new(seed);
    let domains = [0, 1, 2].map(|e| {
        let spec = DomainSpec::new(e + 1, CS_CMNIST_BIASES[e], CS_CMNIST_SIZE);
        let mut pick = streams.stream(&format!("cs-cmnist/domain{}/image", spec.index));
        let mut color = streams.stream(&format!("cs-cmnist/domain{}/color", spec.index));
        let mut accept = streams.stream(&format!("cs-cmnist/domain{}/accept", spec.index));
        let mut ds = empty(DatasetKind::CsCmnist, spec, seed);
        while ds.len() < spec.target_size {
            let src = pick.random_range(0..gray.len());
            let c: u8 = color.random_range(0..10);
            let digit = gray.labels[src];
            if accept.random_bool(cs_acceptance_probability(spec.bias, c, digit)) {
                push(&mut ds, gray, src, digit, digit, c);
            }
        }
        ds
    });
    Ok(domains)
}

/// Probability that a CS-CMNIST proposal with color `color` for an image
/// of `digit` is kept.
pub fn cs_acceptance_probability(theta: f64, color: u8, digit: u8) -> f64 {
    if color == digit {
        1.0 - theta
    } else {
        theta
    }
}

fn empty(kind: DatasetKind, domain: DomainSpec, seed: u64) -> ColoredDataset {
    let n = domain.target_size;
    ColoredDataset {
        kind,
        domain,
        seed,
        gray: Vec::with_capacity(n * IMAGE_LEN),
        labels: Vec::with_capacity(n),
        digits: Vec::with_capacity(n),
        colors: Vec::with_capacity(n),
        source: Vec::with_capacity(n),
    }
}

fn push(ds: &mut ColoredDataset, gray: &GrayMnist, src: usize, digit: u8, y: u8, c: u8) {
    ds.gray.extend_from_slice(gray.image(src));
    ds.labels.push(y);
    ds.digits.push(digit);
    ds.colors.push(c);
    ds.source.push(src as u32);
}

/// Index sets `(train, val)` with `round(fraction * n)` validation items.
pub fn split_indices(n: usize, fraction: f64, streams: &Streams, name: &str) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!("validation fraction must lie in (0, 1), got {fraction}")));
    }
    let n_val = (fraction * n as f64).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::Argument(format!(
            "split of {n} items at fraction {fraction} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut streams.stream(name));
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

/// Deterministic train/validation split of one domain.
pub fn split_train_val(ds: &ColoredDataset, fraction: f64, seed: u64) -> Result<(ColoredDataset, ColoredDataset)> {
    let name = format!("split/{}/domain{}", ds.kind.slug(), ds.domain.index);
    let (train, val) = split_indices(ds.len(), fraction, &Streams::new(seed), &name)?;
    Ok((ds.subset(&train), ds.subset(&val)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_pool(n: usize) -> GrayMnist {
        GrayMnist {
            rows: IMAGE_SIDE,
            cols: IMAGE_SIDE,
            pixels: (0..n * IMAGE_LEN).map(|i| (i % 251) as u8).collect(),
            labels: (0..n).map(|i| (i % 10) as u8).collect(),
        }
    }

    #[test]
    fn cmnist_rejects_small_pool() {
        assert!(matches!(make_cmnist(&tiny_pool(100), 0), Err(Error::Argument(_))));
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let s = Streams::new(3);
        let (train, val) = split_indices(25_000, 0.2, &s, "x").unwrap();
        assert_eq!((train.len(), val.len()), (20_000, 5_000));
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..25_000).collect::<Vec<_>>());
        assert_eq!(split_indices(25_000, 0.2, &s, "x").unwrap().1, val);
    }

    #[test]
    fn degenerate_split_rejected() {
        let s = Streams::new(0);
        assert!(split_indices(3, 0.1, &s, "x").is_err());
        assert!(split_indices(3, 0.0, &s, "x").is_err());
        assert!(split_indices(3, 1.0, &s, "x").is_err());
    }

    #[test]
    fn palette_colors_channels() {
        let pool = tiny_pool(50);
        let ds = make_cs_cmnist(&pool, 1).map(|d| d[0].subset(&[0, 1, 2])).unwrap();
        for i in 0..ds.len() {
            let img = ds.image(i);
            let rgb = CS_PALETTE[ds.colors[i] as usize];
            for ch in 0..3 {
                for p in 0..IMAGE_LEN {
                    let expected = ds.gray_image(i)[p] as f64 / 255.0 * rgb[ch];
                    assert_eq!(img[ch * IMAGE_LEN + p], expected);
                }
            }
        }
    }
}
