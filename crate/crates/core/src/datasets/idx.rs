//! IDX reader for the MNIST distribution files (raw or gzip-compressed).

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Grayscale 28x28 digits with their labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayMnist {
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` intensities, row-major per image.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl GrayMnist {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.image_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Appends `other` (same image geometry) after `self`.
    pub fn concat(mut self, other: GrayMnist) -> Result<GrayMnist> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::Argument(format!(
                "image geometry differs: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        self.pixels.extend(other.pixels);
        self.labels.extend(other.labels);
        Ok(self)
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::format(0, format!("{}: bad gzip stream: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(offset as u64, "truncated header"))
}

/// Parses an IDX3 image file. Returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(0, format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format(4, "image dimensions overflow"))?;
    let payload = &bytes[16..];
    if payload.len() < expected {
        return Err(Error::format(
            (16 + payload.len()) as u64,
            format!("truncated payload: {} of {expected} pixel bytes", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(Error::format((16 + expected) as u64, "trailing bytes after image payload"));
    }
    Ok((count, rows, cols, payload.to_vec()))
}

/// Parses an IDX1 label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(0, format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::format(
            (8 + payload.len()) as u64,
            format!("truncated payload: {} of {count} labels", payload.len()),
        ));
    }
    if payload.len() > count {
        return Err(Error::format((8 + count) as u64, "trailing bytes after label payload"));
    }
    if let Some(i) = payload.iter().position(|&l| l > 9) {
        return Err(Error::format((8 + i) as u64, format!("label {} outside 0..=9", payload[i])));
    }
    Ok(payload.to_vec())
}

pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<GrayMnist> {
    let (count, rows, cols, pixels) = parse_idx_images(&read_maybe_gz(images_path.as_ref())?)?;
    let labels = parse_idx_labels(&read_maybe_gz(labels_path.as_ref())?)?;
    if labels.len() != count {
        return Err(Error::format(4, format!("image count {count} but label count {}", labels.len())));
    }
    Ok(GrayMnist { rows, cols, pixels, labels })
}

fn find(dir: &Path, stem: &str) -> Result<std::path::PathBuf> {
    for name in [stem.to_string(), format!("{stem}.gz"), stem.replacen("-idx", ".idx", 1)] {
        let p = dir.join(&name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{} not found in {}", stem, dir.display()),
    )))
}

/// Loads the official train and test splits from `dir`.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(GrayMnist, GrayMnist)> {
    let dir = dir.as_ref();
    let train = load_mnist_idx(find(dir, "train-images-idx3-ubyte")?, find(dir, "train-labels-idx1-ubyte")?)?;
    let test = load_mnist_idx(find(dir, "t10k-images-idx3-ubyte")?, find(dir, "t10k-labels-idx1-ubyte")?)?;
    Ok((train, test))
}
