//! `SLDS` binary container for generated domains.
//!
//! Layout (little-endian):
//!
//! ```text
//! "SLDS" | version u32 | kind u8 | domain u8 | role u8 | reserved u8
//! bias f64 | seed u64 | count u64 | channels u64 | height u64 | width u64
//! palette_len u64 | palette f64 x (palette_len * 3)
//! labels u8 x count | digits u8 x count | colors u8 x count
//! source u32 x count | gray u8 x (count * height * width)
//! ```

use std::io::{Read, Write};

use super::colored::{ColoredDataset, DatasetKind, DomainRole, DomainSpec, IMAGE_SIDE};
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"SLDS";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset<W: Write>(ds: &ColoredDataset, mut w: W) -> Result<()> {
    let n = ds.len() as u64;
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    let role = match ds.domain.role {
        DomainRole::Seen => 0u8,
        DomainRole::Unseen => 1u8,
    };
    w.write_all(&[ds.kind.code(), ds.domain.index as u8, role, 0])?;
    w.write_all(&ds.domain.bias.to_le_bytes())?;
    w.write_all(&ds.seed.to_le_bytes())?;
    for v in [n, 3, IMAGE_SIDE as u64, IMAGE_SIDE as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    let palette = ds.kind.palette();
    w.write_all(&(palette.len() as u64).to_le_bytes())?;
    for v in palette.iter().flatten() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&ds.labels)?;
    w.write_all(&ds.digits)?;
    w.write_all(&ds.colors)?;
    for s in &ds.source {
        w.write_all(&s.to_le_bytes())?;
    }
    w.write_all(&ds.gray)?;
    Ok(())
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn take(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::format(self.offset, format!("truncated: expected {n} more bytes")))?;
        self.offset += n as u64;
        Ok(buf)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_dataset<R: Read>(r: R) -> Result<ColoredDataset> {
    let mut c = Cursor { inner: r, offset: 0 };
    if c.take(4)? != DATASET_MAGIC {
        return Err(Error::format(0, "bad dataset magic"));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
    if version != DATASET_VERSION {
        return Err(Error::format(4, format!("unsupported dataset version {version}")));
    }
    let head = c.take(4)?;
    let kind = DatasetKind::from_code(head[0]).ok_or_else(|| Error::format(8, "unknown dataset kind"))?;
    let role = match head[2] {
        0 => DomainRole::Seen,
        1 => DomainRole::Unseen,
        r => return Err(Error::format(10, format!("unknown domain role {r}"))),
    };
    let bias = c.f64()?;
    let seed = c.u64()?;
    let count = c.u64()? as usize;
    let geom = (c.u64()?, c.u64()?, c.u64()?);
    if geom != (3, IMAGE_SIDE as u64, IMAGE_SIDE as u64) {
        return Err(Error::format(c.offset - 24, format!("unsupported image geometry {geom:?}")));
    }
    let palette_len = c.u64()? as usize;
    if palette_len != kind.palette().len() {
        return Err(Error::format(c.offset - 8, format!("palette of {palette_len} colors")));
    }
    let palette_at = c.offset;
    for v in kind.palette().iter().flatten() {
        if c.f64()? != *v {
            return Err(Error::format(palette_at, "palette differs from this build"));
        }
    }
    let labels = c.take(count)?;
    let digits = c.take(count)?;
    let colors = c.take(count)?;
    let source = c.take(count * 4)?.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().expect("4"))).collect();
    let gray = c.take(count * IMAGE_SIDE * IMAGE_SIDE)?;
    let mut trailing = [0u8; 1];
    if c.inner.read(&mut trailing)? != 0 {
        return Err(Error::format(c.offset, "trailing bytes after payload"));
    }
    Ok(ColoredDataset {
        kind,
        domain: DomainSpec { index: head[1] as usize, bias, role, target_size: count },
        seed,
        gray,
        labels,
        digits,
        colors,
        source,
    })
}
