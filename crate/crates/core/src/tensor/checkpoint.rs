//! Flat binary checkpoints.
//!
//! Layout (all integers little-endian u64):
//! `"SLT1"`, count, then per parameter: name length, name bytes (UTF-8),
//! rank, extents, raw little-endian f64 data.

use std::io::{Read, Write};

use super::{ParamSet, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SLT1";

pub fn write_checkpoint<W: Write>(params: &ParamSet, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for p in params.iter() {
        w.write_all(&(p.name.len() as u64).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        w.write_all(&(p.tensor.rank() as u64).to_le_bytes())?;
        for &e in p.tensor.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for v in p.tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::format(self.offset, format!("truncated: expected {n} more bytes")))?;
        self.offset += n as u64;
        Ok(buf)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.bytes(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<ParamSet> {
    let mut r = Reader { inner: r, offset: 0 };
    if r.bytes(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format(0, "bad checkpoint magic"));
    }
    let count = r.u64()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let at = r.offset;
        let len = r.u64()? as usize;
        if len > 1 << 16 {
            return Err(Error::format(at, format!("implausible name length {len}")));
        }
        let name = String::from_utf8(r.bytes(len)?)
            .map_err(|_| Error::format(at + 8, "parameter name is not UTF-8"))?;
        let rank = r.u64()? as usize;
        if rank > 8 {
            return Err(Error::format(r.offset - 8, format!("implausible rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.u64().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.bytes(n * 8)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        params
            .push(name, Tensor::new(shape, data)?)
            .map_err(|e| Error::format(at, e.to_string()))?;
    }
    Ok(params)
}
