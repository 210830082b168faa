//! Portable binary tensor files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PCGT" | version: u8 | dtype: u8 | rank: u32 | dims: rank × u32 | payload: row-major f32
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PCGT";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

impl RawTensor {
    pub fn new(dims: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != values.len() {
            return Err(Error::shape("tensor payload", &[expected], &[values.len()]));
        }
        Ok(Self { dims, values })
    }
}

pub fn encode(t: &RawTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(10 + 4 * t.dims.len() + 4 * t.values.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32);
    out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in &t.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<RawTensor> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a tensor file".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported tensor version {version}")));
    }
    let dtype = r.u8()?;
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype code {dtype}")));
    }
    let rank = r.u32()? as usize;
    let dims = (0..rank)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let n: usize = dims.iter().product();
    let values = r.f32s(n)?;
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after tensor payload".into()));
    }
    Ok(RawTensor { dims, values })
}

pub fn write_tensor(path: impl AsRef<Path>, t: &RawTensor) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(t))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<RawTensor> {
    decode(&fs::read(path)?)
}

/// Cursor over a little-endian byte buffer; every short read is reported as
/// "unexpected end of file".
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format("unexpected end of file".into())),
        }
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Format("tensor too large".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }
}
