//! Weights file.
//!
//! ```text
//! "PCGW" | version: u32 | count: u32 |
//!   count × (name_len: u32 | name: utf-8 | rank: u32 | dims: rank × u32 | payload: f32)
//! ```
//! All integers little-endian. Tensors are named `layer{i}.kernel` and
//! `layer{i}.bias` after their layer index.

use std::fs;
use std::path::Path;

use super::network::{named_tensors, LayerParams, ParamSet};
use super::tensor::Tensor;
use crate::tensor_io::ByteReader;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PCGW";
pub const VERSION: u32 = 1;

pub fn encode_weights(params: &[Option<LayerParams<f32>>]) -> Vec<u8> {
    let named = named_tensors(params);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, t) in named {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn parse_name(name: &str) -> Option<(usize, bool)> {
    let rest = name.strip_prefix("layer")?;
    let (idx, part) = rest.split_once('.')?;
    let idx = idx.parse().ok()?;
    match part {
        "kernel" => Some((idx, true)),
        "bias" => Some((idx, false)),
        _ => None,
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<ParamSet<f32>> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a weights file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weights version {version}")));
    }
    let count = r.u32()? as usize;
    let mut slots: Vec<(Option<Tensor<f32>>, Option<Tensor<f32>>)> = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("tensor name is not utf-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let data = r.f32s(dims.iter().product())?;
        let (idx, is_kernel) =
            parse_name(&name).ok_or_else(|| Error::Format(format!("unexpected tensor name {name:?}")))?;
        if slots.len() <= idx {
            slots.resize(idx + 1, (None, None));
        }
        let slot = if is_kernel {
            &mut slots[idx].0
        } else {
            &mut slots[idx].1
        };
        if slot.replace(Tensor { dims, data }).is_some() {
            return Err(Error::Format(format!("duplicate tensor {name}")));
        }
    }
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after weights".into()));
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| match s {
            (None, None) => Ok(None),
            (Some(kernel), Some(bias)) => Ok(Some(LayerParams { kernel, bias })),
            _ => Err(Error::Format(format!("layer{i} is missing its kernel or bias"))),
        })
        .collect()
}

pub fn save_weights(params: &[Option<LayerParams<f32>>], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_weights(params))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ParamSet<f32>> {
    decode_weights(&fs::read(path)?)
}
