//! Binary weight sidecar.
//!
//! Layout, little-endian: 8 magic bytes, `u32` tensor count, then per tensor a
//! `u32` rank, `rank` `u32` dims, and the row-major `f32` payload. Tensors are
//! stored as weight (`[out, in, 3, 3]`) then bias (`[out]`) for the z, r and h
//! gates, the two head layers and the two upsampling layers, 14 in total.
//! The lookup distance is not stored; loading assumes the default.

use std::path::Path;

use super::gru::{GruDims, GruWeights};
use super::tensor::Conv3x3;
use super::volume::{lookup_channels, DEFAULT_LOOKUP_RADIUS};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"STLGRUW1";
const TENSOR_COUNT: usize = 14;

fn malformed(reason: impl Into<String>) -> Error {
    Error::Malformed {
        format: "weights",
        reason: reason.into(),
    }
}

pub fn encode_weights(w: &GruWeights) -> Result<Vec<u8>> {
    w.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&(TENSOR_COUNT as u32).to_le_bytes());
    let mut push = |dims: &[usize], values: &[f64]| {
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    };
    for conv in w.convs() {
        push(&[conv.out_channels, conv.in_channels, 3, 3], &conv.weight);
        push(&[conv.out_channels], &conv.bias);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| malformed("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn tensor(&mut self) -> Result<(Vec<usize>, Vec<f64>)> {
        let rank = self.u32()?;
        if rank == 0 || rank > 4 {
            return Err(malformed(format!("unsupported tensor rank {rank}")));
        }
        let dims = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| malformed("tensor size overflows"))?;
        let raw = self.take(count.checked_mul(4).ok_or_else(|| malformed("tensor size overflows"))?)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        Ok((dims, values))
    }

    fn conv(&mut self) -> Result<Conv3x3> {
        let (wd, weight) = self.tensor()?;
        let (bd, bias) = self.tensor()?;
        if wd.len() != 4 || wd[2] != 3 || wd[3] != 3 {
            return Err(malformed(format!("expected a [out, in, 3, 3] kernel, got {wd:?}")));
        }
        if bd != [wd[0]] {
            return Err(malformed(format!("bias shape {bd:?} does not match kernel {wd:?}")));
        }
        Conv3x3::new(wd[0], wd[1], weight, bias)
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<GruWeights> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(WEIGHTS_MAGIC.len())? != WEIGHTS_MAGIC {
        return Err(malformed("bad magic"));
    }
    let count = r.u32()?;
    if count != TENSOR_COUNT {
        return Err(malformed(format!("expected {TENSOR_COUNT} tensors, found {count}")));
    }
    let mut convs = (0..TENSOR_COUNT / 2).map(|_| r.conv()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(malformed("trailing bytes"));
    }
    let hidden = convs[0].out_channels;
    let fixed = hidden + 1 + lookup_channels(DEFAULT_LOOKUP_RADIUS);
    let gate_in = convs[0].in_channels;
    if gate_in <= fixed {
        return Err(malformed(format!("gate input width {gate_in} leaves no feature channels")));
    }
    let dims = GruDims {
        hidden,
        feature_channels: gate_in - fixed,
        head_hidden: convs[3].out_channels,
        lookup_radius: DEFAULT_LOOKUP_RADIUS,
    };
    let mut take = || convs.remove(0);
    let w = GruWeights {
        dims,
        conv_z: take(),
        conv_r: take(),
        conv_h: take(),
        head1: take(),
        head2: take(),
        up1: take(),
        up2: take(),
    };
    w.validate().map_err(|e| malformed(e.to_string()))?;
    Ok(w)
}

pub fn save_weights(w: &GruWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_weights(w)?).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<GruWeights> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}
