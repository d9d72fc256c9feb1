//! `DFSW` little-endian weight container.
//!
//! ```text
//! "DFSW" | version u32 | L N H P B R M sample_rate (u32 each)
//! count u32 | per tensor: name_len u32, name, rank u32, dims u32…, offset u64
//! payload: f32 row-major, offsets relative to the payload start
//! ```
//!
//! The shared-cell and encoder-bias options are implied by which tensors
//! are present.

use std::path::Path;

use super::write_bytes_atomic;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

pub const WEIGHT_MAGIC: &[u8; 4] = b"DFSW";
pub const WEIGHT_FORMAT_VERSION: u32 = 1;

/// Parameters plus the front-end settings they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub params: ModelParams,
    pub num_taps: u32,
    pub sample_rate: u32,
}

impl WeightFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = &self.params.config;
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHT_MAGIC);
        let put = |out: &mut Vec<u8>, v: u32| out.extend_from_slice(&v.to_le_bytes());
        put(&mut out, WEIGHT_FORMAT_VERSION);
        for v in [
            cfg.frame_len,
            cfg.latent_dim,
            cfg.hidden_dim,
            cfg.partitions,
            cfg.num_blocks,
            cfg.norm_window,
        ] {
            put(&mut out, v as u32);
        }
        put(&mut out, self.num_taps);
        put(&mut out, self.sample_rate);

        let names = self.params.tensor_names();
        let tensors = self.params.tensors();
        put(&mut out, names.len() as u32);
        let mut offset = 0u64;
        for (name, t) in names.iter().zip(&tensors) {
            put(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put(&mut out, t.shape().len() as u32);
            for &d in t.shape() {
                put(&mut out, d as u32);
            }
            out.extend_from_slice(&offset.to_le_bytes());
            offset += 4 * t.len() as u64;
        }
        for t in &tensors {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != WEIGHT_MAGIC {
            return Err(bad("missing DFSW magic"));
        }
        let version = r.u32()?;
        if version != WEIGHT_FORMAT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut block = [0usize; 8];
        for b in &mut block {
            *b = r.u32()? as usize;
        }
        let [l, n, h, p, b, window, num_taps, sample_rate] = block;

        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| bad("tensor name is not UTF-8"))?
                .to_owned();
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let offset = r.u64()?;
            entries.push((name, dims, offset));
        }
        let payload = &bytes[r.pos..];

        let has = |name: &str| entries.iter().any(|(n, _, _)| n == name);
        let config = ModelConfig {
            frame_len: l,
            latent_dim: n,
            hidden_dim: h,
            partitions: p,
            num_blocks: b,
            norm_window: window,
            shared_cells: p > 1 && b > 0 && !has("blocks.0.cells.1.w_input"),
            encoder_bias: has("encoder.bias"),
        };
        config
            .validate()
            .map_err(|e| bad(format!("invalid config block: {e}")))?;
        let mut params = ModelParams::zeros(&config)?;
        let names = params.tensor_names();
        if names.len() != entries.len() {
            return Err(bad(format!("expected {} tensors, found {}", names.len(), entries.len())));
        }
        let mut expected_offset = 0u64;
        for ((expected, tensor), (name, dims, offset)) in
            names.iter().zip(params.tensors_mut()).zip(&entries)
        {
            if expected != name {
                return Err(bad(format!("expected tensor {expected}, found {name}")));
            }
            if tensor.shape() != dims.as_slice() {
                return Err(bad(format!("tensor {name} has shape {dims:?}, expected {:?}", tensor.shape())));
            }
            if *offset != expected_offset {
                return Err(bad(format!("tensor {name} has offset {offset}, expected {expected_offset}")));
            }
            let start = *offset as usize;
            let end = start + 4 * tensor.len();
            let raw = payload.get(start..end).ok_or_else(|| bad(format!("tensor {name} is truncated")))?;
            for (v, chunk) in tensor.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
                let x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
                if !x.is_finite() {
                    return Err(bad(format!("tensor {name} contains non-finite values")));
                }
                *v = x as f64;
            }
            expected_offset = end as u64;
        }
        if payload.len() as u64 != expected_offset {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            params,
            num_taps: num_taps as u32,
            sample_rate: sample_rate as u32,
        })
    }
}

fn bad(reason: impl Into<String>) -> Error {
    Error::format("weight file", reason)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos.saturating_add(n))
            .ok_or_else(|| bad("unexpected end of file"))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_weights(path: impl AsRef<Path>, file: &WeightFile) -> Result<()> {
    write_bytes_atomic(path.as_ref(), &file.to_bytes())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightFile> {
    WeightFile::from_bytes(&std::fs::read(path)?)
}
