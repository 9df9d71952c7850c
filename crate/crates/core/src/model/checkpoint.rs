//! Binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes   "MVLOCKPT"
//! version      u32       1
//! config       10 × u64  channels height width patch d_model n_heads n_layers
//!                        n_scenes vocab max_caption_len
//!              f64       dropout
//! count        u32       number of tensor blocks
//! per tensor:  u32 name length, UTF-8 name,
//!              u32 rank, rank × u64 dims,
//!              prod(dims) × f64 values
//! ```
//!
//! Tensor blocks appear in parameter-store order. Loading rebuilds the layout
//! from the config and requires every block to match it by name and shape.

use std::io::{Read, Write};
use std::path::Path;

use super::params::init_params;
use super::{Model, ModelConfig, ModelError};
use crate::numerics::{Seed, Tensor};

pub const MAGIC: &[u8; 8] = b"MVLOCKPT";
pub const VERSION: u32 = 1;

pub fn encode(model: &Model) -> Vec<u8> {
    let c = &model.config;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        c.channels,
        c.height,
        c.width,
        c.patch,
        c.d_model,
        c.n_heads,
        c.n_layers,
        c.n_scenes,
        c.vocab,
        c.max_caption_len,
    ] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&c.dropout.to_le_bytes());
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (_, name, t) in model.params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.buf.len() - self.pos < n {
            return Err(ModelError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, ModelError> {
        usize::try_from(self.u64()?).map_err(|_| ModelError::Checkpoint("dimension overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model, ModelError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let config = ModelConfig {
        channels: r.usize()?,
        height: r.usize()?,
        width: r.usize()?,
        patch: r.usize()?,
        d_model: r.usize()?,
        n_heads: r.usize()?,
        n_layers: r.usize()?,
        n_scenes: r.usize()?,
        vocab: r.usize()?,
        max_caption_len: r.usize()?,
        dropout: r.f64()?,
    };
    config.validate()?;
    let (mut params, layout) = init_params(&config, Seed(0));
    let count = r.u32()? as usize;
    if count != params.len() {
        return Err(ModelError::Checkpoint(format!("{count} tensors, layout has {}", params.len())));
    }
    for id in params.ids().collect::<Vec<_>>() {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| ModelError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        if name != params.name(id) {
            return Err(ModelError::Checkpoint(format!("expected tensor {}, found {name}", params.name(id))));
        }
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let t = Tensor::new(shape, data).map_err(|e| ModelError::Checkpoint(format!("{name}: {e}")))?;
        params.replace(id, t)?;
    }
    if r.pos != bytes.len() {
        return Err(ModelError::Checkpoint("trailing bytes".into()));
    }
    Ok(Model::assemble(config, params, layout))
}

pub fn save(model: &Model, path: &Path) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(model))?;
    f.sync_all()
}

pub fn load(path: &Path) -> Result<Model, ModelError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}
