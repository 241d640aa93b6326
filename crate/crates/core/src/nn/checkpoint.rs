//! Binary checkpoint container.
//!
//! ```text
//! "FTLCKPT1"                      8 bytes
//! metadata length                 u32 LE
//! metadata                        UTF-8 JSON (architecture, layer specs, seed, epoch)
//! parameter count                 u32 LE
//! per parameter, in declaration order:
//!   rank                          u32 LE
//!   extents                       rank × u64 LE
//!   values                        product(extents) × f64 LE
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Network, NetworkSpec, NnError};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"FTLCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// `"mcn"` or `"rn"`.
    pub architecture: String,
    pub network: NetworkSpec,
    pub seed: u64,
    pub epoch: u64,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

pub fn encode(net: &Network, seed: u64, epoch: u64, extra: BTreeMap<String, String>) -> Vec<u8> {
    let meta = CheckpointMeta {
        architecture: net.spec().name.clone(),
        network: net.spec().clone(),
        seed,
        epoch,
        extra,
    };
    let text = serde_json::to_vec(&meta).expect("metadata serializes");
    let mut out = Vec::with_capacity(16 + text.len() + 8 * net.param_count() as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(&text);
    out.extend_from_slice(&(net.params().len() as u32).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&(p.rank() as u32).to_le_bytes());
        for &d in p.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save(path: impl AsRef<Path>, net: &Network, seed: u64, epoch: u64, extra: BTreeMap<String, String>) -> Result<(), NnError> {
    fs::write(path, encode(net, seed, epoch, extra))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NnError> {
        if self.buf.len() - self.pos < n {
            return Err(NnError::Checkpoint {
                offset: self.pos as u64,
                detail: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn err(&self, detail: impl Into<String>) -> NnError {
        NnError::Checkpoint {
            offset: self.pos as u64,
            detail: detail.into(),
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<(Network, CheckpointMeta), NnError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(NnError::Checkpoint { offset: 0, detail: "bad magic".into() });
    }
    let len = r.u32("metadata length")? as usize;
    let meta_at = r.pos;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(len, "metadata")?).map_err(|e| NnError::Checkpoint {
        offset: meta_at as u64,
        detail: format!("metadata: {e}"),
    })?;
    let count = r.u32("parameter count")? as usize;
    let mut params = Vec::with_capacity(count);
    for i in 0..count {
        let rank = r.u32("parameter rank")? as usize;
        if rank == 0 || rank > 8 {
            return Err(r.err(format!("parameter {i} has implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("parameter extent")? as usize);
        }
        let n: usize = shape.iter().product();
        let payload = r.take(n.checked_mul(8).ok_or_else(|| r.err("extent overflow"))?, "parameter values")?;
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        params.push(Tensor::new(shape, data).map_err(|e| r.err(e.to_string()))?);
    }
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes after last parameter"));
    }
    let net = Network::from_params(meta.network.clone(), params)?;
    Ok((net, meta))
}

pub fn load(path: impl AsRef<Path>) -> Result<(Network, CheckpointMeta), NnError> {
    decode(&fs::read(path)?)
}
