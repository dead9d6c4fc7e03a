//! Parameter checkpoints.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "FRLCKPT1"
//! state_dim    u32
//! contexts     u32
//! n_hidden     u32
//! hidden[i]    u32 × n_hidden
//! activation   u8       (0 = tanh)
//! n_values     u64
//! values       f64 × n_values
//! ```
//!
//! The JSON form carries the same header fields next to a `values` array.
//! Files ending in `.json` use the JSON form, everything else the binary form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Architecture, ParamVector};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FRLCKPT1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonCheckpoint {
    state_dim: usize,
    context_count: usize,
    hidden_dims: Vec<usize>,
    activation: Activation,
    values: Vec<f64>,
}

pub fn to_bytes(p: &ParamVector) -> Vec<u8> {
    let a = p.arch();
    let mut out = Vec::with_capacity(40 + 8 * p.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(a.state_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(a.context_count() as u32).to_le_bytes());
    out.extend_from_slice(&(a.hidden_dims().len() as u32).to_le_bytes());
    for &h in a.hidden_dims() {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    out.push(a.activation().tag());
    out.extend_from_slice(&(p.len() as u64).to_le_bytes());
    for v in p.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ParamVector> {
    let mut r = Reader { buf: bytes };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let state_dim = r.u32()?;
    let contexts = r.u32()?;
    let n_hidden = r.u32()?;
    let hidden = (0..n_hidden).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let tag = r.take(1)?[0];
    Activation::from_tag(tag).ok_or_else(|| Error::Checkpoint(format!("unknown activation tag {tag}")))?;
    let n = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
    let values = r
        .take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if !r.buf.is_empty() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let arch = Architecture::new(state_dim, contexts, hidden)?;
    ParamVector::from_values(arch, values)
}

pub fn to_json(p: &ParamVector) -> Result<String> {
    let a = p.arch();
    Ok(serde_json::to_string(&JsonCheckpoint {
        state_dim: a.state_dim(),
        context_count: a.context_count(),
        hidden_dims: a.hidden_dims().to_vec(),
        activation: a.activation(),
        values: p.values().to_vec(),
    })?)
}

pub fn from_json(s: &str) -> Result<ParamVector> {
    let c: JsonCheckpoint = serde_json::from_str(s)?;
    let arch = Architecture::new(c.state_dim, c.context_count, c.hidden_dims)?;
    ParamVector::from_values(arch, c.values)
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

pub fn save(p: &ParamVector, path: &Path) -> Result<()> {
    let bytes = if is_json(path) {
        to_json(p)?.into_bytes()
    } else {
        to_bytes(p)
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ParamVector> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if is_json(path) {
        let s = std::str::from_utf8(&bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        from_json(s)
    } else {
        from_bytes(&bytes)
    }
}
