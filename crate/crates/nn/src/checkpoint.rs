//! Named-tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "GRIDCKP1"
//! seed    u64
//! hash    32 bytes (configuration digest)
//! count   u64
//! count x { name_len u32, name utf-8, ndim u32, dims u64 x ndim, values f64 x prod(dims) }
//! ```

use crate::{NnError, Tensor};

pub const MAGIC: &[u8; 8] = b"GRIDCKP1";
const MAX_NAME: usize = 4096;
const MAX_DIMS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub config_hash: [u8; 32],
    pub tensors: Vec<(String, Tensor)>,
}

pub fn encode_checkpoint<'a>(
    seed: u64,
    config_hash: &[u8; 32],
    tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>,
) -> Vec<u8> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(config_hash);
    out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for (name, t) in tensors {
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
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NnError::Checkpoint(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Decode a checkpoint; never panics on malformed input.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let seed = r.u64("seed")?;
    let config_hash: [u8; 32] = r.take(32, "config hash")?.try_into().unwrap();
    let count = r.u64("tensor count")?;
    let mut tensors = Vec::new();
    let mut names = std::collections::BTreeSet::new();
    for i in 0..count {
        let len = r.u32("name length")? as usize;
        if len > MAX_NAME {
            return Err(NnError::Checkpoint(format!("tensor {i}: name of {len} bytes")));
        }
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| NnError::Checkpoint(format!("tensor {i}: name is not UTF-8")))?
            .to_string();
        if !names.insert(name.clone()) {
            return Err(NnError::Checkpoint(format!("duplicate tensor `{name}`")));
        }
        let ndim = r.u32("rank")? as usize;
        if ndim > MAX_DIMS {
            return Err(NnError::Checkpoint(format!("`{name}` has rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut n: usize = 1;
        for _ in 0..ndim {
            let d = usize::try_from(r.u64("dimension")?)
                .map_err(|_| NnError::Checkpoint(format!("`{name}` dimension overflows")))?;
            n = n
                .checked_mul(d)
                .ok_or_else(|| NnError::Checkpoint(format!("`{name}` size overflows")))?;
            shape.push(d);
        }
        if n.checked_mul(8).is_none_or(|b| b > r.remaining()) {
            return Err(NnError::Checkpoint(format!("`{name}` values truncated")));
        }
        let data = r
            .take(n * 8, "values")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, Tensor::new(shape, data)?));
    }
    if r.remaining() != 0 {
        return Err(NnError::Checkpoint(format!("{} trailing bytes", r.remaining())));
    }
    Ok(Checkpoint {
        seed,
        config_hash,
        tensors,
    })
}
