//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   b"SUMMCKPT"
//! version    u32       1
//! header_len u64       length of the JSON header in bytes
//! header     JSON      CheckpointHeader (keys in a fixed order)
//! params     f64 LE    every tensor's data, in header order
//! moments    f64 LE    optional: Adam first moments, then second moments,
//!                      tensor by tensor in header order
//! ```
//!
//! The header names every tensor with its shape, so a file can be inspected
//! without knowing which model produced it.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::OptimState;
use super::params::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SUMMCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub vocab: Option<Vec<String>>,
    pub tensors: Vec<TensorEntry>,
    pub optimizer: Option<OptimState>,
    pub meta: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub vocab: Option<Vec<String>>,
    pub params: ParamSet,
    pub optimizer: Option<OptimState>,
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = CheckpointHeader {
            kind: self.kind.clone(),
            config_hash: self.config_hash.clone(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            tensors: self
                .params
                .iter()
                .map(|(_, name, t)| TensorEntry {
                    name: name.to_string(),
                    rows: t.rows,
                    cols: t.cols,
                    trainable: t.trainable,
                })
                .collect(),
            optimizer: self.optimizer.clone(),
            meta: self.meta.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(header.len() + 8 * self.params.num_scalars() + 32);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, _, t) in self.params.iter() {
            write_f64s(&mut out, &t.data);
        }
        if let Some(opt) = &self.optimizer {
            for m in &opt.m {
                write_f64s(&mut out, m);
            }
            for v in &opt.v {
                write_f64s(&mut out, v);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(take::<4>(&mut r)?);
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(take::<8>(&mut r)?) as usize;
        if r.len() < header_len {
            return Err(bad("truncated header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&r[..header_len])?;
        r = &r[header_len..];

        let mut params = ParamSet::new();
        for e in &header.tensors {
            let data = read_f64s(&mut r, e.rows * e.cols)?;
            params.insert_tensor(
                &e.name,
                Tensor {
                    rows: e.rows,
                    cols: e.cols,
                    data,
                    trainable: e.trainable,
                },
            )?;
        }
        let optimizer = match header.optimizer {
            Some(mut opt) => {
                opt.m = header
                    .tensors
                    .iter()
                    .map(|e| read_f64s(&mut r, e.rows * e.cols))
                    .collect::<Result<_>>()?;
                opt.v = header
                    .tensors
                    .iter()
                    .map(|e| read_f64s(&mut r, e.rows * e.cols))
                    .collect::<Result<_>>()?;
                Some(opt)
            }
            None => None,
        };
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            kind: header.kind,
            config_hash: header.config_hash,
            config: header.config,
            vocab: header.vocab,
            params,
            optimizer,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Refuses a checkpoint trained under a different config unless
    /// `allow_mismatch` is set.
    pub fn check_config(&self, current_hash: &str, allow_mismatch: bool) -> Result<()> {
        if self.config_hash != current_hash && !allow_mismatch {
            return Err(Error::ConfigMismatch {
                checkpoint: self.config_hash.clone(),
                current: current_hash.to_string(),
            });
        }
        Ok(())
    }
}

fn bad(msg: &str) -> Error {
    Error::Checkpoint(msg.to_string())
}

fn take<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|_| bad("truncated"))?;
    Ok(buf)
}

fn write_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn read_f64s(r: &mut &[u8], n: usize) -> Result<Vec<f64>> {
    if r.len() < 8 * n {
        return Err(bad("truncated tensor data"));
    }
    let (head, tail) = r.split_at(8 * n);
    *r = tail;
    Ok(head
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}
