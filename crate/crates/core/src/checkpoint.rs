//! Versioned binary checkpoints.
//!
//! All integers little-endian. Layout (version 1):
//!
//! ```text
//! magic     8 bytes  "KWSCKPT\0"
//! version   u32
//! flags     u32      bit 0: stripped for inference, bit 1: optimiser state present
//! step      u64      optimiser steps taken
//! meta      u32 len, UTF-8 TOML: [model], optional [train], corpus_digest
//! count     u32      parameter tensors, in registration order
//! tensor × count:
//!   name    u16 len, UTF-8
//!   rows    u32
//!   cols    u32
//!   data    rows·cols × f64
//! if bit 1: the first and second Adam moments, count tensors each, same
//! order and shapes, data only
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::trainer::TrainConfig;

const MAGIC: &[u8; 8] = b"KWSCKPT\0";
const VERSION: u32 = 1;
const FLAG_STRIPPED: u32 = 1;
const FLAG_ADAM: u32 = 2;

/// First and second moment estimates, one tensor per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn zeros(params: &ParamStore) -> Self {
        let z: Vec<Tensor> = params
            .iter()
            .map(|(_, t)| Tensor::new(t.shape().to_vec(), vec![0.0; t.len()]).expect("valid shape"))
            .collect();
        Self { m: z.clone(), v: z }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub params: ParamStore,
    pub adam: Option<AdamState>,
    pub step: u64,
    pub stripped: bool,
    /// SHA-256 of the training corpus; empty if untrained.
    pub corpus_digest: String,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    corpus_digest: String,
    model: ModelConfig,
    train: Option<TrainConfig>,
}

impl Checkpoint {
    /// Training seed, if this checkpoint came from a run.
    pub fn seed(&self) -> Option<u64> {
        self.train.as_ref().map(|t| t.seed)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = toml::to_string(&Meta {
            corpus_digest: self.corpus_digest.clone(),
            model: self.model.clone(),
            train: self.train.clone(),
        })
        .map_err(|e| Error::Format(e.to_string()))?;
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&VERSION.to_le_bytes());
        let mut flags = 0;
        if self.stripped {
            flags |= FLAG_STRIPPED;
        }
        if self.adam.is_some() {
            flags |= FLAG_ADAM;
        }
        w.extend_from_slice(&flags.to_le_bytes());
        w.extend_from_slice(&self.step.to_le_bytes());
        w.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        w.extend_from_slice(meta.as_bytes());
        w.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            w.extend_from_slice(&(name.len() as u16).to_le_bytes());
            w.extend_from_slice(name.as_bytes());
            w.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            w.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            put_data(&mut w, t);
        }
        if let Some(adam) = &self.adam {
            for t in adam.m.iter().chain(&adam.v) {
                put_data(&mut w, t);
            }
        }
        Ok(w)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader(bytes);
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let flags = r.u32()?;
        let step = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let meta_len = r.u32()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| Error::Format("metadata is not utf-8".into()))?;
        let meta: Meta = toml::from_str(meta).map_err(|e| Error::Format(e.to_string()))?;

        let count = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Format("tensor name is not utf-8".into()))?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            params.add(name, r.tensor(rows, cols)?);
        }
        let adam = if flags & FLAG_ADAM != 0 {
            let shapes: Vec<(usize, usize)> = params.iter().map(|(_, t)| (t.rows(), t.cols())).collect();
            let mut read_all = || -> Result<Vec<Tensor>> {
                shapes.iter().map(|&(rr, c)| r.tensor(rr, c)).collect()
            };
            let m = read_all()?;
            let v = read_all()?;
            Some(AdamState { m, v })
        } else {
            None
        };
        if !r.0.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", r.0.len())));
        }
        Ok(Self {
            model: meta.model,
            train: meta.train,
            params,
            adam,
            step,
            stripped: flags & FLAG_STRIPPED != 0,
            corpus_digest: meta.corpus_digest,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_data(w: &mut Vec<u8>, t: &Tensor) {
    for x in t.data() {
        w.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn tensor(&mut self, rows: usize, cols: usize) -> Result<Tensor> {
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Format("tensor too large".into()))?;
        let data = self
            .take(n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Tensor::matrix(rows, cols, data))
    }
}
