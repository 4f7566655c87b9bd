//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "CARRYCKP"
//! version      u32       1
//! meta_len     u64
//! meta         meta_len bytes of UTF-8 JSON (model config, candidate
//!              config, schema catalog, OOV policy)
//! label_hash   32 bytes  SHA-256 of the label-embedding file
//! n_tensors    u32
//! per tensor:  name_len u32, name bytes, rows u32, cols u32,
//!              rows·cols f64 values, row-major, IEEE-754 little-endian
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CarryoverModel, Matrix, ModelConfig, Params};
use crate::candidates::CandidateConfig;
use crate::dialog::SchemaCatalog;
use crate::embeddings::OovPolicy;
use crate::error::{Error, Result};
use crate::util;

pub const MAGIC: &[u8; 8] = b"CARRYCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub candidates: CandidateConfig,
    pub catalog: SchemaCatalog,
    pub oov_policy: OovPolicy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: CarryoverModel,
    pub candidates: CandidateConfig,
    pub catalog: SchemaCatalog,
    pub oov_policy: OovPolicy,
    pub label_hash: [u8; 32],
}

impl Checkpoint {
    pub fn label_hash_hex(&self) -> String {
        hex::encode(self.label_hash)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = CheckpointMeta {
            model: self.model.config.clone(),
            candidates: self.candidates.clone(),
            catalog: self.catalog.clone(),
            oov_policy: self.oov_policy,
        };
        let meta = serde_json::to_vec(&meta).expect("metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&self.label_hash);
        let tensors = self.model.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for x in t.as_slice() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let meta_len = r.u64()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let mut label_hash = [0u8; 32];
        label_hash.copy_from_slice(r.take(32)?);
        let mut params = Params::zeros(&meta.model);
        let n = r.u32()? as usize;
        let expected = params.tensors().len();
        if n != expected {
            return Err(Error::Checkpoint(format!("{n} tensors, expected {expected}")));
        }
        for (want_name, slot) in params.tensors_mut() {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            if name != want_name {
                return Err(Error::Checkpoint(format!("tensor {name}, expected {want_name}")));
            }
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            if (rows, cols) != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    (rows, cols),
                    slot.shape()
                )));
            }
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
            }
            *slot = Matrix::from_vec(rows, cols, data);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint {
            model: CarryoverModel::from_params(meta.model, params)?,
            candidates: meta.candidates,
            catalog: meta.catalog,
            oov_policy: meta.oov_policy,
            label_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_bytes(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Hash of a label-embedding file as stored in checkpoints.
pub fn label_file_hash(path: &Path) -> Result<[u8; 32]> {
    let hex = util::sha256_file(path)?;
    let mut out = [0u8; 32];
    hex::decode_to_slice(hex, &mut out).expect("sha256 hex");
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = ModelConfig {
            embedding_dim: 3,
            recurrent_hidden: 2,
            decoder_hidden: 4,
            context_window: 2,
            seed: 11,
            ..Default::default()
        };
        Checkpoint {
            model: CarryoverModel::new(config).unwrap(),
            candidates: CandidateConfig { beta: 0.1 + 0.2, ..Default::default() },
            catalog: SchemaCatalog::default(),
            oov_policy: OovPolicy::MeanVector,
            label_hash: [7; 32],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }
}
