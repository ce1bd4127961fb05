//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    4 bytes  "LFCK"
//! version  u32
//! cfg_len  u32      then cfg_len bytes of JSON (model config plus free-form extra)
//! count    u32      number of blobs
//! per blob:
//!   name_len u16, name bytes (UTF-8)
//!   dtype    u8     1 = f64
//!   len      u64    element count
//!   data     len × 8 bytes, f64 little-endian
//! ```
//!
//! Blobs follow the model's parameter layout in order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ToyModel};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LFCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    #[serde(default)]
    extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    /// Echo of the run configuration, stored verbatim.
    pub extra: serde_json::Value,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let model = ToyModel::new(self.model.clone())?;
        if model.num_params() != self.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "{} parameters for a layout of {}",
                self.params.len(),
                model.num_params()
            )));
        }
        let header = Header { model: self.model.clone(), extra: self.extra.clone() };
        let cfg = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + cfg.len() + self.params.len() * 8 + 64 * model.layout().entries().len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(&cfg);
        out.extend_from_slice(&(model.layout().entries().len() as u32).to_le_bytes());
        for (name, r) in model.layout().entries() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F64);
            out.extend_from_slice(&(r.len() as u64).to_le_bytes());
            for v in &self.params[r.clone()] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Checkpoint, ModelError> {
        let bad = |m: &str| ModelError::Checkpoint(m.to_string());
        let mut magic = [0u8; 4];
        read_exact(&mut bytes, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u32(&mut bytes)?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        let cfg_len = read_u32(&mut bytes)? as usize;
        let mut cfg = vec![0u8; cfg_len];
        read_exact(&mut bytes, &mut cfg)?;
        let header: Header = serde_json::from_slice(&cfg).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let model = ToyModel::new(header.model.clone())?;
        let count = read_u32(&mut bytes)? as usize;
        if count != model.layout().entries().len() {
            return Err(ModelError::Checkpoint(format!(
                "{count} blobs, config implies {}",
                model.layout().entries().len()
            )));
        }
        let mut params = vec![0.0; model.num_params()];
        for (name, r) in model.layout().entries() {
            let mut nl = [0u8; 2];
            read_exact(&mut bytes, &mut nl)?;
            let mut nb = vec![0u8; u16::from_le_bytes(nl) as usize];
            read_exact(&mut bytes, &mut nb)?;
            if nb != name.as_bytes() {
                return Err(ModelError::Checkpoint(format!(
                    "blob `{}` where `{name}` was expected",
                    String::from_utf8_lossy(&nb)
                )));
            }
            let mut dt = [0u8; 1];
            read_exact(&mut bytes, &mut dt)?;
            if dt[0] != DTYPE_F64 {
                return Err(ModelError::Checkpoint(format!("blob `{name}` has dtype {}", dt[0])));
            }
            let mut ln = [0u8; 8];
            read_exact(&mut bytes, &mut ln)?;
            if u64::from_le_bytes(ln) as usize != r.len() {
                return Err(ModelError::Checkpoint(format!("blob `{name}` has the wrong length")));
            }
            for v in &mut params[r.clone()] {
                let mut b = [0u8; 8];
                read_exact(&mut bytes, &mut b)?;
                *v = f64::from_le_bytes(b);
            }
        }
        if !bytes.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint { model: header.model, extra: header.extra, params })
    }
}

fn read_exact(src: &mut &[u8], buf: &mut [u8]) -> Result<(), ModelError> {
    src.read_exact(buf).map_err(|_| ModelError::Checkpoint("truncated file".into()))
}

fn read_u32(src: &mut &[u8]) -> Result<u32, ModelError> {
    let mut b = [0u8; 4];
    read_exact(src, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), ModelError> {
    let bytes = ck.to_bytes()?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let bytes = std::fs::read(path)?;
    Checkpoint::from_bytes(&bytes)
}
