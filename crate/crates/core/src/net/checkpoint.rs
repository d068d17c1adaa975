//! Versioned little-endian binary checkpoint.
//!
//! Layout: magic (8 bytes), version u32, seed u64, input_dim u32,
//! num_classes u32, activation u8, hidden count u32, hidden widths u32 each,
//! parameter count u64, then every parameter as f64 in
//! [`EvidentialNet::parameters`] order.

use std::fs;
use std::path::Path;

use super::{EvidenceActivation, EvidentialNet, NetConfig};
use crate::error::{FamlError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FAMLNET\0";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| FamlError::Config("checkpoint is truncated".into()))?;
        self.pos = end;
        Ok(slice.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
}

impl EvidentialNet {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = &self.config;
        let params = self.parameters();
        let mut out = Vec::with_capacity(48 + 8 * params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&cfg.seed.to_le_bytes());
        out.extend_from_slice(&(cfg.input_dim as u32).to_le_bytes());
        out.extend_from_slice(&(cfg.num_classes as u32).to_le_bytes());
        out.push(cfg.activation.code());
        out.extend_from_slice(&(cfg.hidden_dims.len() as u32).to_le_bytes());
        for h in &cfg.hidden_dims {
            out.extend_from_slice(&(*h as u32).to_le_bytes());
        }
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if &r.take::<8>()? != CHECKPOINT_MAGIC {
            return Err(FamlError::Config("not a network checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(FamlError::Config(format!("unsupported checkpoint version {version}")));
        }
        let seed = r.u64()?;
        let input_dim = r.u32()? as usize;
        let num_classes = r.u32()? as usize;
        let activation = EvidenceActivation::from_code(r.take::<1>()?[0])
            .ok_or_else(|| FamlError::Config("unknown evidence activation code".into()))?;
        let hidden = r.u32()? as usize;
        let hidden_dims = (0..hidden)
            .map(|_| r.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut net = EvidentialNet::zeroed(NetConfig {
            input_dim,
            hidden_dims,
            num_classes,
            seed,
            activation,
        })?;
        let count = r.u64()? as usize;
        if count != net.num_parameters() {
            return Err(FamlError::Config(format!(
                "checkpoint holds {count} parameters, architecture needs {}",
                net.num_parameters()
            )));
        }
        let params = (0..count)
            .map(|_| r.take::<8>().map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(FamlError::Config("trailing bytes after checkpoint".into()));
        }
        net.set_parameters(&params)?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| FamlError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| FamlError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
