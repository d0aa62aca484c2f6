//! `NIGB` container: magic, u16 version, C/K/D as u32, then every cell's
//! (μ, κ, α, β) in (class, component, dimension) order, then the (class,
//! component) weights. All values little-endian f64.

use std::path::Path;

use super::{NigParams, NigPosteriorBank};
use crate::codec::{dim_u32, ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const NIGB_MAGIC: &[u8; 4] = b"NIGB";
pub const NIGB_VERSION: u16 = 1;

impl NigPosteriorBank {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::with_capacity(18 + (self.cells.len() * 4 + self.weights.len()) * 8);
        w.magic(NIGB_MAGIC);
        w.u16(NIGB_VERSION);
        w.u32(dim_u32(self.classes, "C")?);
        w.u32(dim_u32(self.components, "K")?);
        w.u32(dim_u32(self.dim, "D")?);
        for c in &self.cells {
            w.f64s(&[c.mu, c.kappa, c.alpha, c.beta]);
        }
        w.f64s(&self.weights);
        Ok(w.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(NIGB_MAGIC)?;
        let version = r.u16()?;
        if version != NIGB_VERSION {
            return Err(Error::Format(format!("unsupported NIGB version {version}")));
        }
        let c = r.u32()? as usize;
        let k = r.u32()? as usize;
        let d = r.u32()? as usize;
        let n_cells = c
            .checked_mul(k)
            .and_then(|ck| ck.checked_mul(d))
            .ok_or_else(|| Error::Format("declared size overflows".into()))?;
        let expected = n_cells
            .checked_mul(4)
            .and_then(|v| v.checked_add(c * k))
            .and_then(|v| v.checked_mul(8))
            .and_then(|v| v.checked_add(18))
            .ok_or_else(|| Error::Format("declared size overflows".into()))?;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "NIGB C={c} K={k} D={d} needs {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let raw = r.f64_vec(n_cells * 4)?;
        let cells = raw
            .chunks_exact(4)
            .map(|v| NigParams { mu: v[0], kappa: v[1], alpha: v[2], beta: v[3] })
            .collect();
        let weights = r.f64_vec(c * k)?;
        r.finish()?;
        NigPosteriorBank::from_parts(c, k, d, cells, weights).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }
}
