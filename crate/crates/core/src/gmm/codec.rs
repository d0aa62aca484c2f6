//! `GMMC` container: magic, u16 version, C/K/D as u32, then per class the
//! weights (K), means (K×D) and variances (K×D) as little-endian f64.

use std::path::Path;

use super::{ClassGmm, GmmClassifier};
use crate::codec::{dim_u32, ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const GMMC_MAGIC: &[u8; 4] = b"GMMC";
pub const GMMC_VERSION: u16 = 1;

impl GmmClassifier {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (c, k, d) = (self.num_classes(), self.components, self.dim);
        let mut w = ByteWriter::with_capacity(18 + c * k * (1 + 2 * d) * 8);
        w.magic(GMMC_MAGIC);
        w.u16(GMMC_VERSION);
        w.u32(dim_u32(c, "C")?);
        w.u32(dim_u32(k, "K")?);
        w.u32(dim_u32(d, "D")?);
        for g in &self.classes {
            w.f64s(g.weights());
            w.f64s(g.means());
            w.f64s(g.variances());
        }
        Ok(w.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(GMMC_MAGIC)?;
        let version = r.u16()?;
        if version != GMMC_VERSION {
            return Err(Error::Format(format!("unsupported GMMC version {version}")));
        }
        let c = r.u32()? as usize;
        let k = r.u32()? as usize;
        let d = r.u32()? as usize;
        let per_class = k
            .checked_mul(d)
            .and_then(|kd| kd.checked_mul(2))
            .and_then(|v| v.checked_add(k))
            .ok_or_else(|| Error::Format("declared size overflows".into()))?;
        let expected = c
            .checked_mul(per_class * 8)
            .and_then(|v| v.checked_add(18))
            .ok_or_else(|| Error::Format("declared size overflows".into()))?;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "GMMC C={c} K={k} D={d} needs {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let mut classes = Vec::with_capacity(c);
        for class in 0..c {
            let weights = r.f64_vec(k)?;
            let means = r.f64_vec(k * d)?;
            let variances = r.f64_vec(k * d)?;
            classes.push(
                ClassGmm::new(class as u32, weights, means, variances)
                    .map_err(|e| Error::Format(format!("class {class}: {e}")))?,
            );
        }
        r.finish()?;
        GmmClassifier::new(classes)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }
}
