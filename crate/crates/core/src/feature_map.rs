//! H×W grids of D-dimensional `f32` vectors with a validity mask, and the
//! `FMAP` container they are stored in.
//!
//! Layout (little-endian):
//! - magic `b"FMAP"`
//! - version: u16
//! - H, W, D: u32 each
//! - payload: H·W·D f32, row-major, dimension-fastest
//! - validity: H·W bytes, each 0 or 1
//!
//! The same container carries feature maps, range images (D = 5), label
//! grids and per-pixel score channels (D = 1).

use std::path::Path;

use crate::codec::{dim_u32, ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const FMAP_MAGIC: &[u8; 4] = b"FMAP";
pub const FMAP_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f32>,
    valid: Vec<bool>,
}

impl FeatureMap {
    /// All-invalid map filled with zeros.
    pub fn empty(height: usize, width: usize, dim: usize) -> Self {
        Self {
            height,
            width,
            dim,
            data: vec![0.0; height * width * dim],
            valid: vec![false; height * width],
        }
    }

    pub fn from_parts(
        height: usize,
        width: usize,
        dim: usize,
        data: Vec<f32>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let pixels = height
            .checked_mul(width)
            .ok_or_else(|| Error::shape("H·W overflows"))?;
        if dim == 0 {
            return Err(Error::shape("feature dimension must be at least 1"));
        }
        if data.len() != pixels * dim {
            return Err(Error::shape(format!(
                "payload has {} values, expected {}×{}×{}",
                data.len(),
                height,
                width,
                dim
            )));
        }
        if valid.len() != pixels {
            return Err(Error::shape(format!(
                "validity mask has {} entries, expected {}",
                valid.len(),
                pixels
            )));
        }
        Ok(Self {
            height,
            width,
            dim,
            data,
            valid,
        })
    }

    /// A D = 1 grid from per-pixel optional values; `None` marks invalid.
    pub fn from_scalars(height: usize, width: usize, values: &[Option<f32>]) -> Result<Self> {
        let data = values.iter().map(|v| v.unwrap_or(0.0)).collect();
        let valid = values.iter().map(Option::is_some).collect();
        Self::from_parts(height, width, 1, data, valid)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, pixel: usize) -> bool {
        self.valid[pixel]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Feature vector at flat pixel index `row * W + col`.
    pub fn pixel(&self, pixel: usize) -> &[f32] {
        &self.data[pixel * self.dim..(pixel + 1) * self.dim]
    }

    pub fn set_pixel(&mut self, pixel: usize, values: &[f32], valid: bool) {
        assert_eq!(values.len(), self.dim, "pixel dimension");
        self.data[pixel * self.dim..(pixel + 1) * self.dim].copy_from_slice(values);
        self.valid[pixel] = valid;
    }

    /// Scalar view for D = 1 maps; `None` at invalid pixels.
    pub fn scalars(&self) -> Result<Vec<Option<f32>>> {
        if self.dim != 1 {
            return Err(Error::shape(format!("expected D = 1 grid, got D = {}", self.dim)));
        }
        Ok(self
            .data
            .iter()
            .zip(&self.valid)
            .map(|(&v, &ok)| ok.then_some(v))
            .collect())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::with_capacity(18 + self.data.len() * 4 + self.valid.len());
        w.magic(FMAP_MAGIC);
        w.u16(FMAP_VERSION);
        w.u32(dim_u32(self.height, "H")?);
        w.u32(dim_u32(self.width, "W")?);
        w.u32(dim_u32(self.dim, "D")?);
        w.f32s(&self.data);
        let mask: Vec<u8> = self.valid.iter().map(|&v| v as u8).collect();
        w.raw(&mask);
        Ok(w.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(FMAP_MAGIC)?;
        let version = r.u16()?;
        if version != FMAP_VERSION {
            return Err(Error::Format(format!("unsupported FMAP version {version}")));
        }
        let height = r.u32()? as usize;
        let width = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let pixels = height
            .checked_mul(width)
            .ok_or_else(|| Error::Format("H·W overflows".into()))?;
        let values = pixels
            .checked_mul(dim)
            .ok_or_else(|| Error::Format("H·W·D overflows".into()))?;
        let expected = pixels
            .checked_mul(4 * dim + 1)
            .and_then(|n| n.checked_add(18))
            .ok_or_else(|| Error::Format("declared size overflows".into()))?;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "declared {height}×{width}×{dim} needs {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let data = r.f32_vec(values)?;
        let valid = r
            .bytes(pixels)?
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Format(format!("validity byte {other} is not 0/1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Self::from_parts(height, width, dim, data, valid).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }
}
