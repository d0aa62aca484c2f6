//! LiDAR scan ingestion and spherical range-view projection.
//!
//! Scans are flat little-endian `f32` records `(x, y, z, intensity)`, 16 bytes
//! per point. Label files hold one `u32` per point whose low 16 bits are the
//! semantic id. Projection maps every point to a pixel of an H×W image with
//! five channels `(x, y, z, intensity, range)`; when several points hit the
//! same pixel the nearest one is kept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_map::FeatureMap;

/// Fill value written into every channel of a pixel that received no point.
/// The validity mask is authoritative.
pub const EMPTY_PIXEL: f32 = -1.0;

/// Number of channels in a range image: x, y, z, intensity, range.
pub const RANGE_CHANNELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

impl Point {
    pub fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }

    pub fn range(&self) -> f64 {
        let (x, y, z) = (self.x as f64, self.y as f64, self.z as f64);
        (x * x + y * y + z * z).sqrt()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    /// Rejects the first non-finite point with [`Error::CorruptPoint`].
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::CorruptPoint { index });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.points.len() * 16);
        for p in &self.points {
            for v in [p.x, p.y, p.z, p.intensity] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

pub fn parse_point_cloud(bytes: &[u8]) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(16) {
        return Err(Error::MalformedScan { len: bytes.len() });
    }
    let points = bytes
        .chunks_exact(16)
        .map(|rec| {
            let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap());
            Point::new(f(0), f(1), f(2), f(3))
        })
        .collect();
    PointCloud::new(points)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<u16>,
    outlier: Vec<bool>,
}

impl LabelSet {
    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn outlier_flags(&self) -> &[bool] {
        &self.outlier
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Decodes a label file; `outlier_id` is the semantic id of the outlier class.
pub fn parse_labels(bytes: &[u8], point_count: usize, outlier_id: u16) -> Result<LabelSet> {
    let expected = point_count * 4;
    if bytes.len() != expected {
        return Err(Error::LabelCount {
            bytes: bytes.len(),
            points: point_count,
            expected,
        });
    }
    let labels: Vec<u16> = bytes
        .chunks_exact(4)
        .map(|rec| (u32::from_le_bytes(rec.try_into().unwrap()) & 0xFFFF) as u16)
        .collect();
    let outlier = labels.iter().map(|&l| l == outlier_id).collect();
    Ok(LabelSet { labels, outlier })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub height: usize,
    pub width: usize,
    /// Upper edge of the vertical field of view, degrees.
    pub fov_up: f64,
    /// Lower edge of the vertical field of view, degrees.
    pub fov_down: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 1024,
            fov_up: 3.0,
            fov_down: -25.0,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("projection height and width must be at least 1"));
        }
        if !(self.fov_up.is_finite() && self.fov_down.is_finite()) || self.fov_up <= self.fov_down {
            return Err(Error::invalid(format!(
                "fov_up ({}) must exceed fov_down ({})",
                self.fov_up, self.fov_down
            )));
        }
        Ok(())
    }

    /// Pixel `(row, col)` for a point, or `None` when its range is zero (or
    /// not finite) and the pitch is undefined.
    pub fn pixel_of(&self, p: &Point) -> Option<(usize, usize)> {
        let range = p.range();
        if !(range > 0.0 && range.is_finite()) {
            return None;
        }
        let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
        let yaw = y.atan2(x);
        let pitch = (z / range).clamp(-1.0, 1.0).asin();
        let fov_up = self.fov_up.to_radians();
        let fov_down = self.fov_down.to_radians();
        let fov = fov_up - fov_down;

        let col = (0.5 * (1.0 - yaw / std::f64::consts::PI) * self.width as f64).floor();
        let row = ((1.0 - (pitch - fov_down) / fov) * self.height as f64).floor();
        let col = col.clamp(0.0, (self.width - 1) as f64) as usize;
        let row = row.clamp(0.0, (self.height - 1) as f64) as usize;
        Some((row, col))
    }
}

/// A projected scan. Pixels are indexed `row * width + col`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    height: usize,
    width: usize,
    channels: Vec<f32>,
    valid: Vec<bool>,
    point_index: Vec<Option<u32>>,
    /// Pixel each source point maps to; `None` for skipped zero-range points.
    point_pixel: Vec<Option<u32>>,
    skipped: usize,
}

impl RangeImage {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self, pixel: usize) -> &[f32] {
        &self.channels[pixel * RANGE_CHANNELS..(pixel + 1) * RANGE_CHANNELS]
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, pixel: usize) -> bool {
        self.valid[pixel]
    }

    /// Source point stored at `pixel`.
    pub fn point_index(&self, pixel: usize) -> Option<usize> {
        self.point_index[pixel].map(|i| i as usize)
    }

    /// Pixel that source point `point` projects to (whether or not it won it).
    pub fn pixel_of_point(&self, point: usize) -> Option<usize> {
        self.point_pixel[point].map(|p| p as usize)
    }

    /// Points skipped because their range was zero.
    pub fn skipped_points(&self) -> usize {
        self.skipped
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap::from_parts(
            self.height,
            self.width,
            RANGE_CHANNELS,
            self.channels.clone(),
            self.valid.clone(),
        )
        .expect("range image dimensions are consistent")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub image: RangeImage,
    /// Semantic id of the stored point per pixel, when labels were supplied.
    pub labels: Option<Vec<Option<u16>>>,
}

impl Projection {
    /// Label grid as a D = 1 feature map (invalid where no point landed).
    pub fn label_map(&self) -> Option<FeatureMap> {
        self.labels.as_ref().map(|grid| {
            let values: Vec<Option<f32>> = grid.iter().map(|l| l.map(f32::from)).collect();
            FeatureMap::from_scalars(self.image.height, self.image.width, &values)
                .expect("label grid matches image")
        })
    }
}

pub fn project_spherical(
    cloud: &PointCloud,
    labels: Option<&LabelSet>,
    config: &ProjectionConfig,
) -> Result<Projection> {
    config.validate()?;
    if cloud.is_empty() {
        return Err(Error::invalid("cannot project an empty point cloud"));
    }
    if let Some(labels) = labels {
        if labels.len() != cloud.len() {
            return Err(Error::LabelCount {
                bytes: labels.len() * 4,
                points: cloud.len(),
                expected: cloud.len() * 4,
            });
        }
    }
    u32::try_from(cloud.len()).map_err(|_| Error::invalid("point cloud exceeds u32 indices"))?;

    let pixels = config.height * config.width;
    let mut owner: Vec<Option<u32>> = vec![None; pixels];
    let mut best_range = vec![f64::INFINITY; pixels];
    let mut point_pixel = Vec::with_capacity(cloud.len());
    let mut skipped = 0usize;

    for (i, p) in cloud.points().iter().enumerate() {
        match config.pixel_of(p) {
            Some((row, col)) => {
                let pix = row * config.width + col;
                point_pixel.push(Some(pix as u32));
                let r = p.range();
                if r < best_range[pix] {
                    best_range[pix] = r;
                    owner[pix] = Some(i as u32);
                }
            }
            None => {
                skipped += 1;
                point_pixel.push(None);
            }
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} zero-range points");
    }

    let mut channels = vec![EMPTY_PIXEL; pixels * RANGE_CHANNELS];
    let mut valid = vec![false; pixels];
    for (pix, own) in owner.iter().enumerate() {
        if let Some(i) = own {
            let p = cloud.points()[*i as usize];
            channels[pix * RANGE_CHANNELS..(pix + 1) * RANGE_CHANNELS]
                .copy_from_slice(&[p.x, p.y, p.z, p.intensity, p.range() as f32]);
            valid[pix] = true;
        }
    }
    let label_grid = labels.map(|ls| {
        owner
            .iter()
            .map(|own| own.map(|i| ls.labels()[i as usize]))
            .collect()
    });

    Ok(Projection {
        image: RangeImage {
            height: config.height,
            width: config.width,
            channels,
            valid,
            point_index: owner,
            point_pixel,
            skipped,
        },
        labels: label_grid,
    })
}

/// Carries per-pixel values back to the source points. Occluded points get
/// the value of the pixel they project to; skipped points get `None`.
pub fn back_project<T: Copy>(
    image: &RangeImage,
    height: usize,
    width: usize,
    values: &[T],
) -> Result<Vec<Option<T>>> {
    if height != image.height || width != image.width || values.len() != height * width {
        return Err(Error::shape(format!(
            "value grid {}×{} ({} values) does not match range image {}×{}",
            height,
            width,
            values.len(),
            image.height,
            image.width
        )));
    }
    Ok(image
        .point_pixel
        .iter()
        .map(|pix| pix.map(|p| values[p as usize]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(vals: [f32; 4]) -> Vec<u8> {
        vals.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    #[test]
    fn parse_single_point() {
        let cloud = parse_point_cloud(&record([1.0, 2.0, 3.0, 0.5])).unwrap();
        assert_eq!(cloud.points(), &[Point::new(1.0, 2.0, 3.0, 0.5)]);
    }

    #[test]
    fn parse_empty_and_malformed() {
        assert!(parse_point_cloud(&[]).unwrap().is_empty());
        assert!(matches!(
            parse_point_cloud(&[0u8; 17]),
            Err(Error::MalformedScan { len: 17 })
        ));
    }

    #[test]
    fn parse_rejects_nan_with_index() {
        let mut bytes = record([1.0, 1.0, 1.0, 0.0]);
        bytes.extend(record([0.0, f32::NAN, 0.0, 0.0]));
        assert!(matches!(
            parse_point_cloud(&bytes),
            Err(Error::CorruptPoint { index: 1 })
        ));
    }

    #[test]
    fn labels_mask_low_bits() {
        let ls = parse_labels(&0x0001_0001u32.to_le_bytes(), 1, 0).unwrap();
        assert_eq!(ls.labels(), &[1]);
        assert_eq!(ls.outlier_flags(), &[false]);

        let ls = parse_labels(&0x0007_0001u32.to_le_bytes(), 1, 1).unwrap();
        assert_eq!(ls.outlier_flags(), &[true]);

        assert!(matches!(
            parse_labels(&[0u8; 8], 3, 1),
            Err(Error::LabelCount { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(ProjectionConfig::default().validate().is_ok());
        let bad = ProjectionConfig {
            fov_up: -30.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ProjectionConfig {
            width: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_forward_point() {
        // col = floor(0.5·1024) = 512; row = floor((1 − 25/28)·64) = 6
        let cloud = PointCloud::new(vec![Point::new(10.0, 0.0, 0.0, 0.3)]).unwrap();
        let proj = project_spherical(&cloud, None, &ProjectionConfig::default()).unwrap();
        let img = &proj.image;
        let pix = 6 * 1024 + 512;
        assert!(img.is_valid(pix));
        assert_eq!(img.valid_count(), 1);
        assert_eq!(img.channels(pix), &[10.0, 0.0, 0.0, 0.3, 10.0]);
        assert_eq!(img.channels(0), &[EMPTY_PIXEL; 5]);
        assert_eq!(img.point_index(pix), Some(0));
    }

    #[test]
    fn all_zero_range_yields_empty_image() {
        let cloud = PointCloud::new(vec![Point::new(0.0, 0.0, 0.0, 0.1); 3]).unwrap();
        let proj = project_spherical(&cloud, None, &ProjectionConfig::default()).unwrap();
        assert_eq!(proj.image.valid_count(), 0);
        assert_eq!(proj.image.skipped_points(), 3);
    }

    #[test]
    fn empty_cloud_is_rejected() {
        let cloud = PointCloud::default();
        assert!(project_spherical(&cloud, None, &ProjectionConfig::default()).is_err());
    }

    #[test]
    fn nearest_point_wins_and_occluded_gets_winner_value() {
        let cloud = PointCloud::new(vec![
            Point::new(50.0, 0.0, 0.0, 0.9),
            Point::new(5.0, 0.0, 0.0, 0.1),
        ])
        .unwrap();
        let labels = LabelSet {
            labels: vec![40, 10],
            outlier: vec![false, false],
        };
        let proj =
            project_spherical(&cloud, Some(&labels), &ProjectionConfig::default()).unwrap();
        let img = &proj.image;
        let pix = 6 * 1024 + 512;
        assert_eq!(img.point_index(pix), Some(1));
        assert_eq!(img.channels(pix)[4], 5.0);
        assert_eq!(proj.labels.as_ref().unwrap()[pix], Some(10));

        let ranges: Vec<f32> = (0..64 * 1024)
            .map(|p| img.channels(p)[4])
            .collect();
        let back = back_project(img, 64, 1024, &ranges).unwrap();
        assert_eq!(back, vec![Some(5.0), Some(5.0)]);
    }

    #[test]
    fn back_project_shape_error() {
        let cloud = PointCloud::new(vec![Point::new(1.0, 1.0, 0.0, 0.0)]).unwrap();
        let proj = project_spherical(&cloud, None, &ProjectionConfig::default()).unwrap();
        let grid = vec![0.0f32; 63 * 1024];
        assert!(matches!(
            back_project(&proj.image, 63, 1024, &grid),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn extreme_angles_clamp_in_bounds() {
        let cfg = ProjectionConfig::default();
        for p in [
            Point::new(-1.0, -1e-30, 0.0, 0.0),
            Point::new(-1.0, 0.0, 0.0, 0.0),
            Point::new(0.0, 0.0, 5.0, 0.0),
            Point::new(0.0, 0.0, -5.0, 0.0),
            Point::new(f32::MAX, f32::MAX, f32::MAX, 0.0),
        ] {
            let (r, c) = cfg.pixel_of(&p).unwrap();
            assert!(r < cfg.height && c < cfg.width);
        }
    }
}
