use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{label_grid_path, list_files, read_bytes, require_dir, write_bytes, write_json, RunConfig, RunStatus};
use crate::error::Result;
use crate::rangeview::{parse_labels, parse_point_cloud, project_spherical};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub stem: String,
    /// Outputs relative to the output directory.
    pub range_image: Option<String>,
    pub label_grid: Option<String>,
    pub points: usize,
    pub valid_pixels: usize,
    /// Zero-range points.
    pub skipped_points: usize,
    /// Points that lost their pixel to a nearer point.
    pub occluded_points: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectManifest {
    pub scans: Vec<ScanEntry>,
    pub failed: usize,
}

impl ProjectManifest {
    pub fn status(&self) -> RunStatus {
        if self.failed == 0 {
            RunStatus::Success
        } else {
            RunStatus::PartialFailure
        }
    }
}

/// Projects every `<scan_dir>/<stem>.bin` (with `<label_dir>/<stem>.label`
/// when a label directory is set) into `<out>/range/`. Per-scan failures are
/// recorded in `<out>/range/manifest.json`.
pub fn cmd_project(cfg: &RunConfig) -> Result<ProjectManifest> {
    let scan_dir = require_dir(&cfg.paths.scan_dir, "scan_dir")?;
    let label_dir = match cfg.paths.label_dir {
        Some(_) => Some(require_dir(&cfg.paths.label_dir, "label_dir")?),
        None => None,
    };
    let scans = list_files(scan_dir, ".bin", &[])?;
    let range_dir = cfg.paths.output_dir.join("range");
    std::fs::create_dir_all(&range_dir).map_err(|e| crate::Error::io(&range_dir, e))?;

    let entries: Vec<ScanEntry> = scans
        .par_iter()
        .map(|(stem, path)| {
            project_one(cfg, stem, path, label_dir, &range_dir).unwrap_or_else(|e| {
                warn!("{stem}: {e}");
                ScanEntry {
                    stem: stem.clone(),
                    range_image: None,
                    label_grid: None,
                    points: 0,
                    valid_pixels: 0,
                    skipped_points: 0,
                    occluded_points: 0,
                    error: Some(e.to_string()),
                }
            })
        })
        .collect();
    let manifest = ProjectManifest {
        failed: entries.iter().filter(|e| e.error.is_some()).count(),
        scans: entries,
    };
    write_json(&range_dir.join("manifest.json"), &manifest)?;
    info!("projected {} scans, {} failed", manifest.scans.len(), manifest.failed);
    Ok(manifest)
}

fn project_one(
    cfg: &RunConfig,
    stem: &str,
    path: &Path,
    label_dir: Option<&Path>,
    range_dir: &Path,
) -> Result<ScanEntry> {
    let cloud = parse_point_cloud(&read_bytes(path)?)?;
    let labels = match label_dir {
        Some(dir) => {
            let bytes = read_bytes(&dir.join(format!("{stem}.label")))?;
            Some(parse_labels(&bytes, cloud.len(), cfg.class_map.outlier)?)
        }
        None => None,
    };
    let projection = project_spherical(&cloud, labels.as_ref(), &cfg.projection)?;
    let image = &projection.image;

    let image_name = format!("{stem}.fmap");
    write_bytes(&range_dir.join(&image_name), &image.to_feature_map().to_bytes()?)?;
    let label_grid = match projection.label_map() {
        Some(grid) => {
            let path = label_grid_path(range_dir, stem);
            write_bytes(&path, &grid.to_bytes()?)?;
            Some(format!("range/{stem}.labels.fmap"))
        }
        None => None,
    };
    let valid = image.valid_count();
    Ok(ScanEntry {
        stem: stem.to_string(),
        range_image: Some(format!("range/{image_name}")),
        label_grid,
        points: cloud.len(),
        valid_pixels: valid,
        skipped_points: image.skipped_points(),
        occluded_points: cloud.len() - image.skipped_points() - valid,
        error: None,
    })
}
