use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{label_grid_path, list_files, read_label_grid, require_dir, write_bytes, write_json, LabelRole, RunConfig};
use crate::bayes::{build_bank, NigParams};
use crate::error::{Error, Result};
use crate::gmm::{fit_classes, ClassFitSummary, EmConfig};
use crate::FeatureMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub files: usize,
    pub feature_dim: usize,
    pub components: usize,
    pub classes: Vec<ClassFitSummary>,
    /// Valid pixels left out of training.
    pub outlier_pixels: usize,
    pub ignored_pixels: usize,
    pub prior: NigParams,
    pub em: EmConfig,
}

/// Loads `<feature_dir>/<stem>.fmap` with its label grid for every stem.
pub(super) fn load_pairs(cfg: &RunConfig) -> Result<Vec<(String, FeatureMap, FeatureMap)>> {
    let feature_dir = require_dir(&cfg.paths.feature_dir, "feature_dir")?;
    let grid_dir = cfg.paths.grid_dir();
    list_files(feature_dir, ".fmap", &[".labels.fmap"])?
        .par_iter()
        .map(|(stem, path)| {
            let features = FeatureMap::read(path)?;
            let grid = load_grid(&grid_dir, stem, &features)?;
            Ok((stem.clone(), features, grid))
        })
        .collect()
}

pub(super) fn load_grid(grid_dir: &Path, stem: &str, like: &FeatureMap) -> Result<FeatureMap> {
    let path = label_grid_path(grid_dir, stem);
    if !path.is_file() {
        return Err(Error::Config(format!("missing label grid {}", path.display())));
    }
    let grid = read_label_grid(&path)?;
    if grid.height() != like.height() || grid.width() != like.width() {
        return Err(Error::shape(format!(
            "{stem}: label grid is {}x{}, map is {}x{}",
            grid.height(),
            grid.width(),
            like.height(),
            like.width()
        )));
    }
    Ok(grid)
}

/// Role of every pixel valid in both maps.
pub(super) fn pixel_roles(cfg: &RunConfig, features: &FeatureMap, grid: &FeatureMap) -> Vec<Option<LabelRole>> {
    (0..features.pixel_count())
        .map(|p| {
            (features.is_valid(p) && grid.is_valid(p)).then(|| cfg.class_map.role(grid.pixel(p)[0] as u16))
        })
        .collect()
}

/// Pools training pixels per class across all feature files, fits one GMM
/// per class and the posterior bank, and writes the model, the bank and
/// `fit_report.json`.
pub fn cmd_fit(cfg: &RunConfig) -> Result<FitReport> {
    let classes = cfg.model.classes;
    cfg.class_map.validate(classes)?;
    let dim = cfg.model.feature_dim;
    let pairs = load_pairs(cfg)?;

    let mut per_class = vec![Vec::new(); classes];
    let (mut outlier_pixels, mut ignored_pixels) = (0, 0);
    for (stem, features, grid) in &pairs {
        if features.dim() != dim {
            return Err(Error::shape(format!(
                "{stem}: features have D = {}, model expects {dim}",
                features.dim()
            )));
        }
        for (p, role) in pixel_roles(cfg, features, grid).into_iter().enumerate() {
            match role {
                Some(LabelRole::Train(c)) => {
                    per_class[c as usize].extend(features.pixel(p).iter().map(|&v| v as f64));
                }
                Some(LabelRole::Outlier) => outlier_pixels += 1,
                Some(LabelRole::Ignore) => ignored_pixels += 1,
                None => {}
            }
        }
    }

    let em = EmConfig {
        seed: cfg.ensemble.seed,
        ..cfg.em
    };
    let fit = fit_classes(&per_class, dim, cfg.model.components, &em)?;
    let bank = build_bank(&fit.model, &fit.stats, &cfg.prior)?;
    write_bytes(&cfg.paths.model(), &fit.model.to_bytes()?)?;
    write_bytes(&cfg.paths.bank(), &bank.to_bytes()?)?;

    let report = FitReport {
        files: pairs.len(),
        feature_dim: dim,
        components: cfg.model.components,
        classes: fit.summaries,
        outlier_pixels,
        ignored_pixels,
        prior: cfg.prior,
        em,
    };
    write_json(&cfg.paths.output_dir.join("fit_report.json"), &report)?;
    info!("fitted {classes} classes on {} files", report.files);
    Ok(report)
}
