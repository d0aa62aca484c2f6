use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::{list_files, read_bytes, require_dir, write_bytes, write_json, RunConfig};
use crate::bayes::{sample_ensemble, NigPosteriorBank};
use crate::ensemble::{score_feature_map, ScoreChannel};
use crate::error::{Error, Result};
use crate::gmm::GmmClassifier;
use crate::metrics::{percentile_threshold, ScoreHistogram};
use crate::FeatureMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFile {
    pub stem: String,
    pub valid_pixels: usize,
    pub flagged: usize,
    /// Set in per-scan mode.
    pub threshold: Option<f64>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreManifest {
    pub ensemble_size: usize,
    pub seed: u64,
    pub top_fraction: f64,
    pub per_scan: bool,
    /// Run-level threshold on the epistemic channel; `None` in per-scan mode
    /// or when no pixel is valid.
    pub threshold: Option<f64>,
    pub valid_pixels: usize,
    pub flagged: usize,
    pub channels: Vec<String>,
    pub files: Vec<ScoredFile>,
}

pub(super) fn channel_path(score_dir: &Path, stem: &str, suffix: &str) -> PathBuf {
    score_dir.join(format!("{stem}.{suffix}.fmap"))
}

/// Samples the ensemble once, writes one map per score channel plus the
/// majority-vote prediction for every feature file, then flags the top
/// fraction of epistemic scores (over the whole run, or per scan) and writes
/// the OOD masks. Thresholds use the scores as stored on disk.
pub fn cmd_score(cfg: &RunConfig) -> Result<ScoreManifest> {
    let feature_dir = require_dir(&cfg.paths.feature_dir, "feature_dir")?;
    let model = GmmClassifier::from_bytes(&read_bytes(&cfg.paths.model())?)?;
    let bank = NigPosteriorBank::from_bytes(&read_bytes(&cfg.paths.bank())?)?;
    if (bank.num_classes(), bank.components(), bank.dim()) != (model.num_classes(), model.components(), model.dim()) {
        return Err(Error::shape("model and bank shapes differ"));
    }
    let ensemble = sample_ensemble(&bank, cfg.ensemble.n_samples, cfg.ensemble.seed)?;
    let score_dir = cfg.paths.score_dir();
    let top = cfg.threshold.top_fraction;

    let mut files = Vec::new();
    let mut histogram = ScoreHistogram::new();
    for (stem, path) in list_files(feature_dir, ".fmap", &[".labels.fmap"])? {
        let features = FeatureMap::read(&path)?;
        let map = score_feature_map(&features, &model, &ensemble)?;
        for channel in ScoreChannel::ALL {
            let grid = map.channel_map(channel);
            write_bytes(&channel_path(&score_dir, &stem, channel.name()), &grid.to_bytes()?)?;
        }
        write_bytes(&channel_path(&score_dir, &stem, "pred"), &map.prediction_map().to_bytes()?)?;

        let stored = map.channel_map(ScoreChannel::Epistemic).scalars()?;
        let values: Vec<f64> = stored.iter().flatten().map(|&v| v as f64).collect();
        let mut entry = ScoredFile {
            stem: stem.clone(),
            valid_pixels: values.len(),
            flagged: 0,
            threshold: None,
            warning: None,
        };
        if values.is_empty() {
            warn!("{stem}: no valid pixels");
            entry.warning = Some("no valid pixels".into());
        } else if cfg.threshold.per_scan {
            entry.threshold = Some(percentile_threshold(&values, top)?.threshold);
        } else {
            for &v in &values {
                histogram.add(v)?;
            }
        }
        files.push(entry);
    }

    let threshold = if cfg.threshold.per_scan || histogram.is_empty() {
        None
    } else {
        Some(histogram.threshold(top)?)
    };
    for entry in &mut files {
        let t = entry.threshold.or(threshold);
        write_mask(&score_dir, entry, t)?;
    }

    let manifest = ScoreManifest {
        ensemble_size: ensemble.len(),
        seed: cfg.ensemble.seed,
        top_fraction: top,
        per_scan: cfg.threshold.per_scan,
        threshold,
        valid_pixels: files.iter().map(|f| f.valid_pixels).sum(),
        flagged: files.iter().map(|f| f.flagged).sum(),
        channels: ScoreChannel::ALL.iter().map(|c| c.name().to_string()).collect(),
        files,
    };
    write_json(&score_dir.join("manifest.json"), &manifest)?;
    info!(
        "scored {} files, flagged {} of {} pixels",
        manifest.files.len(),
        manifest.flagged,
        manifest.valid_pixels
    );
    Ok(manifest)
}

/// Reads the stored epistemic map back and writes `<stem>.ood.fmap` with 1
/// where the score exceeds `threshold`.
fn write_mask(score_dir: &Path, entry: &mut ScoredFile, threshold: Option<f64>) -> Result<()> {
    let scores = FeatureMap::read(&channel_path(score_dir, &entry.stem, ScoreChannel::Epistemic.name()))?;
    let mask: Vec<Option<f32>> = scores
        .scalars()?
        .into_iter()
        .map(|v| {
            v.map(|v| match threshold {
                Some(t) if v as f64 > t => 1.0,
                _ => 0.0,
            })
        })
        .collect();
    entry.flagged = mask.iter().filter(|m| **m == Some(1.0)).count();
    let grid = FeatureMap::from_scalars(scores.height(), scores.width(), &mask)?;
    write_bytes(&channel_path(score_dir, &entry.stem, "ood"), &grid.to_bytes()?)
}
