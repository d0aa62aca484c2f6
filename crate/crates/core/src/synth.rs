//! Synthetic labeled feature spaces and the end-to-end benchmark on them.
//!
//! Class means sit on a line along the first axis, `class_separation` apart.
//! Each overlap pair `(a, b)` moves `b` to a quarter separation from `a`,
//! creating ID samples with high aleatoric ambiguity. The OOD cluster sits
//! `ood_offset` from the two outermost class means, off the line along the
//! second axis (along the first axis when D = 1).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bayes::{build_bank, sample_ensemble, NigParams, DEFAULT_ENSEMBLE_SIZE};
use crate::ensemble::{score_samples, PixelScores, ScoreChannel};
use crate::error::{Error, Result};
use crate::gmm::{fit_classes, ClassFitSummary, EmConfig};
use crate::math::derive_seed;
use crate::metrics::{miou, EvalReport, ScoredPixels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub feature_dim: usize,
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub class_separation: f64,
    pub overlap_pairs: Vec<(u32, u32)>,
    pub ood_count: usize,
    pub ood_offset: f64,
    pub within_class_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// The benchmark scenario: 6 classes in 8 dimensions, two overlap pairs.
    fn default() -> Self {
        Self {
            feature_dim: 8,
            n_classes: 6,
            samples_per_class: 2000,
            class_separation: 4.0,
            overlap_pairs: vec![(0, 1), (2, 3)],
            ood_count: 600,
            ood_offset: 12.0,
            within_class_std: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.n_classes == 0 || self.ood_count == 0 {
            return Err(Error::invalid("feature_dim, n_classes and ood_count must be at least 1"));
        }
        if self.samples_per_class < 2 {
            return Err(Error::invalid("samples_per_class must be at least 2 for a train/eval split"));
        }
        for (name, v) in [
            ("class_separation", self.class_separation),
            ("ood_offset", self.ood_offset),
            ("within_class_std", self.within_class_std),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let mut moved = vec![false; self.n_classes];
        for &(a, b) in &self.overlap_pairs {
            let (a, b) = (a as usize, b as usize);
            if a >= self.n_classes || b >= self.n_classes || a == b {
                return Err(Error::invalid(format!(
                    "overlap pair ({a}, {b}) invalid for {} classes",
                    self.n_classes
                )));
            }
            if moved[b] {
                return Err(Error::invalid(format!("class {b} moved by two overlap pairs")));
            }
            moved[b] = true;
        }
        Ok(())
    }

    /// Class means (row per class) and the OOD center.
    pub fn layout(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let d = self.feature_dim;
        let mut means: Vec<Vec<f64>> = (0..self.n_classes)
            .map(|c| {
                let mut m = vec![0.0; d];
                m[0] = c as f64 * self.class_separation;
                m
            })
            .collect();
        for &(a, b) in &self.overlap_pairs {
            let mut m = means[a as usize].clone();
            m[0] += self.class_separation / 4.0;
            means[b as usize] = m;
        }

        let last = &means[self.n_classes - 1];
        let mut ood = if self.n_classes == 1 { last.clone() } else { vec![0.0; d] };
        if self.n_classes == 1 {
            ood[if d > 1 { 1 } else { 0 }] += self.ood_offset;
        } else {
            let prev = &means[self.n_classes - 2];
            let half_gap = 0.5 * dist(prev, last);
            for i in 0..d {
                ood[i] = 0.5 * (prev[i] + last[i]);
            }
            if d > 1 {
                ood[1] += (self.ood_offset * self.ood_offset - half_gap * half_gap).max(0.0).sqrt();
            } else {
                let extremity = means.iter().map(|m| m[0]).fold(f64::NEG_INFINITY, f64::max);
                ood[0] = extremity + self.ood_offset;
            }
        }
        (means, ood)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratingParams {
    pub class_means: Vec<Vec<f64>>,
    pub class_std: f64,
    pub ood_mean: Vec<f64>,
    pub ood_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub dim: usize,
    /// Row-major training samples per class.
    pub train_features: Vec<Vec<f64>>,
    /// Row-major evaluation samples: every class's held-out half, then OOD.
    pub eval_features: Vec<f64>,
    /// `None` for OOD samples.
    pub eval_labels: Vec<Option<u32>>,
    pub eval_is_ood: Vec<bool>,
    pub generating_params: GeneratingParams,
}

impl SynthDataset {
    pub fn num_classes(&self) -> usize {
        self.train_features.len()
    }

    pub fn eval_len(&self) -> usize {
        self.eval_labels.len()
    }

    pub fn train_len(&self) -> usize {
        self.train_features.iter().map(|f| f.len() / self.dim).sum()
    }
}

fn draw(center: &[f64], std: f64, count: usize, seed: u64, out: &mut Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("validated std");
    for _ in 0..count {
        out.extend(center.iter().map(|m| m + normal.sample(&mut rng)));
    }
}

/// Class `c` draws from sub-seed `derive_seed(seed, c)`, OOD from
/// `derive_seed(seed, C)`. Each class's first half trains, the rest evaluates.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let (means, ood_mean) = config.layout();
    let d = config.feature_dim;
    let n_train = config.samples_per_class / 2;
    let n_eval = config.samples_per_class - n_train;

    let mut train_features = Vec::with_capacity(config.n_classes);
    let mut eval_features = Vec::with_capacity((config.n_classes * n_eval + config.ood_count) * d);
    let mut eval_labels = Vec::new();
    for (c, mean) in means.iter().enumerate() {
        let mut all = Vec::with_capacity(config.samples_per_class * d);
        draw(mean, config.within_class_std, config.samples_per_class, derive_seed(config.seed, c as u64), &mut all);
        eval_features.extend_from_slice(&all[n_train * d..]);
        all.truncate(n_train * d);
        train_features.push(all);
        eval_labels.extend(std::iter::repeat_n(Some(c as u32), n_eval));
    }
    draw(
        &ood_mean,
        config.within_class_std,
        config.ood_count,
        derive_seed(config.seed, config.n_classes as u64),
        &mut eval_features,
    );
    eval_labels.extend(std::iter::repeat_n(None, config.ood_count));
    let eval_is_ood = eval_labels.iter().map(Option::is_none).collect();

    Ok(SynthDataset {
        dim: d,
        train_features,
        eval_features,
        eval_labels,
        eval_is_ood,
        generating_params: GeneratingParams {
            class_means: means,
            class_std: config.within_class_std,
            ood_mean,
            ood_std: config.within_class_std,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub components: usize,
    pub prior: NigParams,
    pub n_samples: usize,
    pub seed: u64,
    pub em: EmConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            components: 2,
            prior: NigParams::default(),
            n_samples: DEFAULT_ENSEMBLE_SIZE,
            seed: 0,
            em: EmConfig::default(),
        }
    }
}

/// Epistemic minus predictive-entropy differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub auroc: f64,
    pub auprc: f64,
    /// Negative when the epistemic score has the lower FPR95.
    pub fpr95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub channel: ScoreChannel,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub epistemic: EvalReport,
    pub predictive: EvalReport,
    pub delta: DeltaSummary,
    /// Every score channel, including the two above.
    pub channels: Vec<ChannelReport>,
    /// ID accuracy of the EM point estimate.
    pub point_accuracy: f64,
    /// ID accuracy of the ensemble majority vote.
    pub ensemble_accuracy: f64,
    pub fit: Vec<ClassFitSummary>,
}

/// Fits, builds the bank, samples the ensemble, scores the evaluation set
/// and reports every channel. mIoU uses the majority-vote predictions on ID
/// samples for all channels.
pub fn run_benchmark(dataset: &SynthDataset, pipeline: &PipelineConfig) -> Result<BenchmarkOutcome> {
    let em = EmConfig {
        seed: pipeline.seed,
        ..pipeline.em
    };
    let fit = fit_classes(&dataset.train_features, dataset.dim, pipeline.components, &em)?;
    let bank = build_bank(&fit.model, &fit.stats, &pipeline.prior)?;
    let ensemble = sample_ensemble(&bank, pipeline.n_samples, pipeline.seed)?;
    let scores = score_samples(&dataset.eval_features, &fit.model, &ensemble)?;

    let c = dataset.num_classes();
    let pred: Vec<u32> = scores.iter().map(|s| s.predicted_class).collect();
    let gt: Vec<u32> = dataset.eval_labels.iter().map(|l| l.unwrap_or(0)).collect();
    let seg = miou(&pred, &gt, c, &dataset.eval_is_ood)?;

    let point_pred: Vec<u32> = dataset
        .eval_features
        .chunks(dataset.dim)
        .map(|z| fit.model.predict(z))
        .collect::<Result<_>>()?;
    let accuracy = |p: &[u32]| {
        let (hits, total) = dataset
            .eval_labels
            .iter()
            .zip(p)
            .filter_map(|(l, p)| l.map(|l| l == *p))
            .fold((0usize, 0usize), |(h, t), ok| (h + ok as usize, t + 1));
        hits as f64 / total as f64
    };

    let channels = ScoreChannel::ALL
        .iter()
        .map(|&channel| {
            let report = channel_report(&scores, channel, &dataset.eval_is_ood, &seg)?;
            Ok(ChannelReport { channel, report })
        })
        .collect::<Result<Vec<_>>>()?;
    let epistemic = channels[0].report.clone();
    let predictive = channels[1].report.clone();
    Ok(BenchmarkOutcome {
        delta: DeltaSummary {
            auroc: epistemic.auroc - predictive.auroc,
            auprc: epistemic.auprc - predictive.auprc,
            fpr95: epistemic.fpr95 - predictive.fpr95,
        },
        epistemic,
        predictive,
        channels,
        point_accuracy: accuracy(&point_pred),
        ensemble_accuracy: accuracy(&pred),
        fit: fit.summaries,
    })
}

fn channel_report(
    scores: &[PixelScores],
    channel: ScoreChannel,
    is_ood: &[bool],
    seg: &crate::metrics::MiouResult,
) -> Result<EvalReport> {
    let values = scores.iter().map(|s| channel.value(s)).collect();
    EvalReport::evaluate(&ScoredPixels::new(values, is_ood.to_vec())?, seg)
}
