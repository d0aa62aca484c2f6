//! Ensemble voting and uncertainty scores.
//!
//! Every sampled GMM classifies a feature by its highest class-conditional
//! density. The vote histogram gives the prediction (majority, lowest id on
//! ties) and the epistemic score (entropy of the vote frequencies). The
//! posterior-based decomposition predictive = aleatoric + mutual information
//! is computed alongside as the baseline comparator, together with the
//! point-estimate model's posterior entropy and max-posterior.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::GmmParameterSample;
use crate::error::{Error, Result};
use crate::feature_map::FeatureMap;
use crate::gmm::GmmClassifier;
use crate::math::{argmax_lowest, entropy, normalize_log_probs};

const MI_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    counts: Vec<u32>,
    total: u32,
}

impl VoteRecord {
    pub fn from_counts(counts: Vec<u32>) -> Result<Self> {
        let total: u32 = counts.iter().sum();
        if total == 0 {
            return Err(Error::invalid("a vote record needs at least one vote"));
        }
        Ok(Self { counts, total })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.total as f64)
            .collect()
    }
}

fn check_ensemble(ensemble: &[GmmParameterSample], dim: usize) -> Result<usize> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::invalid("ensemble must not be empty"))?;
    let classes = first.model().num_classes();
    for m in ensemble {
        if m.model().num_classes() != classes || m.model().dim() != first.model().dim() {
            return Err(Error::shape("ensemble members disagree on C or D"));
        }
    }
    if first.model().dim() != dim {
        return Err(Error::shape(format!(
            "feature has {dim} dimensions, ensemble expects {}",
            first.model().dim()
        )));
    }
    Ok(classes)
}

/// Tally of each member's highest-density class.
pub fn vote(z: &[f64], ensemble: &[GmmParameterSample]) -> Result<VoteRecord> {
    let classes = check_ensemble(ensemble, z.len())?;
    let mut counts = vec![0u32; classes];
    let mut logs = Vec::with_capacity(classes);
    for member in ensemble {
        member.model().log_densities_into(z, &mut logs);
        counts[argmax_lowest(&logs)] += 1;
    }
    VoteRecord::from_counts(counts)
}

/// Most-voted class, lowest id on ties.
pub fn majority_class(record: &VoteRecord) -> u32 {
    let mut best = 0;
    for (c, &n) in record.counts.iter().enumerate() {
        if n > record.counts[best] {
            best = c;
        }
    }
    best as u32
}

/// Entropy (nats) of the vote frequencies.
pub fn vote_entropy(record: &VoteRecord) -> f64 {
    entropy(&record.frequencies())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub predictive_entropy: f64,
    pub aleatoric: f64,
    pub mutual_information: f64,
}

/// Decomposition from member class posteriors (one probability vector per
/// member).
pub fn decompose_posteriors(posteriors: &[Vec<f64>]) -> Result<Decomposition> {
    let first = posteriors
        .first()
        .ok_or_else(|| Error::invalid("need at least one member posterior"))?;
    let classes = first.len();
    if posteriors.iter().any(|p| p.len() != classes) {
        return Err(Error::shape("member posteriors have different lengths"));
    }
    let n = posteriors.len() as f64;
    let mut mean = vec![0.0; classes];
    let mut aleatoric = 0.0;
    for p in posteriors {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n;
        }
        aleatoric += entropy(p) / n;
    }
    Ok(finish_decomposition(entropy(&mean), aleatoric))
}

fn finish_decomposition(predictive_entropy: f64, aleatoric: f64) -> Decomposition {
    let diff = predictive_entropy - aleatoric;
    let mutual_information = if (-MI_CLAMP..0.0).contains(&diff) { 0.0 } else { diff };
    Decomposition {
        predictive_entropy,
        aleatoric,
        mutual_information,
    }
}

/// Predictive entropy, expected member entropy and their difference, using
/// each member's class posterior.
pub fn decompose_uncertainty(z: &[f64], ensemble: &[GmmParameterSample]) -> Result<Decomposition> {
    check_ensemble(ensemble, z.len())?;
    let posteriors = ensemble
        .iter()
        .map(|m| m.model().class_posterior(z))
        .collect::<Result<Vec<_>>>()?;
    decompose_posteriors(&posteriors)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelScores {
    pub predicted_class: u32,
    /// Vote entropy.
    pub epistemic: f64,
    pub predictive_entropy: f64,
    pub aleatoric: f64,
    pub mutual_information: f64,
    /// Posterior entropy of the point-estimate model.
    pub deterministic_entropy: f64,
    /// Largest posterior of the point-estimate model.
    pub max_posterior: f64,
}

/// Score channels exported per pixel. All are oriented so that higher means
/// more likely out-of-distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreChannel {
    Epistemic,
    PredictiveEntropy,
    Aleatoric,
    MutualInformation,
    DeterministicEntropy,
    NegMaxPosterior,
}

impl ScoreChannel {
    pub const ALL: [ScoreChannel; 6] = [
        ScoreChannel::Epistemic,
        ScoreChannel::PredictiveEntropy,
        ScoreChannel::Aleatoric,
        ScoreChannel::MutualInformation,
        ScoreChannel::DeterministicEntropy,
        ScoreChannel::NegMaxPosterior,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreChannel::Epistemic => "epistemic",
            ScoreChannel::PredictiveEntropy => "predictive_entropy",
            ScoreChannel::Aleatoric => "aleatoric",
            ScoreChannel::MutualInformation => "mutual_information",
            ScoreChannel::DeterministicEntropy => "deterministic_entropy",
            ScoreChannel::NegMaxPosterior => "neg_max_posterior",
        }
    }

    pub fn value(self, s: &PixelScores) -> f64 {
        match self {
            ScoreChannel::Epistemic => s.epistemic,
            ScoreChannel::PredictiveEntropy => s.predictive_entropy,
            ScoreChannel::Aleatoric => s.aleatoric,
            ScoreChannel::MutualInformation => s.mutual_information,
            ScoreChannel::DeterministicEntropy => s.deterministic_entropy,
            ScoreChannel::NegMaxPosterior => -s.max_posterior,
        }
    }
}

/// All scores for one feature vector in a single pass over the ensemble.
pub fn score_pixel(
    z: &[f64],
    model: &GmmClassifier,
    ensemble: &[GmmParameterSample],
) -> Result<PixelScores> {
    model.check_dim(z)?;
    let classes = check_ensemble(ensemble, z.len())?;
    if classes != model.num_classes() {
        return Err(Error::shape(format!(
            "ensemble has {classes} classes, model has {}",
            model.num_classes()
        )));
    }
    Ok(score_unchecked(z, model, ensemble, &mut Scratch::new(classes)))
}

struct Scratch {
    logs: Vec<f64>,
    post: Vec<f64>,
    mean: Vec<f64>,
    counts: Vec<u32>,
}

impl Scratch {
    fn new(classes: usize) -> Self {
        Self {
            logs: Vec::with_capacity(classes),
            post: Vec::with_capacity(classes),
            mean: vec![0.0; classes],
            counts: vec![0; classes],
        }
    }
}

fn score_unchecked(
    z: &[f64],
    model: &GmmClassifier,
    ensemble: &[GmmParameterSample],
    s: &mut Scratch,
) -> PixelScores {
    let n = ensemble.len() as f64;
    s.mean.iter_mut().for_each(|m| *m = 0.0);
    s.counts.iter_mut().for_each(|c| *c = 0);
    let mut aleatoric = 0.0;
    for member in ensemble {
        member.model().log_densities_into(z, &mut s.logs);
        s.counts[argmax_lowest(&s.logs)] += 1;
        normalize_log_probs(&s.logs, &mut s.post);
        for (m, p) in s.mean.iter_mut().zip(&s.post) {
            *m += p / n;
        }
        aleatoric += entropy(&s.post) / n;
    }
    let record = VoteRecord::from_counts(s.counts.clone()).expect("non-empty ensemble");
    let decomposition = finish_decomposition(entropy(&s.mean), aleatoric);

    model.log_densities_into(z, &mut s.logs);
    normalize_log_probs(&s.logs, &mut s.post);
    let max_posterior = s.post.iter().copied().fold(0.0, f64::max);

    PixelScores {
        predicted_class: majority_class(&record),
        epistemic: vote_entropy(&record),
        predictive_entropy: decomposition.predictive_entropy,
        aleatoric: decomposition.aleatoric,
        mutual_information: decomposition.mutual_information,
        deterministic_entropy: entropy(&s.post),
        max_posterior,
    }
}

/// Per-pixel scores; `None` at pixels that were invalid in the input.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    height: usize,
    width: usize,
    scores: Vec<Option<PixelScores>>,
}

impl UncertaintyMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn scores(&self) -> &[Option<PixelScores>] {
        &self.scores
    }

    pub fn valid_count(&self) -> usize {
        self.scores.iter().filter(|s| s.is_some()).count()
    }

    pub fn channel(&self, channel: ScoreChannel) -> Vec<Option<f64>> {
        self.scores
            .iter()
            .map(|s| s.as_ref().map(|s| channel.value(s)))
            .collect()
    }

    pub fn channel_map(&self, channel: ScoreChannel) -> FeatureMap {
        let values: Vec<Option<f32>> = self
            .channel(channel)
            .into_iter()
            .map(|v| v.map(|v| v as f32))
            .collect();
        FeatureMap::from_scalars(self.height, self.width, &values).expect("grid shape")
    }

    pub fn prediction_map(&self) -> FeatureMap {
        let values: Vec<Option<f32>> = self
            .scores
            .iter()
            .map(|s| s.as_ref().map(|s| s.predicted_class as f32))
            .collect();
        FeatureMap::from_scalars(self.height, self.width, &values).expect("grid shape")
    }
}

/// Scores every valid pixel. Pixels are independent, so the work is spread
/// over the current rayon pool; the result does not depend on its size.
pub fn score_feature_map(
    features: &FeatureMap,
    model: &GmmClassifier,
    ensemble: &[GmmParameterSample],
) -> Result<UncertaintyMap> {
    if features.dim() != model.dim() {
        return Err(Error::shape(format!(
            "feature map has D = {}, model expects {}",
            features.dim(),
            model.dim()
        )));
    }
    let classes = check_ensemble(ensemble, model.dim())?;
    if classes != model.num_classes() {
        return Err(Error::shape(format!(
            "ensemble has {classes} classes, model has {}",
            model.num_classes()
        )));
    }
    let scores = (0..features.pixel_count())
        .into_par_iter()
        .map_init(
            || (Scratch::new(classes), Vec::with_capacity(model.dim())),
            |(scratch, z), pixel| {
                if !features.is_valid(pixel) {
                    return None;
                }
                z.clear();
                z.extend(features.pixel(pixel).iter().map(|&v| v as f64));
                Some(score_unchecked(z, model, ensemble, scratch))
            },
        )
        .collect();
    Ok(UncertaintyMap {
        height: features.height(),
        width: features.width(),
        scores,
    })
}

/// Scores row-major `samples` of width `model.dim()`, in order.
pub fn score_samples(
    samples: &[f64],
    model: &GmmClassifier,
    ensemble: &[GmmParameterSample],
) -> Result<Vec<PixelScores>> {
    let dim = model.dim();
    if !samples.len().is_multiple_of(dim) {
        return Err(Error::shape(format!(
            "{} values do not form rows of width {dim}",
            samples.len()
        )));
    }
    let classes = check_ensemble(ensemble, dim)?;
    if classes != model.num_classes() {
        return Err(Error::shape(format!(
            "ensemble has {classes} classes, model has {}",
            model.num_classes()
        )));
    }
    Ok(samples
        .par_chunks(dim)
        .map_init(
            || Scratch::new(classes),
            |scratch, z| score_unchecked(z, model, ensemble, scratch),
        )
        .collect())
}
