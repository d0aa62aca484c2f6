//! Soft EM for one class's diagonal mixture.
//!
//! The E-step produces responsibility-weighted sufficient statistics
//! (effective count, weighted mean, weighted squared-deviation sum per
//! component and dimension); the M-step reads parameters straight off them.
//! The statistics of the final E-step are returned alongside the fit so the
//! Bayesian layer can consume them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassGmm, GmmClassifier, VARIANCE_FLOOR};
use crate::error::{Error, Result};
use crate::math::{derive_seed, splitmix64};
use crate::stats::{ComponentStats, SufficientStats};

/// Components whose effective count drops below this are re-seeded.
const MIN_EFFECTIVE_COUNT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Relative log-likelihood change below which EM stops.
    pub tol: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub gmm: ClassGmm,
    pub stats: ComponentStats,
    /// Number of M-steps performed.
    pub iterations: usize,
    pub converged: bool,
    /// Total data log-likelihood under `gmm`.
    pub log_likelihood: f64,
    /// Log-likelihood after the initial E-step and after each iteration.
    pub log_likelihood_trace: Vec<f64>,
    /// Component re-seeds triggered by vanishing effective counts.
    pub reseeds: usize,
}

/// Fits a `components`-component mixture to row-major `samples` of width `dim`.
pub fn em_fit(
    samples: &[f64],
    dim: usize,
    class_id: u32,
    components: usize,
    config: &EmConfig,
) -> Result<EmFit> {
    if dim == 0 || components == 0 {
        return Err(Error::invalid("dimension and component count must be at least 1"));
    }
    if !samples.len().is_multiple_of(dim) {
        return Err(Error::shape(format!(
            "{} values do not form rows of width {dim}",
            samples.len()
        )));
    }
    let n = samples.len() / dim;
    if n < components {
        return Err(Error::InsufficientData {
            class: class_id,
            samples: n,
            required: components,
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    if config.tol.is_nan() || config.tol < 0.0 {
        return Err(Error::invalid("tolerance must be nonnegative"));
    }

    let rows = |i: usize| &samples[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let global_var = global_variance(samples, dim);

    let mut gmm = initialize(samples, dim, class_id, components, &global_var, &mut rng)?;
    let mut resp = vec![0.0; n * components];
    let (mut ll, mut stats) = e_step(&gmm, samples, dim, &mut resp);
    let mut trace = vec![ll];
    let mut reseeds = 0;
    let mut iterations = 0;
    let mut converged = false;

    for iter in 1..=config.max_iters {
        let mut weights = Vec::with_capacity(components);
        let mut means = Vec::with_capacity(components * dim);
        let mut variances = Vec::with_capacity(components * dim);
        let total: f64 = stats.counts().iter().sum();
        for k in 0..components {
            let nk = stats.counts()[k];
            if nk < MIN_EFFECTIVE_COUNT {
                reseeds += 1;
                let pick = rng.random_range(0..n);
                weights.push(1.0 / components as f64);
                means.extend_from_slice(rows(pick));
                variances.extend_from_slice(&global_var);
            } else {
                weights.push(nk / total);
                means.extend_from_slice(stats.component_means(k));
                variances.extend(
                    stats
                        .component_sq_devs(k)
                        .iter()
                        .map(|s| (s / nk).max(VARIANCE_FLOOR)),
                );
            }
        }
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= wsum);
        gmm = ClassGmm::new(class_id, weights, means, variances)?;

        let (new_ll, new_stats) = e_step(&gmm, samples, dim, &mut resp);
        let prev = ll;
        ll = new_ll;
        stats = new_stats;
        trace.push(ll);
        iterations = iter;
        if (ll - prev).abs() <= config.tol * prev.abs() {
            converged = true;
            break;
        }
    }

    Ok(EmFit {
        gmm,
        stats,
        iterations,
        converged,
        log_likelihood: ll,
        log_likelihood_trace: trace,
        reseeds,
    })
}

/// Per-class fit summary for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFitSummary {
    pub class_id: u32,
    pub samples: usize,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub reseeds: usize,
}

/// Result of fitting every class.
#[derive(Debug, Clone)]
pub struct ClassifierFit {
    pub model: GmmClassifier,
    pub stats: SufficientStats,
    pub summaries: Vec<ClassFitSummary>,
}

/// Seed used by [`fit_classes`] for class `class_id`.
pub fn class_seed(seed: u64, class_id: u32) -> u64 {
    derive_seed(splitmix64(seed), class_id as u64)
}

/// Runs [`em_fit`] independently for each class (`per_class[c]` holds class
/// `c`'s row-major samples), seeding class `c` with [`class_seed`].
pub fn fit_classes(
    per_class: &[Vec<f64>],
    dim: usize,
    components: usize,
    config: &EmConfig,
) -> Result<ClassifierFit> {
    if per_class.is_empty() {
        return Err(Error::invalid("need at least one class"));
    }
    let fits = per_class
        .par_iter()
        .enumerate()
        .map(|(c, samples)| {
            let cfg = EmConfig {
                seed: class_seed(config.seed, c as u32),
                ..*config
            };
            em_fit(samples, dim, c as u32, components, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries = fits
        .iter()
        .zip(per_class)
        .map(|(f, s)| ClassFitSummary {
            class_id: f.gmm.class_id(),
            samples: s.len() / dim,
            iterations: f.iterations,
            converged: f.converged,
            log_likelihood: f.log_likelihood,
            reseeds: f.reseeds,
        })
        .collect();
    let (gmms, stats): (Vec<_>, Vec<_>) = fits.into_iter().map(|f| (f.gmm, f.stats)).unzip();
    Ok(ClassifierFit {
        model: GmmClassifier::new(gmms)?,
        stats: SufficientStats::new(stats)?,
        summaries,
    })
}

fn global_variance(samples: &[f64], dim: usize) -> Vec<f64> {
    let n = (samples.len() / dim) as f64;
    let mut mean = vec![0.0; dim];
    for row in samples.chunks_exact(dim) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for row in samples.chunks_exact(dim) {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.into_iter().map(|v| (v / n).max(VARIANCE_FLOOR)).collect()
}

/// k-means++ seeding of the means; shared data variance and uniform weights.
fn initialize(
    samples: &[f64],
    dim: usize,
    class_id: u32,
    components: usize,
    global_var: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<ClassGmm> {
    let n = samples.len() / dim;
    let row = |i: usize| &samples[i * dim..(i + 1) * dim];
    let sq_dist = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };

    let mut centers = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(centers[0]))).collect();
    while centers.len() < components {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 && total.is_finite() {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(pick);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), row(pick)));
        }
    }

    let means = centers.iter().flat_map(|&c| row(c).iter().copied()).collect();
    let variances = (0..components).flat_map(|_| global_var.iter().copied()).collect();
    ClassGmm::new(
        class_id,
        vec![1.0 / components as f64; components],
        means,
        variances,
    )
}

/// Responsibilities, total log-likelihood and sufficient statistics.
fn e_step(gmm: &ClassGmm, samples: &[f64], dim: usize, resp: &mut [f64]) -> (f64, ComponentStats) {
    let k_count = gmm.components();
    let mut ll = 0.0;
    let mut logs = vec![0.0; k_count];
    for (i, x) in samples.chunks_exact(dim).enumerate() {
        for (k, l) in logs.iter_mut().enumerate() {
            *l = gmm.component_log_density(k, x);
        }
        let lse = crate::math::log_sum_exp(&logs);
        ll += lse;
        for k in 0..k_count {
            resp[i * k_count + k] = (logs[k] - lse).exp();
        }
    }

    let mut counts = vec![0.0; k_count];
    let mut means = vec![0.0; k_count * dim];
    for (i, x) in samples.chunks_exact(dim).enumerate() {
        for k in 0..k_count {
            let r = resp[i * k_count + k];
            counts[k] += r;
            for d in 0..dim {
                means[k * dim + d] += r * x[d];
            }
        }
    }
    for k in 0..k_count {
        if counts[k] > 0.0 {
            for d in 0..dim {
                means[k * dim + d] /= counts[k];
            }
        }
    }
    let mut sq_devs = vec![0.0; k_count * dim];
    for (i, x) in samples.chunks_exact(dim).enumerate() {
        for k in 0..k_count {
            let r = resp[i * k_count + k];
            for d in 0..dim {
                let dev = x[d] - means[k * dim + d];
                sq_devs[k * dim + d] += r * dev * dev;
            }
        }
    }
    let stats = ComponentStats::new(k_count, dim, counts, means, sq_devs)
        .expect("E-step statistics are well-formed");
    (ll, stats)
}
