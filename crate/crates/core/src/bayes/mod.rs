//! Normal–Inverse-Gamma priors over every component's per-dimension mean and
//! variance.
//!
//! For a cell with hyperparameters `(μ, κ, α, β)`:
//! `σ² ~ InvGamma(α, β)` (density ∝ x^(−α−1) e^(−β/x)) and `μ ~ N(μ, σ²/κ)`.
//! Mixture weights carry no prior; they stay frozen at the EM estimates.

mod codec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::gmm::{ClassGmm, GmmClassifier};
use crate::math::derive_seed;
use crate::stats::{CellStats, SufficientStats};

/// Ensemble size used when none is configured.
pub const DEFAULT_ENSEMBLE_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigParams {
    pub mu: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for NigParams {
    /// Weakly informative: prior mean of σ² is β/(α−1) = 1.
    fn default() -> Self {
        Self {
            mu: 0.0,
            kappa: 1.0,
            alpha: 2.0,
            beta: 1.0,
        }
    }
}

impl NigParams {
    pub fn new(mu: f64, kappa: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self {
            mu,
            kappa,
            alpha,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mu.is_finite()
            && self.kappa.is_finite()
            && self.alpha.is_finite()
            && self.beta.is_finite()
            && self.kappa > 0.0
            && self.alpha > 0.0
            && self.beta > 0.0;
        if !ok {
            return Err(Error::invalid(format!(
                "NIG parameters need finite mu and kappa, alpha, beta > 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Conjugate update of one cell with weighted statistics `(n, x̄, S)`.
pub fn update_posterior(prior: &NigParams, stats: &CellStats) -> Result<NigParams> {
    prior.validate()?;
    let CellStats { n, mean, sq_dev } = *stats;
    if !(n.is_finite() && n >= 0.0) || !(sq_dev.is_finite() && sq_dev >= 0.0) {
        return Err(Error::InvalidStatistics(format!(
            "need finite n >= 0 and S >= 0, got n = {n}, S = {sq_dev}"
        )));
    }
    if n == 0.0 {
        return Ok(*prior);
    }
    if !mean.is_finite() {
        return Err(Error::InvalidStatistics(format!("weighted mean {mean} is not finite")));
    }
    let kappa = prior.kappa + n;
    let dev = mean - prior.mu;
    Ok(NigParams {
        mu: (prior.kappa * prior.mu + n * mean) / kappa,
        kappa,
        alpha: prior.alpha + 0.5 * n,
        beta: prior.beta + 0.5 * sq_dev + prior.kappa * n * dev * dev / (2.0 * kappa),
    })
}

/// Log density of the NIG posterior predictive: Student-t with 2α degrees of
/// freedom, location μ and scale √(β(κ+1)/(ακ)).
pub fn posterior_predictive_logpdf(cell: &NigParams, x: f64) -> f64 {
    let nu = 2.0 * cell.alpha;
    let scale = (cell.beta * (cell.kappa + 1.0) / (cell.alpha * cell.kappa)).sqrt();
    let t = (x - cell.mu) / scale;
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - scale.ln()
        - 0.5 * (nu + 1.0) * (t * t / nu).ln_1p()
}

/// Draws `(μ, σ²)` from one cell: σ² as the reciprocal of a
/// Gamma(shape α, scale 1/β) draw, then μ from N(μ_n, σ²/κ).
pub fn sample_cell<R: rand::Rng + ?Sized>(cell: &NigParams, rng: &mut R) -> (f64, f64) {
    let gamma = Gamma::new(cell.alpha, 1.0 / cell.beta).expect("validated shape and scale");
    let precision: f64 = gamma.sample(rng);
    let variance = (1.0 / precision).clamp(f64::MIN_POSITIVE, f64::MAX);
    let sd = (variance / cell.kappa).sqrt();
    let mean = if sd.is_finite() {
        Normal::new(cell.mu, sd).expect("finite sd").sample(rng)
    } else {
        cell.mu
    };
    (mean, variance)
}

/// Posterior cells for every (class, component, dimension) plus the frozen
/// EM mixture weights per (class, component).
#[derive(Debug, Clone, PartialEq)]
pub struct NigPosteriorBank {
    classes: usize,
    components: usize,
    dim: usize,
    cells: Vec<NigParams>,
    weights: Vec<f64>,
}

impl NigPosteriorBank {
    pub fn from_parts(
        classes: usize,
        components: usize,
        dim: usize,
        cells: Vec<NigParams>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if classes == 0 || components == 0 || dim == 0 {
            return Err(Error::shape("bank needs C, K, D >= 1"));
        }
        if cells.len() != classes * components * dim || weights.len() != classes * components {
            return Err(Error::shape(format!(
                "bank C={classes} K={components} D={dim} has {} cells and {} weights",
                cells.len(),
                weights.len()
            )));
        }
        for cell in &cells {
            cell.validate()?;
        }
        // weights are re-validated by ClassGmm when sampled, but catch bad banks early
        for c in 0..classes {
            let w = &weights[c * components..(c + 1) * components];
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("class {c} weights are not a distribution")));
            }
        }
        Ok(Self {
            classes,
            components,
            dim,
            cells,
            weights,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[NigParams] {
        &self.cells
    }

    pub fn cell(&self, class: usize, component: usize, d: usize) -> &NigParams {
        &self.cells[(class * self.components + component) * self.dim + d]
    }

    pub fn frozen_weights(&self, class: usize) -> &[f64] {
        &self.weights[class * self.components..(class + 1) * self.components]
    }

    pub fn all_weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Applies [`update_posterior`] to every cell with that cell's statistics.
pub fn build_bank(
    model: &GmmClassifier,
    stats: &SufficientStats,
    prior: &NigParams,
) -> Result<NigPosteriorBank> {
    prior.validate()?;
    let (c, k, d) = (model.num_classes(), model.components(), model.dim());
    if stats.num_classes() != c
        || stats
            .classes()
            .iter()
            .any(|s| s.components() != k || s.dim() != d)
    {
        return Err(Error::shape(format!(
            "statistics do not match model shape C={c} K={k} D={d}"
        )));
    }
    let mut cells = Vec::with_capacity(c * k * d);
    let mut weights = Vec::with_capacity(c * k);
    for (gmm, class_stats) in model.classes().iter().zip(stats.classes()) {
        weights.extend_from_slice(gmm.weights());
        for comp in 0..k {
            for dim in 0..d {
                cells.push(update_posterior(prior, &class_stats.cell(comp, dim))?);
            }
        }
    }
    NigPosteriorBank::from_parts(c, k, d, cells, weights)
}

/// One GMM drawn from the posterior bank, with the frozen weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParameterSample {
    model: GmmClassifier,
}

impl GmmParameterSample {
    pub fn model(&self) -> &GmmClassifier {
        &self.model
    }

    /// Wraps an already-built classifier (e.g. a point estimate) as an
    /// ensemble member.
    pub fn from_model(model: GmmClassifier) -> Self {
        Self { model }
    }
}

pub fn sample_parameters(bank: &NigPosteriorBank, rng_seed: u64) -> GmmParameterSample {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (k, d) = (bank.components, bank.dim);
    let classes = (0..bank.classes)
        .map(|c| {
            let mut means = Vec::with_capacity(k * d);
            let mut variances = Vec::with_capacity(k * d);
            for comp in 0..k {
                for dim in 0..d {
                    let (m, v) = sample_cell(bank.cell(c, comp, dim), &mut rng);
                    means.push(m);
                    variances.push(v);
                }
            }
            ClassGmm::from_draws(c as u32, bank.frozen_weights(c).to_vec(), means, variances)
                .expect("bank invariants guarantee a valid mixture")
        })
        .collect();
    GmmParameterSample {
        model: GmmClassifier::new(classes).expect("bank shape is consistent"),
    }
}

/// `n_samples` independent draws; member `i` uses sub-seed `derive_seed(rng_seed, i)`.
pub fn sample_ensemble(
    bank: &NigPosteriorBank,
    n_samples: usize,
    rng_seed: u64,
) -> Result<Vec<GmmParameterSample>> {
    if n_samples == 0 {
        return Err(Error::invalid("ensemble size must be at least 1"));
    }
    Ok((0..n_samples)
        .map(|i| sample_parameters(bank, derive_seed(rng_seed, i as u64)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ComponentStats;
    use rand::Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn no_data_keeps_prior() {
        let prior = NigParams::new(0.1, 3.0, 2.5, 0.7).unwrap();
        let post = update_posterior(&prior, &CellStats::EMPTY).unwrap();
        assert_eq!(post, prior);
    }

    #[test]
    fn single_observation_hand_case() {
        let prior = NigParams::new(0.0, 1.0, 1.0, 1.0).unwrap();
        let post = update_posterior(&prior, &CellStats { n: 1.0, mean: 4.0, sq_dev: 0.0 }).unwrap();
        assert_eq!(post, NigParams { mu: 2.0, kappa: 2.0, alpha: 1.5, beta: 5.0 });
    }

    #[test]
    fn rejects_negative_statistics() {
        let prior = NigParams::default();
        for s in [
            CellStats { n: -1.0, mean: 0.0, sq_dev: 0.0 },
            CellStats { n: 1.0, mean: 0.0, sq_dev: -0.5 },
        ] {
            assert!(matches!(update_posterior(&prior, &s), Err(Error::InvalidStatistics(_))));
        }
        assert!(NigParams::new(0.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn large_sample_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal = Normal::new(3.0, 2.0).unwrap();
        let xs: Vec<f64> = (0..1_000_000).map(|_| normal.sample(&mut rng)).collect();
        let post = update_posterior(&NigParams::default(), &CellStats::from_samples(&xs)).unwrap();
        assert!((post.mu - 3.0).abs() < 0.01);
        assert!(close(post.beta / (post.alpha - 1.0), 4.0, 0.02));
        assert!(close(post.beta / post.alpha, 4.0, 0.02));
    }

    #[test]
    fn sequential_equals_pooled() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let prior = NigParams::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(0.1..10.0),
                rng.random_range(0.5..10.0),
                rng.random_range(0.1..10.0),
            )
            .unwrap();
            let a = CellStats { n: rng.random_range(0.0..50.0), mean: rng.random_range(-5.0..5.0), sq_dev: rng.random_range(0.0..20.0) };
            let b = CellStats { n: rng.random_range(0.0..50.0), mean: rng.random_range(-5.0..5.0), sq_dev: rng.random_range(0.0..20.0) };
            let seq = update_posterior(&update_posterior(&prior, &a).unwrap(), &b).unwrap();
            let pooled = update_posterior(&prior, &a.merge(&b)).unwrap();
            assert!(close(seq.mu, pooled.mu, 1e-12));
            assert!(close(seq.kappa, pooled.kappa, 1e-12));
            assert!(close(seq.alpha, pooled.alpha, 1e-12));
            assert!(close(seq.beta, pooled.beta, 1e-12));
        }
    }

    fn one_cell_bank(cell: NigParams) -> NigPosteriorBank {
        NigPosteriorBank::from_parts(1, 1, 1, vec![cell], vec![1.0]).unwrap()
    }

    #[test]
    fn sampling_is_seeded() {
        let bank = one_cell_bank(NigParams::new(1.0, 5.0, 3.0, 4.0).unwrap());
        assert_eq!(sample_parameters(&bank, 9), sample_parameters(&bank, 9));
        assert_ne!(sample_parameters(&bank, 9), sample_parameters(&bank, 10));
    }

    #[test]
    fn cell_moments() {
        let cell = NigParams::new(1.5, 2.0, 3.0, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let draws: Vec<(f64, f64)> = (0..n).map(|_| sample_cell(&cell, &mut rng)).collect();
        let mean_var = draws.iter().map(|d| d.1).sum::<f64>() / n as f64;
        let mean_mu = draws.iter().map(|d| d.0).sum::<f64>() / n as f64;
        assert!((mean_var - 2.0).abs() < 0.06, "{mean_var}");
        // Var(μ) = E[σ²]/κ = 1
        let se = (1.0f64 / n as f64).sqrt();
        assert!((mean_mu - 1.5).abs() < 3.0 * se, "{mean_mu}");
        assert!(draws.iter().all(|d| d.1 > 0.0));
    }

    #[test]
    fn huge_kappa_pins_mean() {
        let cell = NigParams::new(-0.25, 1e9, 3.0, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let (m, _) = sample_cell(&cell, &mut rng);
            assert!((m + 0.25).abs() < 1e-3);
        }
    }

    #[test]
    fn ensemble_sizes_and_distinct_members() {
        let bank = one_cell_bank(NigParams::new(0.0, 1.0, 3.0, 2.0).unwrap());
        assert!(sample_ensemble(&bank, 0, 1).is_err());
        assert_eq!(sample_ensemble(&bank, 1, 1).unwrap().len(), 1);
        let ens = sample_ensemble(&bank, DEFAULT_ENSEMBLE_SIZE, 1).unwrap();
        assert_eq!(ens.len(), 20);
        for i in 0..ens.len() {
            for j in i + 1..ens.len() {
                assert_ne!(ens[i], ens[j]);
            }
        }
    }

    #[test]
    fn predictive_symmetry_and_normal_limit() {
        let cell = NigParams::new(0.7, 2.0, 3.5, 1.2).unwrap();
        for a in [0.1, 1.0, 7.5] {
            let l = posterior_predictive_logpdf(&cell, 0.7 + a);
            let r = posterior_predictive_logpdf(&cell, 0.7 - a);
            assert!((l - r).abs() < 1e-12);
        }
        // α → ∞ with β/α = σ² → N(μ, σ²(κ+1)/κ)
        let sigma2 = 1.7;
        let alpha = 1e6;
        let cell = NigParams::new(0.3, 4.0, alpha, sigma2 * alpha).unwrap();
        let var = sigma2 * 5.0 / 4.0;
        for x in [-2.0, 0.3, 1.1, 4.0] {
            let normal = -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - 0.3f64).powi(2) / (2.0 * var);
            assert!((posterior_predictive_logpdf(&cell, x) - normal).abs() < 1e-3);
        }
    }

    #[test]
    fn bank_from_model_and_stats() {
        let gmm = ClassGmm::new(0, vec![1.0], vec![0.0], vec![1.0]).unwrap();
        let model = GmmClassifier::new(vec![gmm]).unwrap();
        let prior = NigParams::default();
        let cs = ComponentStats::new(1, 1, vec![4.0], vec![2.0], vec![3.0]).unwrap();
        let stats = SufficientStats::new(vec![cs]).unwrap();
        let bank = build_bank(&model, &stats, &prior).unwrap();
        let direct = update_posterior(&prior, &CellStats { n: 4.0, mean: 2.0, sq_dev: 3.0 }).unwrap();
        assert_eq!(bank.cell(0, 0, 0), &direct);
        assert_eq!(bank.frozen_weights(0), &[1.0]);

        let empty = SufficientStats::new(vec![ComponentStats::empty(1, 1)]).unwrap();
        assert_eq!(build_bank(&model, &empty, &prior).unwrap().cell(0, 0, 0), &prior);

        let wrong = SufficientStats::new(vec![ComponentStats::empty(2, 1)]).unwrap();
        assert!(matches!(build_bank(&model, &wrong, &prior), Err(Error::Shape(_))));
    }
}
