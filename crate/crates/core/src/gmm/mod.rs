//! Class-conditional diagonal-covariance Gaussian mixtures.
//!
//! Each semantic class `c` owns a mixture `p(z | c) = Σ_k π_k N(z | μ_k, diag σ²_k)`.
//! With a uniform class prior the class posterior is the normalized
//! class-conditional density, and prediction is its argmax.

mod codec;
mod em;

pub use em::{class_seed, em_fit, fit_classes, ClassFitSummary, ClassifierFit, EmConfig, EmFit};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math::{argmax_lowest, normalize_log_probs};

/// Smallest variance any fitted component may have.
pub const VARIANCE_FLOOR: f64 = 1e-6;

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Mixture for one class. Means and variances are K×D, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGmm {
    class_id: u32,
    components: usize,
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    // ln π_k − ½ Σ_d ln(2π σ²_kd)
    log_norm: Vec<f64>,
    inv_var: Vec<f64>,
}

impl ClassGmm {
    /// Point-estimate mixture; every variance must be at least [`VARIANCE_FLOOR`].
    pub fn new(class_id: u32, weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        Self::build(class_id, weights, means, variances, VARIANCE_FLOOR)
    }

    /// Mixture built from posterior draws: variances only need to be positive.
    pub(crate) fn from_draws(
        class_id: u32,
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        Self::build(class_id, weights, means, variances, f64::MIN_POSITIVE)
    }

    fn build(
        class_id: u32,
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
        min_variance: f64,
    ) -> Result<Self> {
        let components = weights.len();
        if components == 0 {
            return Err(Error::shape("mixture needs at least one component"));
        }
        if means.is_empty() || !means.len().is_multiple_of(components) {
            return Err(Error::shape(format!(
                "{} mean entries do not form {components} rows",
                means.len()
            )));
        }
        let dim = means.len() / components;
        if variances.len() != means.len() {
            return Err(Error::shape(format!(
                "variances have {} entries, means have {}",
                variances.len(),
                means.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("mixture weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("component means must be finite"));
        }
        if let Some(v) = variances
            .iter()
            .find(|v| !(v.is_finite() && **v >= min_variance))
        {
            return Err(Error::invalid(format!(
                "component variance {v} below floor {min_variance}"
            )));
        }

        let inv_var: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
        let log_norm = (0..components)
            .map(|k| {
                let log_det: f64 = variances[k * dim..(k + 1) * dim]
                    .iter()
                    .map(|v| (2.0 * PI * v).ln())
                    .sum();
                weights[k].ln() - 0.5 * log_det
            })
            .collect();
        Ok(Self {
            class_id,
            components,
            dim,
            weights,
            means,
            variances,
            log_norm,
            inv_var,
        })
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn variance(&self, k: usize) -> &[f64] {
        &self.variances[k * self.dim..(k + 1) * self.dim]
    }

    /// `ln π_k + ln N(z | μ_k, σ²_k)` for one component.
    pub(crate) fn component_log_density(&self, k: usize, z: &[f64]) -> f64 {
        let mu = self.mean(k);
        let iv = &self.inv_var[k * self.dim..(k + 1) * self.dim];
        let quad: f64 = z
            .iter()
            .zip(mu)
            .zip(iv)
            .map(|((z, m), iv)| {
                let d = z - m;
                d * d * iv
            })
            .sum();
        self.log_norm[k] - 0.5 * quad
    }

    pub(crate) fn log_density_unchecked(&self, z: &[f64]) -> f64 {
        // streaming log-sum-exp over components
        let mut max = f64::NEG_INFINITY;
        let mut acc = 0.0;
        for k in 0..self.components {
            let t = self.component_log_density(k, z);
            if t == f64::NEG_INFINITY {
                continue;
            }
            if t > max {
                acc = acc * (max - t).exp() + 1.0;
                max = t;
            } else {
                acc += (t - max).exp();
            }
        }
        max + acc.ln()
    }

    /// `ln p(z | c)`.
    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z)?;
        Ok(self.log_density_unchecked(z))
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::shape(format!(
                "feature has {} dimensions, model expects {}",
                z.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// C class mixtures sharing D and K; class ids are `0..C` in order.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmClassifier {
    classes: Vec<ClassGmm>,
    dim: usize,
    components: usize,
}

impl GmmClassifier {
    pub fn new(classes: Vec<ClassGmm>) -> Result<Self> {
        let first = classes
            .first()
            .ok_or_else(|| Error::shape("classifier needs at least one class"))?;
        let (dim, components) = (first.dim, first.components);
        for (i, g) in classes.iter().enumerate() {
            if g.dim != dim || g.components != components {
                return Err(Error::shape(format!(
                    "class {} has K={} D={}, expected K={components} D={dim}",
                    g.class_id, g.components, g.dim
                )));
            }
            if g.class_id as usize != i {
                return Err(Error::shape(format!(
                    "class at position {i} has id {}",
                    g.class_id
                )));
            }
        }
        Ok(Self {
            classes,
            dim,
            components,
        })
    }

    pub fn classes(&self) -> &[ClassGmm] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub(crate) fn log_densities_into(&self, z: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.classes.iter().map(|g| g.log_density_unchecked(z)));
    }

    pub fn log_densities(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        let mut out = Vec::with_capacity(self.classes.len());
        self.log_densities_into(z, &mut out);
        Ok(out)
    }

    /// `p(c | z)` under a uniform class prior.
    pub fn class_posterior(&self, z: &[f64]) -> Result<Vec<f64>> {
        let logs = self.log_densities(z)?;
        let mut out = Vec::with_capacity(logs.len());
        normalize_log_probs(&logs, &mut out);
        Ok(out)
    }

    /// Class with the highest density; ties go to the lowest id.
    pub fn predict(&self, z: &[f64]) -> Result<u32> {
        let logs = self.log_densities(z)?;
        Ok(argmax_lowest(&logs) as u32)
    }

    pub(crate) fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::shape(format!(
                "feature has {} dimensions, model expects {}",
                z.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(class_id: u32, mean: f64) -> ClassGmm {
        ClassGmm::new(class_id, vec![1.0], vec![mean], vec![1.0]).unwrap()
    }

    fn naive_density(g: &ClassGmm, z: &[f64]) -> f64 {
        (0..g.components())
            .map(|k| {
                let mut p = g.weights()[k];
                for ((&x, &m), &v) in z.iter().zip(g.mean(k)).zip(g.variance(k)) {
                    p *= (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
                }
                p
            })
            .sum()
    }

    #[test]
    fn standard_normal_at_zero() {
        let g = unit(0, 0.0);
        assert!((g.log_density(&[0.0]).unwrap() - (-0.918_938_533_204_672_7)).abs() < 1e-12);
        let twin = ClassGmm::new(0, vec![0.5, 0.5], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!((twin.log_density(&[0.0]).unwrap() - (-0.918_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn random_instance_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let w0: f64 = rng.random_range(0.05..0.95);
            let means: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let vars: Vec<f64> = (0..6).map(|_| rng.random_range(0.3..3.0)).collect();
            let g = ClassGmm::new(0, vec![w0, 1.0 - w0], means, vars).unwrap();
            let z: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let naive = naive_density(&g, &z).ln();
            let got = g.log_density(&z).unwrap();
            assert!(((got - naive) / naive).abs() < 1e-10, "{got} vs {naive}");
        }
    }

    #[test]
    fn far_point_stays_finite() {
        let g = ClassGmm::new(0, vec![1.0], vec![0.0], vec![VARIANCE_FLOOR]).unwrap();
        let ll = g.log_density(&[1e6]).unwrap();
        assert!(ll.is_finite());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ClassGmm::new(0, vec![0.6, 0.6], vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(ClassGmm::new(0, vec![1.0], vec![0.0], vec![1e-7]).is_err());
        assert!(ClassGmm::new(0, vec![1.0], vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(unit(0, 0.0).log_density(&[0.0, 1.0]).is_err());
        assert!(GmmClassifier::new(vec![unit(1, 0.0)]).is_err());
        let two_d = ClassGmm::new(1, vec![1.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(GmmClassifier::new(vec![unit(0, 0.0), two_d]).is_err());
    }

    #[test]
    fn posterior_symmetry_cases() {
        let m = GmmClassifier::new(vec![unit(0, 0.0), unit(1, 0.0)]).unwrap();
        assert_eq!(m.class_posterior(&[1.3]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(m.predict(&[1.3]).unwrap(), 0);

        let many = GmmClassifier::new((0..20).map(|c| unit(c, 0.0)).collect()).unwrap();
        for p in many.class_posterior(&[0.4]).unwrap() {
            assert!((p - 0.05).abs() < 1e-15);
        }

        let m = GmmClassifier::new(vec![unit(0, 0.0), unit(1, 4.0)]).unwrap();
        let post = m.class_posterior(&[2.0]).unwrap();
        assert!((post[0] - 0.5).abs() < 1e-12 && (post[1] - 0.5).abs() < 1e-12);
        assert_eq!(m.predict(&[0.0]).unwrap(), 0);
        assert_eq!(m.predict(&[3.9]).unwrap(), 1);
    }

    proptest! {
        #[test]
        fn posterior_is_probability_vector(
            means in proptest::collection::vec(-5.0f64..5.0, 2..8),
            z in -50.0f64..50.0,
        ) {
            let classes = means.iter().enumerate().map(|(c, &m)| unit(c as u32, m)).collect();
            let model = GmmClassifier::new(classes).unwrap();
            let post = model.class_posterior(&[z]).unwrap();
            prop_assert!(post.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn argmax_invariant_to_shift(
            logs in proptest::collection::vec(-1000i32..1000, 1..10),
            shift in -100_000i32..100_000,
        ) {
            // integer-valued logs keep the shift exact
            let logs: Vec<f64> = logs.into_iter().map(f64::from).collect();
            let shifted: Vec<f64> = logs.iter().map(|l| l + f64::from(shift)).collect();
            prop_assert_eq!(argmax_lowest(&logs), argmax_lowest(&shifted));
        }
    }
}
