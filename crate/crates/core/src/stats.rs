//! Responsibility-weighted sufficient statistics: the bridge between EM and
//! the conjugate updates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Statistics of one (component, dimension) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    /// Effective (responsibility-weighted) count.
    pub n: f64,
    /// Weighted mean; irrelevant when `n == 0`.
    pub mean: f64,
    /// Weighted sum of squared deviations from `mean`.
    pub sq_dev: f64,
}

impl CellStats {
    pub const EMPTY: CellStats = CellStats {
        n: 0.0,
        mean: 0.0,
        sq_dev: 0.0,
    };

    /// Unweighted statistics of a batch of observations.
    pub fn from_samples(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::EMPTY;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sq_dev = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        Self { n, mean, sq_dev }
    }

    /// Pooled statistics of two disjoint batches (Chan et al. merge).
    pub fn merge(&self, other: &CellStats) -> CellStats {
        if self.n == 0.0 {
            return *other;
        }
        if other.n == 0.0 {
            return *self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        CellStats {
            n,
            mean: self.mean + delta * other.n / n,
            sq_dev: self.sq_dev + other.sq_dev + delta * delta * self.n * other.n / n,
        }
    }
}

/// Per-class statistics: counts per component, means and squared deviations
/// per (component, dimension), row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    components: usize,
    dim: usize,
    counts: Vec<f64>,
    means: Vec<f64>,
    sq_devs: Vec<f64>,
}

impl ComponentStats {
    pub fn new(
        components: usize,
        dim: usize,
        counts: Vec<f64>,
        means: Vec<f64>,
        sq_devs: Vec<f64>,
    ) -> Result<Self> {
        if counts.len() != components || means.len() != components * dim || sq_devs.len() != components * dim {
            return Err(Error::shape(format!(
                "statistics do not match K={components}, D={dim}"
            )));
        }
        if counts.iter().chain(&sq_devs).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidStatistics(
                "counts and squared deviations must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            components,
            dim,
            counts,
            means,
            sq_devs,
        })
    }

    /// All-zero statistics.
    pub fn empty(components: usize, dim: usize) -> Self {
        Self {
            components,
            dim,
            counts: vec![0.0; components],
            means: vec![0.0; components * dim],
            sq_devs: vec![0.0; components * dim],
        }
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn component_means(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn component_sq_devs(&self, k: usize) -> &[f64] {
        &self.sq_devs[k * self.dim..(k + 1) * self.dim]
    }

    pub fn cell(&self, k: usize, d: usize) -> CellStats {
        CellStats {
            n: self.counts[k],
            mean: self.means[k * self.dim + d],
            sq_dev: self.sq_devs[k * self.dim + d],
        }
    }
}

/// Statistics for every class of a classifier, indexed by class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    classes: Vec<ComponentStats>,
}

impl SufficientStats {
    pub fn new(classes: Vec<ComponentStats>) -> Result<Self> {
        if let Some(first) = classes.first() {
            if classes
                .iter()
                .any(|c| c.components != first.components || c.dim != first.dim)
            {
                return Err(Error::shape("per-class statistics disagree on K or D"));
            }
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[ComponentStats] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn merge_equals_pooled(
            a in proptest::collection::vec(-100.0f64..100.0, 0..30),
            b in proptest::collection::vec(-100.0f64..100.0, 0..30),
        ) {
            let merged = CellStats::from_samples(&a).merge(&CellStats::from_samples(&b));
            let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
            let direct = CellStats::from_samples(&pooled);
            prop_assert!((merged.n - direct.n).abs() < 1e-12);
            prop_assert!((merged.mean - direct.mean).abs() < 1e-9);
            prop_assert!((merged.sq_dev - direct.sq_dev).abs() < 1e-7 * (1.0 + direct.sq_dev));
        }
    }

    #[test]
    fn rejects_negative_counts() {
        assert!(matches!(
            ComponentStats::new(1, 1, vec![-1.0], vec![0.0], vec![0.0]),
            Err(Error::InvalidStatistics(_))
        ));
    }
}
