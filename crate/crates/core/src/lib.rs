//! Epistemic uncertainty from Bayesian class-conditional Gaussian mixtures,
//! applied to out-of-distribution detection in LiDAR range-view segmentation.
//!
//! The pipeline: project scans into range images ([`rangeview`]), fit one
//! diagonal GMM per class on per-pixel features ([`gmm`]), turn the EM
//! statistics into Normal–Inverse-Gamma posteriors ([`bayes`]), sample an
//! ensemble of GMMs and score each pixel by the entropy of the ensemble's
//! votes ([`ensemble`]), and evaluate with threshold-free metrics
//! ([`metrics`]). [`synth`] builds labeled feature spaces for benchmarking and
//! [`cli`] wires everything into file-driven runs.

pub mod bayes;
pub mod cli;
mod codec;
pub mod ensemble;
pub mod error;
pub mod feature_map;
pub mod gmm;
pub mod math;
pub mod metrics;
pub mod rangeview;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use feature_map::FeatureMap;
