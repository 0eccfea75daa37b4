//! Multimodality metrics for Gaussian-mixture predictive distributions.
//!
//! The crate provides diagonal Gaussian mixtures ([`gmm`]), four scores that
//! quantify how multimodal a mixture is ([`metrics`]), a small mixture density
//! network trained with Adam ([`mdn`]), data generators with ground-truth
//! modality labels ([`datasets`]) and the experiment harnesses that tie them
//! together ([`bench`]). [`oracle`] holds slow numerical references used to
//! validate the closed forms.
//!
//! See `examples/` for one runnable program per capability.

pub mod bench;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod gmm;
pub mod mdn;
pub mod metrics;
pub mod oracle;
pub mod plot;
pub mod seed;

pub use error::{Error, Result};
pub use gmm::{EntropyEstimator, GaussianComponent, Mixture};
pub use metrics::{all_metrics, jsd, mce, semd, wakld, MetricName, MetricScores};
