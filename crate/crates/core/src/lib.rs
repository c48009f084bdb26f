//! Feature-distance metrics for evaluating generative models.
//!
//! Everything operates on precomputed feature matrices ([`FeatureSet`]):
//!
//! - [`moments`]: Gaussian summaries and the Fréchet distance.
//! - [`kernels`]: squared MMD with KID and CMMD presets.
//! - [`mixture`]: diagonal Gaussian mixtures, Monte Carlo KL and the
//!   likelihood-divergence score.
//! - [`diagnostics`]: per-vector sparsity and entropy.
//! - [`alignment`]: Kendall τ-b, exact permutation p-values, metric
//!   consistency and metric-vs-downstream alignment over quality ladders.
//! - [`synth`]: elliptical samplers, an exact discrete W2 oracle and
//!   simulated ladders with known ground truth.

pub mod alignment;
pub mod diagnostics;
pub mod error;
pub mod features;
pub mod kernels;
pub mod mixture;
pub mod moments;
pub mod numeric;
pub mod synth;

pub use error::{Error, Result};
pub use features::{FeatureMeta, FeatureSet, Preprocessing, Role};
