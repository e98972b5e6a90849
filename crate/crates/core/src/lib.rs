//! Mean-curve estimation from `N` noisy replicate curves.
//!
//! Replicates are transformed with an orthonormal periodized Daubechies
//! wavelet transform, averaged in the coefficient domain, and thresholded
//! with position-dependent thresholds built from per-coefficient empirical
//! variances. The crate also carries the synthetic-data generator and the
//! Monte-Carlo harness used to benchmark the estimators.

// `!(x > c)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod dwt;
pub mod error;
pub mod estimator;
pub mod io;
pub mod shrinkage;
pub mod simgen;
pub mod threshold;

pub use dwt::{forward, inverse, CoefficientTree, WaveletFilter};
pub use error::{Error, Result};
pub use estimator::{
    average_then_shrink, pointwise_average, shrink_then_average, CurvePanel, EstimateResult,
    VarianceMode,
};
pub use shrinkage::{ShrinkageKind, ShrinkageRule};
pub use simgen::{MaskStructure, NoiseModel, SimulationConfig, SnrDefinition, TestFunction};
pub use threshold::{NoiseScale, Selector, ThresholdField, ThresholdPolicy, VarianceField};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
pub struct ReadmeDoctests;
