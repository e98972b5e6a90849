//! Mean-curve estimation from a panel of replicate curves.
//!
//! Three strategies are provided: pointwise averaging, denoising each curve
//! and averaging the results, and averaging in the coefficient domain before
//! thresholding once. The last one is the main estimator; with
//! [`VarianceMode::Heteroscedastic`] its thresholds follow per-coefficient
//! empirical variances computed across replicates.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dwt::{self, CoefficientTree, WaveletFilter};
use crate::error::{Error, Result};
use crate::shrinkage::apply_vector;
use crate::threshold::{build_thresholds, LevelDiagnostics, ThresholdField, ThresholdPolicy, VarianceField};

/// Consistency constant of the MAD for Gaussian data.
pub const MAD_CONSTANT: f64 = 0.6745;

/// `N` replicate curves sampled on a shared grid of `M = 2^J` points.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePanel {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl CurvePanel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::Structure(format!(
                "row {i} has {} values, expected {m}",
                rows[i].len()
            )));
        }
        Self::from_flat(rows.into_iter().flatten().collect(), n, m)
    }

    /// Row-major `n x m` data.
    pub fn from_flat(data: Vec<f64>, n: usize, m: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Structure("a panel needs at least one curve".into()));
        }
        if data.len() != n * m {
            return Err(Error::Structure(format!("{} values for a {n} x {m} panel", data.len())));
        }
        let levels = dwt::dyadic_levels(m)?;
        if levels == 0 {
            return Err(Error::InvalidLength { len: m });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { n, m, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn levels(&self) -> usize {
        self.m.trailing_zeros() as usize
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.m)
    }

    /// Forward transform of every row.
    pub fn transform(&self, filter: WaveletFilter) -> Result<Vec<CoefficientTree>> {
        self.data.par_chunks_exact(self.m).map(|row| dwt::forward(row, filter)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarianceMode {
    /// Per-coefficient empirical variances across replicates.
    #[serde(rename = "het")]
    Heteroscedastic,
    /// A single noise level: mean over curves of the finest-level MAD.
    #[serde(rename = "mad")]
    HomoscedasticMad,
}

impl FromStr for VarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "het" | "heteroscedastic" => Ok(Self::Heteroscedastic),
            "mad" | "homoscedastic" => Ok(Self::HomoscedasticMad),
            other => Err(Error::Config(format!("unknown variance mode `{other}` (expected het or mad)"))),
        }
    }
}

impl fmt::Display for VarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Heteroscedastic => "het",
            Self::HomoscedasticMad => "mad",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    AverageThenShrink,
    ShrinkThenAverage,
    PointwiseAverage,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "average-then-shrink" | "ats" => Ok(Self::AverageThenShrink),
            "shrink-then-average" | "sta" => Ok(Self::ShrinkThenAverage),
            "pointwise-average" | "pointwise" => Ok(Self::PointwiseAverage),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}` (expected average-then-shrink, shrink-then-average or pointwise-average)"
            ))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AverageThenShrink => "average-then-shrink",
            Self::ShrinkThenAverage => "shrink-then-average",
            Self::PointwiseAverage => "pointwise-average",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub mu_hat: Vec<f64>,
    pub tree_hat: CoefficientTree,
    /// Per-sample coefficient variances that drove the thresholds.
    pub variances: Option<VarianceField>,
    /// Thresholds applied to the averaged coefficients.
    pub thresholds: Option<ThresholdField>,
    pub diagnostics: Vec<LevelDiagnostics>,
    /// Mean MAD noise estimate, when the homoscedastic mode was used.
    pub sigma_mad: Option<f64>,
}

fn check_trees(trees: &[CoefficientTree]) -> Result<usize> {
    let first = trees.first().ok_or_else(|| Error::Structure("no coefficient trees".into()))?;
    let levels = first.levels();
    if let Some(i) = trees.iter().position(|t| t.levels() != levels) {
        return Err(Error::Structure(format!(
            "tree {i} has {} levels, expected {levels}",
            trees[i].levels()
        )));
    }
    Ok(levels)
}

/// Elementwise mean of the trees, accumulated in input order.
pub fn mean_tree(trees: &[CoefficientTree]) -> Result<CoefficientTree> {
    let levels = check_trees(trees)?;
    let mut sum = vec![0.0; 1 << levels];
    for tree in trees {
        for (acc, &c) in sum.iter_mut().zip(tree.as_slice()) {
            *acc += c;
        }
    }
    let n = trees.len() as f64;
    sum.iter_mut().for_each(|v| *v /= n);
    CoefficientTree::from_flat(sum)
}

/// Unbiased sample variance across replicates at every coefficient.
pub fn estimate_variances(trees: &[CoefficientTree]) -> Result<VarianceField> {
    let levels = check_trees(trees)?;
    if trees.len() < 2 {
        return Err(Error::InsufficientReplicates { n: trees.len() });
    }
    let mean = mean_tree(trees)?;
    let mut ss = vec![0.0; 1 << levels];
    for tree in trees {
        for ((acc, &c), &mu) in ss.iter_mut().zip(tree.as_slice()).zip(mean.as_slice()) {
            let r = c - mu;
            *acc += r * r;
        }
    }
    let denom = (trees.len() - 1) as f64;
    ss.iter_mut().for_each(|v| *v /= denom);
    VarianceField::from_tree(CoefficientTree::from_flat(ss)?)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let len = values.len();
    if len % 2 == 1 {
        values[len / 2]
    } else {
        0.5 * (values[len / 2 - 1] + values[len / 2])
    }
}

/// Median absolute deviation (about the median) of `values`, divided by 0.6745.
pub fn mad_sigma(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut work = values.to_vec();
    let center = median(&mut work);
    work.iter_mut().for_each(|v| *v = (*v - center).abs());
    median(&mut work) / MAD_CONSTANT
}

/// Mean over curves of each curve's finest-level MAD noise estimate.
pub fn estimate_sigma_mad(trees: &[CoefficientTree]) -> Result<f64> {
    let levels = check_trees(trees)?;
    if levels == 0 {
        return Ok(0.0);
    }
    let total: f64 = trees.iter().map(|t| mad_sigma(t.level(levels - 1))).sum();
    Ok(total / trees.len() as f64)
}

fn count_killed(result: &mut [LevelDiagnostics], shrunk: &CoefficientTree) {
    for diag in result.iter_mut() {
        let level = shrunk.level(diag.level);
        diag.killed = level.iter().filter(|&&c| c == 0.0).count();
        diag.kept = level.len() - diag.killed;
    }
}

/// Average-then-shrink on a panel given in the time domain.
pub fn average_then_shrink(
    panel: &CurvePanel,
    filter: WaveletFilter,
    policy: &ThresholdPolicy,
    mode: VarianceMode,
) -> Result<EstimateResult> {
    let trees = panel.transform(filter)?;
    average_then_shrink_coefficients(&trees, filter, policy, mode)
}

/// Average-then-shrink on replicate coefficient trees (all from `filter`).
pub fn average_then_shrink_coefficients(
    trees: &[CoefficientTree],
    filter: WaveletFilter,
    policy: &ThresholdPolicy,
    mode: VarianceMode,
) -> Result<EstimateResult> {
    let levels = check_trees(trees)?;
    policy.validate(levels)?;
    let averaged = mean_tree(trees)?;
    let (variances, sigma_mad) = match mode {
        VarianceMode::Heteroscedastic => (estimate_variances(trees)?, None),
        VarianceMode::HomoscedasticMad => {
            let sigma = estimate_sigma_mad(trees)?;
            (VarianceField::constant(levels, sigma * sigma)?, Some(sigma))
        }
    };
    let (thresholds, mut diagnostics) = build_thresholds(&averaged, &variances, trees.len(), policy)?;
    let tree_hat = apply_vector(&policy.rule, &averaged, &thresholds, policy.j0)?;
    count_killed(&mut diagnostics, &tree_hat);
    let mu_hat = dwt::inverse(&tree_hat, filter)?;
    Ok(EstimateResult {
        mu_hat,
        tree_hat,
        variances: Some(variances),
        thresholds: Some(thresholds),
        diagnostics,
        sigma_mad,
    })
}

/// Shrink-then-average on a panel given in the time domain.
pub fn shrink_then_average(
    panel: &CurvePanel,
    filter: WaveletFilter,
    policy: &ThresholdPolicy,
) -> Result<EstimateResult> {
    let trees = panel.transform(filter)?;
    shrink_then_average_coefficients(&trees, filter, policy)
}

/// Denoises every curve on its own (MAD noise level of that curve) and
/// averages the denoised curves.
pub fn shrink_then_average_coefficients(
    trees: &[CoefficientTree],
    filter: WaveletFilter,
    policy: &ThresholdPolicy,
) -> Result<EstimateResult> {
    let levels = check_trees(trees)?;
    policy.validate(levels)?;
    let per_row: Vec<(CoefficientTree, f64, Vec<LevelDiagnostics>)> = trees
        .par_iter()
        .map(|tree| {
            let sigma = mad_sigma(tree.level(levels - 1));
            let variances = VarianceField::constant(levels, sigma * sigma)?;
            let (thresholds, mut diagnostics) = build_thresholds(tree, &variances, 1, policy)?;
            let shrunk = apply_vector(&policy.rule, tree, &thresholds, policy.j0)?;
            count_killed(&mut diagnostics, &shrunk);
            Ok((shrunk, sigma, diagnostics))
        })
        .collect::<Result<_>>()?;

    let shrunk: Vec<CoefficientTree> = per_row.iter().map(|(t, _, _)| t.clone()).collect();
    let tree_hat = mean_tree(&shrunk)?;
    let mu_hat = dwt::inverse(&tree_hat, filter)?;

    let mut diagnostics = per_row[0].2.clone();
    for (_, _, row_diag) in &per_row[1..] {
        for (total, d) in diagnostics.iter_mut().zip(row_diag) {
            total.killed += d.killed;
            total.kept += d.kept;
            total.zero_variance += d.zero_variance;
        }
    }
    let mean_sigma = per_row.iter().map(|(_, s, _)| s).sum::<f64>() / per_row.len() as f64;
    let mean_var = per_row.iter().map(|(_, s, _)| s * s).sum::<f64>() / per_row.len() as f64;
    Ok(EstimateResult {
        mu_hat,
        tree_hat,
        variances: Some(VarianceField::constant(levels, mean_var)?),
        thresholds: None,
        diagnostics,
        sigma_mad: Some(mean_sigma),
    })
}

/// Pointwise mean of the curves; no shrinkage.
pub fn pointwise_average(panel: &CurvePanel, filter: WaveletFilter) -> Result<EstimateResult> {
    let n = panel.n() as f64;
    let mut mu_hat = vec![0.0; panel.m()];
    for row in panel.rows() {
        for (acc, &y) in mu_hat.iter_mut().zip(row) {
            *acc += y;
        }
    }
    mu_hat.iter_mut().for_each(|v| *v /= n);
    let tree_hat = dwt::forward(&mu_hat, filter)?;
    Ok(EstimateResult {
        mu_hat,
        tree_hat,
        variances: None,
        thresholds: None,
        diagnostics: Vec::new(),
        sigma_mad: None,
    })
}

/// Pointwise mean computed from coefficient trees.
pub fn pointwise_average_coefficients(trees: &[CoefficientTree], filter: WaveletFilter) -> Result<EstimateResult> {
    let tree_hat = mean_tree(trees)?;
    let mu_hat = dwt::inverse(&tree_hat, filter)?;
    Ok(EstimateResult {
        mu_hat,
        tree_hat,
        variances: None,
        thresholds: None,
        diagnostics: Vec::new(),
        sigma_mad: None,
    })
}

/// Runs `strategy` on replicate coefficient trees.
pub fn estimate_coefficients(
    trees: &[CoefficientTree],
    filter: WaveletFilter,
    strategy: Strategy,
    policy: &ThresholdPolicy,
    mode: VarianceMode,
) -> Result<EstimateResult> {
    match strategy {
        Strategy::AverageThenShrink => average_then_shrink_coefficients(trees, filter, policy, mode),
        Strategy::ShrinkThenAverage => shrink_then_average_coefficients(trees, filter, policy),
        Strategy::PointwiseAverage => pointwise_average_coefficients(trees, filter),
    }
}

/// Runs `strategy` on a time-domain panel.
pub fn estimate(
    panel: &CurvePanel,
    filter: WaveletFilter,
    strategy: Strategy,
    policy: &ThresholdPolicy,
    mode: VarianceMode,
) -> Result<EstimateResult> {
    match strategy {
        Strategy::AverageThenShrink => average_then_shrink(panel, filter, policy, mode),
        Strategy::ShrinkThenAverage => shrink_then_average(panel, filter, policy),
        Strategy::PointwiseAverage => pointwise_average(panel, filter),
    }
}
