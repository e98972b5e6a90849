//! Threshold selection: universal position-dependent thresholds, SURE
//! minimization for soft and SCAD shrinkage, and the hybrid scheme that
//! falls back to the universal threshold on sparse levels.
//!
//! Two coefficient scales appear here. [`universal_thresholds`] works in the
//! `M^{-1/2}`-normalized coefficient domain, where a per-sample noise
//! standard deviation `sigma_jk` becomes `sigma_jk / sqrt(M)`.
//! [`build_thresholds`] produces thresholds for the plain orthonormal
//! coefficients the estimator manipulates, which are `sqrt(M)` times larger.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dwt::CoefficientTree;
use crate::error::{Error, Result};
use crate::shrinkage::{ShrinkageKind, ShrinkageRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Universal,
    Sure,
    Hybrid,
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "universal" => Ok(Self::Universal),
            "sure" => Ok(Self::Sure),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(Error::Config(format!(
                "unknown threshold selector `{other}` (expected universal, sure or hybrid)"
            ))),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Universal => "universal",
            Self::Sure => "sure",
            Self::Hybrid => "hybrid",
        })
    }
}

/// Which standard error the thresholds are scaled by.
///
/// `Averaged` divides the per-sample noise level by `sqrt(N)`, matching the
/// variance of the averaged coefficients. `PerSample` keeps the per-sample
/// level, i.e. thresholds as if a single curve had been observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseScale {
    #[default]
    Averaged,
    PerSample,
}

impl FromStr for NoiseScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "averaged" => Ok(Self::Averaged),
            "per-sample" | "per_sample" => Ok(Self::PerSample),
            other => Err(Error::Config(format!(
                "unknown noise scale `{other}` (expected averaged or per-sample)"
            ))),
        }
    }
}

impl fmt::Display for NoiseScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Averaged => "averaged",
            Self::PerSample => "per-sample",
        })
    }
}

/// Shrinkage rule, threshold selector and the levels they act on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub rule: ShrinkageRule,
    pub selector: Selector,
    /// First thresholded level.
    pub j0: usize,
    /// Multiplier on the universal threshold.
    pub scale: f64,
    pub noise_scale: NoiseScale,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            rule: ShrinkageRule::scad(),
            selector: Selector::Universal,
            j0: 3,
            scale: 1.0,
            noise_scale: NoiseScale::Averaged,
        }
    }
}

impl ThresholdPolicy {
    pub fn validate(&self, levels: usize) -> Result<()> {
        self.rule.validate()?;
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::Config(format!("threshold scale must be finite and > 0, got {}", self.scale)));
        }
        if self.j0 >= levels {
            return Err(Error::Config(format!(
                "j0 = {} must be below the number of levels J = {levels}",
                self.j0
            )));
        }
        if self.selector != Selector::Universal && self.rule.kind() == ShrinkageKind::Hard {
            return Err(Error::Config("SURE-based selectors need soft or scad shrinkage".into()));
        }
        Ok(())
    }
}

/// Per-coefficient noise variances, laid out like a [`CoefficientTree`]
/// (slot 0 holds the scaling-coefficient variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceField {
    field: CoefficientTree,
}

impl VarianceField {
    pub fn new(sigma2_c: f64, sigma2: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_tree(CoefficientTree::from_parts(sigma2_c, sigma2)?)
    }

    pub fn from_tree(field: CoefficientTree) -> Result<Self> {
        if let Some(bad) = field.as_slice().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("variances must be finite and >= 0, found {bad}")));
        }
        Ok(Self { field })
    }

    pub fn constant(levels: usize, sigma2: f64) -> Result<Self> {
        Self::from_tree(CoefficientTree::from_flat(vec![sigma2; 1 << levels])?)
    }

    pub fn levels(&self) -> usize {
        self.field.levels()
    }

    pub fn sigma2_c(&self) -> f64 {
        self.field.scaling()
    }

    pub fn level(&self, j: usize) -> &[f64] {
        self.field.level(j)
    }

    /// Largest detail variance.
    pub fn max(&self) -> f64 {
        self.field.iter_details().map(|(_, _, v)| v).fold(0.0, f64::max)
    }

    pub fn as_tree(&self) -> &CoefficientTree {
        &self.field
    }

    pub fn iter_details(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.field.iter_details()
    }
}

/// Thresholds `lambda_jk` for a subset of detail levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdField {
    levels: usize,
    values: Vec<Option<Vec<f64>>>,
}

impl ThresholdField {
    pub fn empty(levels: usize) -> Self {
        Self { levels, values: vec![None; levels] }
    }

    /// Same `value` at every position of levels `j0..levels`.
    pub fn constant(levels: usize, j0: usize, value: f64) -> Self {
        let mut field = Self::empty(levels);
        for j in j0..levels {
            field.values[j] = Some(vec![value; 1 << j]);
        }
        field
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn set_level(&mut self, j: usize, lambdas: Vec<f64>) -> Result<()> {
        if j >= self.levels || lambdas.len() != 1 << j {
            return Err(Error::Structure(format!(
                "cannot set {} thresholds on level {j} of a {}-level field",
                lambdas.len(),
                self.levels
            )));
        }
        self.values[j] = Some(lambdas);
        Ok(())
    }

    pub fn level(&self, j: usize) -> Option<&[f64]> {
        self.values.get(j).and_then(|v| v.as_deref())
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for level in self.values.iter_mut().flatten() {
            level.iter_mut().for_each(|v| *v *= factor);
        }
        self
    }

    /// Iterates `(j, k, lambda)` over defined entries.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values.iter().enumerate().flat_map(|(j, level)| {
            level.iter().flat_map(move |l| l.iter().enumerate().map(move |(k, &v)| (j, k, v)))
        })
    }
}

fn universal_factor(m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::Domain(format!("universal threshold needs M >= 2, got {m}")));
    }
    Ok((2.0 * (m as f64).ln()).sqrt())
}

/// Universal heteroscedastic thresholds in the normalized coefficient
/// domain: `scale * sigma_jk * sqrt(2 ln M) / sqrt(M N)` for every level.
pub fn universal_thresholds(variances: &VarianceField, m: usize, n: usize, scale: f64) -> Result<ThresholdField> {
    let factor = universal_factor(m)?;
    if n == 0 {
        return Err(Error::Domain("universal threshold needs N >= 1".into()));
    }
    let denom = ((m as f64) * (n as f64)).sqrt();
    let mut field = ThresholdField::empty(variances.levels());
    for j in 0..variances.levels() {
        let lambdas = variances.level(j).iter().map(|v| scale * v.sqrt() * factor / denom).collect();
        field.set_level(j, lambdas)?;
    }
    Ok(field)
}

/// SURE for soft thresholding of unit-variance coefficients.
///
/// At `lambda == 0` the rule is the identity and the estimate is `len`.
pub fn sure_criterion_soft(lambda: f64, standardized: &[f64]) -> f64 {
    let len = standardized.len() as f64;
    if lambda == 0.0 {
        return len;
    }
    let lambda2 = lambda * lambda;
    standardized.iter().fold(len, |acc, &d| {
        let kill = if d.abs() <= lambda { 2.0 } else { 0.0 };
        acc - kill + (d * d).min(lambda2)
    })
}

/// SURE for SCAD thresholding of unit-variance coefficients, assembled as
/// `len + |g|^2 + 2 div g` with `g = delta_scad(d) - d`.
pub fn sure_criterion_scad(lambda: f64, standardized: &[f64], a: f64) -> Result<f64> {
    if !(a > 2.0) {
        return Err(Error::Config(format!("SCAD parameter a must be > 2, got {a}")));
    }
    Ok(scad_sure(lambda, standardized, a))
}

fn scad_sure(lambda: f64, standardized: &[f64], a: f64) -> f64 {
    let len = standardized.len() as f64;
    if lambda == 0.0 {
        return len;
    }
    let am2 = a - 2.0;
    standardized.iter().fold(len, |acc, &d| {
        let x = d.abs();
        let term = if x <= lambda {
            // g = -d, g' = -1
            x * x - 2.0
        } else if x <= 2.0 * lambda {
            // g = -lambda sign(d), g' = 0
            lambda * lambda
        } else if x <= a * lambda {
            // g = (d - a lambda sign(d)) / (a - 2), g' = 1 / (a - 2)
            let g = (x - a * lambda) / am2;
            g * g + 2.0 / am2
        } else {
            0.0
        };
        acc + term
    })
}

/// SURE for `rule`; hard thresholding has no SURE and is rejected.
pub fn sure_criterion(rule: &ShrinkageRule, lambda: f64, standardized: &[f64]) -> Result<f64> {
    match rule.kind() {
        ShrinkageKind::Soft => Ok(sure_criterion_soft(lambda, standardized)),
        ShrinkageKind::Scad => sure_criterion_scad(lambda, standardized, rule.scad_a()),
        ShrinkageKind::Hard => Err(Error::Config("SURE is not defined for hard thresholding".into())),
    }
}

/// Minimizes SURE over `[0, cap]` for one level of standardized coefficients.
///
/// The criterion is nondecreasing between consecutive breakpoints (left
/// closed), so its minimum is attained on the candidate set
/// `{0, cap} ∪ {breakpoints <= cap}`. Breakpoints are `|d|` for soft and
/// `|d|, |d|/2, |d|/a` for SCAD. Ties go to the smallest threshold.
pub fn sure_threshold_level(standardized: &[f64], rule: &ShrinkageRule, cap: f64) -> Result<f64> {
    if standardized.is_empty() {
        return Err(Error::Structure("cannot select a SURE threshold for an empty level".into()));
    }
    if !(cap >= 0.0) {
        return Err(Error::Domain(format!("SURE cap must be >= 0, got {cap}")));
    }
    let divisors: &[f64] = match rule.kind() {
        ShrinkageKind::Soft => &[1.0],
        ShrinkageKind::Scad => &[1.0, 2.0, rule.scad_a()],
        ShrinkageKind::Hard => return Err(Error::Config("SURE is not defined for hard thresholding".into())),
    };
    let mut candidates: Vec<f64> = standardized
        .iter()
        .flat_map(|d| divisors.iter().map(move |q| d.abs() / q))
        .filter(|&l| l > 0.0 && l <= cap)
        .collect();
    candidates.push(0.0);
    candidates.push(cap);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best = (f64::INFINITY, 0.0);
    for lambda in candidates {
        let risk = sure_criterion(rule, lambda, standardized)?;
        if risk < best.0 {
            best = (risk, lambda);
        }
    }
    Ok(best.1)
}

/// Sparsity test of the hybrid scheme on standardized level-`j`
/// coefficients: true when `sum d^2 <= 2^{j/2} (2^{j/2} + j^{3/2})`, i.e.
/// the level looks too sparse for SURE to be reliable.
pub fn sparsity_test(standardized: &[f64], j: usize) -> bool {
    let energy: f64 = standardized.iter().map(|d| d * d).sum();
    let half = 2f64.powf(j as f64 / 2.0);
    energy <= half * (half + (j as f64).powf(1.5))
}

/// How a level's thresholds were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelBranch {
    Universal,
    Sure,
    /// SURE was requested but zero-variance positions carried nonzero
    /// coefficients, so the universal threshold was used.
    ZeroVarianceFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagnostics {
    pub level: usize,
    pub branch: LevelBranch,
    /// Level threshold in standardized units, when SURE was used.
    pub sure_lambda: Option<f64>,
    pub zero_variance: usize,
    pub killed: usize,
    pub kept: usize,
}

/// Thresholds for the plain-orthonormal averaged coefficients of `replicates` curves.
///
/// The standard error of `averaged_jk` is `sqrt(v_jk / N)` (or `sqrt(v_jk)`
/// for [`NoiseScale::PerSample`]), where `v_jk` is the per-sample variance.
pub fn build_thresholds(
    averaged: &CoefficientTree,
    variances: &VarianceField,
    replicates: usize,
    policy: &ThresholdPolicy,
) -> Result<(ThresholdField, Vec<LevelDiagnostics>)> {
    let levels = averaged.levels();
    if variances.levels() != levels {
        return Err(Error::Structure(format!(
            "variance field has {} levels, coefficients have {levels}",
            variances.levels()
        )));
    }
    policy.validate(levels)?;
    if replicates == 0 {
        return Err(Error::Domain("need at least one replicate".into()));
    }
    let m = averaged.len();
    let effective_n = match policy.noise_scale {
        NoiseScale::Averaged => replicates,
        NoiseScale::PerSample => 1,
    };
    let universal = universal_thresholds(variances, m, effective_n, policy.scale)?.scaled((m as f64).sqrt());

    let mut field = ThresholdField::empty(levels);
    let mut diagnostics = Vec::with_capacity(levels - policy.j0);
    for j in policy.j0..levels {
        let universal_level = universal.level(j).expect("universal field covers every level").to_vec();
        let coeffs = averaged.level(j);
        let se: Vec<f64> = variances.level(j).iter().map(|v| (v / effective_n as f64).sqrt()).collect();
        let zero_variance = se.iter().filter(|&&s| s == 0.0).count();
        let mut diag = LevelDiagnostics {
            level: j,
            branch: LevelBranch::Universal,
            sure_lambda: None,
            zero_variance,
            killed: 0,
            kept: 0,
        };

        if policy.selector == Selector::Universal {
            field.set_level(j, universal_level)?;
            diagnostics.push(diag);
            continue;
        }

        let degenerate = coeffs.iter().zip(&se).any(|(&d, &s)| s == 0.0 && d != 0.0);
        if degenerate {
            diag.branch = LevelBranch::ZeroVarianceFallback;
            field.set_level(j, universal_level)?;
            diagnostics.push(diag);
            continue;
        }

        let standardized: Vec<f64> =
            coeffs.iter().zip(&se).map(|(&d, &s)| if s == 0.0 { 0.0 } else { d / s }).collect();
        if policy.selector == Selector::Hybrid && sparsity_test(&standardized, j) {
            field.set_level(j, universal_level)?;
            diagnostics.push(diag);
            continue;
        }

        let cap = universal_factor(1 << j).unwrap_or(0.0);
        let lambda = sure_threshold_level(&standardized, &policy.rule, cap)?;
        diag.branch = LevelBranch::Sure;
        diag.sure_lambda = Some(lambda);
        field.set_level(j, se.iter().map(|s| lambda * s).collect())?;
        diagnostics.push(diag);
    }
    Ok((field, diagnostics))
}
