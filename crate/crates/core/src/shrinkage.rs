//! Pointwise shrinkage rules `delta(d, lambda)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dwt::CoefficientTree;
use crate::error::{Error, Result};
use crate::threshold::ThresholdField;

/// Default SCAD shape parameter.
pub const DEFAULT_SCAD_A: f64 = 3.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShrinkageKind {
    Hard,
    Soft,
    Scad,
}

impl FromStr for ShrinkageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hard" => Ok(Self::Hard),
            "soft" => Ok(Self::Soft),
            "scad" => Ok(Self::Scad),
            other => Err(Error::Config(format!("unknown shrinkage rule `{other}` (expected hard, soft or scad)"))),
        }
    }
}

impl fmt::Display for ShrinkageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Hard => "hard",
            Self::Soft => "soft",
            Self::Scad => "scad",
        })
    }
}

/// A shrinkage function together with its shape parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageRule {
    kind: ShrinkageKind,
    scad_a: f64,
}

impl ShrinkageRule {
    pub fn hard() -> Self {
        Self { kind: ShrinkageKind::Hard, scad_a: DEFAULT_SCAD_A }
    }

    pub fn soft() -> Self {
        Self { kind: ShrinkageKind::Soft, scad_a: DEFAULT_SCAD_A }
    }

    pub fn scad() -> Self {
        Self { kind: ShrinkageKind::Scad, scad_a: DEFAULT_SCAD_A }
    }

    /// SCAD with a custom `a`; `a` must exceed 2.
    pub fn scad_with(a: f64) -> Result<Self> {
        Self::new(ShrinkageKind::Scad, a)
    }

    pub fn new(kind: ShrinkageKind, scad_a: f64) -> Result<Self> {
        let rule = Self { kind, scad_a };
        rule.validate()?;
        Ok(rule)
    }

    pub fn kind(&self) -> ShrinkageKind {
        self.kind
    }

    pub fn scad_a(&self) -> f64 {
        self.scad_a
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scad_a > 2.0) || !self.scad_a.is_finite() {
            return Err(Error::Config(format!("SCAD parameter a must be finite and > 2, got {}", self.scad_a)));
        }
        Ok(())
    }

    /// Shrinks a single coefficient.
    pub fn apply(&self, d: f64, lambda: f64) -> Result<f64> {
        self.validate()?;
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!("threshold must be >= 0, got {lambda}")));
        }
        if !d.is_finite() {
            return Err(Error::Domain(format!("coefficient must be finite, got {d}")));
        }
        Ok(self.shrink(d, lambda))
    }

    /// Unchecked evaluation; callers guarantee `lambda >= 0` and a valid rule.
    #[inline]
    pub(crate) fn shrink(&self, d: f64, lambda: f64) -> f64 {
        let x = d.abs();
        match self.kind {
            ShrinkageKind::Hard => {
                if x > lambda {
                    d
                } else {
                    0.0
                }
            }
            ShrinkageKind::Soft => soft(d, lambda),
            ShrinkageKind::Scad => {
                let a = self.scad_a;
                if x <= 2.0 * lambda {
                    soft(d, lambda)
                } else if x <= a * lambda {
                    ((a - 1.0) * d - a * lambda * d.signum()) / (a - 2.0)
                } else {
                    d
                }
            }
        }
    }
}

impl Default for ShrinkageRule {
    fn default() -> Self {
        Self::scad()
    }
}

impl fmt::Display for ShrinkageRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ShrinkageKind::Scad if self.scad_a != DEFAULT_SCAD_A => write!(f, "scad(a={})", self.scad_a),
            kind => write!(f, "{kind}"),
        }
    }
}

#[inline]
fn soft(d: f64, lambda: f64) -> f64 {
    let x = d.abs() - lambda;
    if x > 0.0 {
        x.copysign(d)
    } else {
        0.0
    }
}

/// Shrinks every detail coefficient at levels `j >= j0`; the scaling
/// coefficient and coarser levels pass through untouched.
pub fn apply_vector(
    rule: &ShrinkageRule,
    tree: &CoefficientTree,
    lambdas: &ThresholdField,
    j0: usize,
) -> Result<CoefficientTree> {
    rule.validate()?;
    if lambdas.levels() != tree.levels() {
        return Err(Error::Structure(format!(
            "threshold field has {} levels, tree has {}",
            lambdas.levels(),
            tree.levels()
        )));
    }
    let mut out = tree.clone();
    for j in j0..tree.levels() {
        let level_lambdas = lambdas
            .level(j)
            .ok_or_else(|| Error::Structure(format!("no thresholds for level {j}")))?;
        for (d, &lambda) in out.level_mut(j).iter_mut().zip(level_lambdas) {
            if !(lambda >= 0.0) {
                return Err(Error::Domain(format!("negative or NaN threshold {lambda} at level {j}")));
            }
            *d = rule.shrink(*d, lambda);
        }
    }
    Ok(out)
}
