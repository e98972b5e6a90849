//! Orthonormal periodized discrete wavelet transform (Mallat pyramid) on
//! dyadic-length signals, Daubechies extremal-phase filters.
//!
//! The transform is plain orthonormal: `forward` is an `M x M` orthogonal
//! map, so energy is preserved exactly and `inverse` is its transpose. The
//! decomposition always runs down to a single scaling coefficient.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HAAR: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

#[allow(clippy::excessive_precision)]
const DAUB2: [f64; 4] = [
    0.48296291314453414337,
    0.83651630373780790558,
    0.22414386804201338103,
    -0.12940952255126038117,
];

#[allow(clippy::excessive_precision)]
const DAUB5: [f64; 10] = [
    0.16010239797419291448,
    0.60382926979718967054,
    0.72430852843777292773,
    0.13842814590132073151,
    -0.24229488706638203186,
    -0.032244869584638374648,
    0.077571493840045713523,
    -0.0062414902127982742742,
    -0.012580751999081999469,
    0.003335725285473771278,
];

#[allow(clippy::excessive_precision)]
const DAUB7: [f64; 14] = [
    0.07785205408500917902,
    0.39653931948191730654,
    0.72913209084623511992,
    0.46978228740519312247,
    -0.14390600392856497541,
    -0.22403618499387498264,
    0.071309219266830264751,
    0.080612609151083071913,
    -0.03802993693501441358,
    -0.016574541630666880654,
    0.012550998556099840613,
    0.00042957797292136652113,
    -0.0018016407040474909153,
    0.00035371379997452024845,
];

/// Daubechies extremal-phase filter with `vanishing_moments` vanishing moments.
#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct WaveletFilter {
    vanishing_moments: usize,
    lowpass: &'static [f64],
}

impl PartialEq for WaveletFilter {
    fn eq(&self, other: &Self) -> bool {
        self.vanishing_moments == other.vanishing_moments
    }
}

impl Eq for WaveletFilter {}

impl std::hash::Hash for WaveletFilter {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.vanishing_moments.hash(state);
    }
}

impl WaveletFilter {
    pub const D1: WaveletFilter = WaveletFilter { vanishing_moments: 1, lowpass: &HAAR };
    pub const D2: WaveletFilter = WaveletFilter { vanishing_moments: 2, lowpass: &DAUB2 };
    pub const D5: WaveletFilter = WaveletFilter { vanishing_moments: 5, lowpass: &DAUB5 };
    pub const D7: WaveletFilter = WaveletFilter { vanishing_moments: 7, lowpass: &DAUB7 };

    pub const ALL: [WaveletFilter; 4] = [Self::D1, Self::D2, Self::D5, Self::D7];

    pub fn daubechies(vanishing_moments: usize) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.vanishing_moments == vanishing_moments)
            .ok_or_else(|| {
                Error::Config(format!(
                    "no embedded Daubechies filter with {vanishing_moments} vanishing moments \
                     (available: 1, 2, 5, 7)"
                ))
            })
    }

    pub fn vanishing_moments(&self) -> usize {
        self.vanishing_moments
    }

    pub fn lowpass_taps(&self) -> &'static [f64] {
        self.lowpass
    }

    /// Quadrature-mirror highpass taps, `g[n] = (-1)^n h[L-1-n]`.
    pub fn highpass_taps(&self) -> Vec<f64> {
        let len = self.lowpass.len();
        (0..len)
            .map(|n| {
                let h = self.lowpass[len - 1 - n];
                if n % 2 == 0 {
                    h
                } else {
                    -h
                }
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.lowpass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowpass.is_empty()
    }

    pub fn name(&self) -> String {
        format!("d{}", self.vanishing_moments)
    }
}

impl fmt::Debug for WaveletFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WaveletFilter(D{})", self.vanishing_moments)
    }
}

impl fmt::Display for WaveletFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for WaveletFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let unknown = || Error::Config(format!("unknown filter `{s}` (expected d1, d2, d5 or d7)"));
        let digits = lower
            .strip_prefix("db")
            .or_else(|| lower.strip_prefix('d'))
            .ok_or_else(unknown)?;
        let n: usize = digits.parse().map_err(|_| unknown())?;
        Self::daubechies(n)
    }
}

impl TryFrom<String> for WaveletFilter {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<WaveletFilter> for String {
    fn from(value: WaveletFilter) -> Self {
        value.name()
    }
}

/// Returns `J` such that `len == 2^J`, or a length error.
pub fn dyadic_levels(len: usize) -> Result<usize> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::InvalidLength { len });
    }
    Ok(len.trailing_zeros() as usize)
}

/// Wavelet coefficients of a length-`2^J` signal.
///
/// Stored flat in the usual pyramid order: index 0 holds the scaling
/// coefficient, level `j` occupies `[2^j, 2^(j+1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTree {
    levels: usize,
    coeffs: Vec<f64>,
}

impl CoefficientTree {
    pub fn zeros(levels: usize) -> Self {
        Self { levels, coeffs: vec![0.0; 1 << levels] }
    }

    /// Builds a tree from its flat pyramid layout.
    pub fn from_flat(coeffs: Vec<f64>) -> Result<Self> {
        let levels = dyadic_levels(coeffs.len())
            .map_err(|_| Error::Structure(format!("{} coefficients is not a power of two", coeffs.len())))?;
        Ok(Self { levels, coeffs })
    }

    /// Builds a tree from a scaling coefficient and ragged detail levels;
    /// `details[j]` must have exactly `2^j` entries.
    pub fn from_parts(scaling: f64, details: Vec<Vec<f64>>) -> Result<Self> {
        let levels = details.len();
        let mut coeffs = Vec::with_capacity(1 << levels);
        coeffs.push(scaling);
        for (j, level) in details.into_iter().enumerate() {
            if level.len() != 1 << j {
                return Err(Error::Structure(format!(
                    "level {j} has {} entries, expected {}",
                    level.len(),
                    1usize << j
                )));
            }
            coeffs.extend(level);
        }
        Ok(Self { levels, coeffs })
    }

    /// Number of detail levels `J`.
    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Signal length `M = 2^J`.
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scaling(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn set_scaling(&mut self, value: f64) {
        self.coeffs[0] = value;
    }

    pub fn level(&self, j: usize) -> &[f64] {
        &self.coeffs[1 << j..2 << j]
    }

    pub fn level_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.coeffs[1 << j..2 << j]
    }

    pub fn details(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.levels).map(move |j| self.level(j))
    }

    /// Iterates `(j, k, value)` over every detail coefficient.
    pub fn iter_details(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.levels).flat_map(move |j| self.level(j).iter().enumerate().map(move |(k, &v)| (j, k, v)))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// Applies `f` elementwise, pairing with `other` of the same shape.
    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        if self.levels != other.levels {
            return Err(Error::Structure(format!(
                "tree depth mismatch: {} vs {}",
                self.levels, other.levels
            )));
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { levels: self.levels, coeffs })
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Forward periodized DWT, fully decomposed to a single scaling coefficient.
pub fn forward(signal: &[f64], filter: WaveletFilter) -> Result<CoefficientTree> {
    let levels = dyadic_levels(signal.len())?;
    check_finite(signal)?;

    let h = filter.lowpass_taps();
    let g = filter.highpass_taps();
    let mut coeffs = vec![0.0; signal.len()];
    let mut approx = signal.to_vec();
    let mut next = vec![0.0; signal.len() / 2];

    let mut len = signal.len();
    while len > 1 {
        let half = len / 2;
        for k in 0..half {
            let mut a = 0.0;
            let mut d = 0.0;
            for (n, (&hn, &gn)) in h.iter().zip(&g).enumerate() {
                let x = approx[(2 * k + n) % len];
                a += hn * x;
                d += gn * x;
            }
            next[k] = a;
            coeffs[half + k] = d;
        }
        approx[..half].copy_from_slice(&next[..half]);
        len = half;
    }
    coeffs[0] = approx[0];
    Ok(CoefficientTree { levels, coeffs })
}

/// Inverse periodized DWT.
pub fn inverse(tree: &CoefficientTree, filter: WaveletFilter) -> Result<Vec<f64>> {
    if tree.coeffs.len() != 1 << tree.levels {
        return Err(Error::Structure(format!(
            "{} coefficients for {} levels",
            tree.coeffs.len(),
            tree.levels
        )));
    }
    let h = filter.lowpass_taps();
    let g = filter.highpass_taps();
    let m = tree.len();
    let mut approx = vec![0.0; m];
    let mut next = vec![0.0; m];
    approx[0] = tree.coeffs[0];

    for j in 0..tree.levels {
        let half = 1 << j;
        let len = half * 2;
        let details = tree.level(j);
        next[..len].iter_mut().for_each(|v| *v = 0.0);
        for k in 0..half {
            let a = approx[k];
            let d = details[k];
            for (n, (&hn, &gn)) in h.iter().zip(&g).enumerate() {
                next[(2 * k + n) % len] += hn * a + gn * d;
            }
        }
        approx[..len].copy_from_slice(&next[..len]);
    }
    Ok(approx)
}
