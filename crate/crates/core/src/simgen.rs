//! Synthetic replicate panels: Donoho–Johnstone test functions corrupted in
//! the wavelet domain by Gaussian noise with position-dependent variances.
//!
//! The noise variance at detail position `(j, k)` is
//! `sigma^2 + mask_jk * 2^{-j eta} * gamma^2_jk`, where `sigma` follows from
//! the signal-to-noise ratio and the `gamma^2_jk` are Gamma draws whose mean
//! `gamma^2_ref` is set by the heteroscedasticity ratio `tau`.
//!
//! Random streams: every draw comes from a ChaCha8 generator seeded with the
//! configuration seed; stream 0 is reserved for calibration (mask and
//! `gamma^2` draws) and repetition `r` uses stream `r + 1`. Studies offset
//! the stream by the scenario index (see [`stream_rng`]).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dwt::{self, CoefficientTree, WaveletFilter};
use crate::error::{Error, Result};
use crate::estimator::CurvePanel;
use crate::threshold::VarianceField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    Blocks,
    Bumps,
    Heavisine,
    Doppler,
}

const BLOCK_POSITIONS: [f64; 11] = [0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81];
const BLOCK_HEIGHTS: [f64; 11] = [4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2];
const BUMP_HEIGHTS: [f64; 11] = [4.0, 5.0, 3.0, 4.0, 5.0, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2];
const BUMP_WIDTHS: [f64; 11] = [0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005];

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl TestFunction {
    pub const ALL: [TestFunction; 4] = [Self::Blocks, Self::Bumps, Self::Heavisine, Self::Doppler];

    /// Evaluates the raw (unnormalized) function at `t` in `[0, 1]`.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Blocks => BLOCK_POSITIONS
                .iter()
                .zip(BLOCK_HEIGHTS)
                .map(|(&p, h)| h * (1.0 + sign(t - p)) / 2.0)
                .sum(),
            Self::Bumps => BLOCK_POSITIONS
                .iter()
                .zip(BUMP_HEIGHTS.iter().zip(BUMP_WIDTHS))
                .map(|(&p, (&h, w))| h * (1.0 + ((t - p) / w).abs()).powi(-4))
                .sum(),
            Self::Heavisine => {
                4.0 * (4.0 * std::f64::consts::PI * t).sin() - sign(t - 0.3) - sign(0.72 - t)
            }
            Self::Doppler => {
                let eps = 0.05;
                (t * (1.0 - t)).sqrt() * (2.0 * std::f64::consts::PI * (1.0 + eps) / (t + eps)).sin()
            }
        }
    }

    /// Samples the function at the midpoints `t_i = (i + 1/2) / M`.
    pub fn sample(&self, m: usize) -> Result<Vec<f64>> {
        dwt::dyadic_levels(m)?;
        Ok((0..m).map(|i| self.eval((i as f64 + 0.5) / m as f64)).collect())
    }

    /// Filter this function is paired with in the simulations.
    pub fn designated_filter(&self) -> WaveletFilter {
        match self {
            Self::Blocks => WaveletFilter::D1,
            Self::Bumps => WaveletFilter::D2,
            Self::Heavisine => WaveletFilter::D5,
            Self::Doppler => WaveletFilter::D7,
        }
    }

    /// Multiplier used when printing MISE values for this function.
    pub fn display_scale(&self) -> f64 {
        match self {
            Self::Blocks | Self::Bumps => 1.0,
            Self::Heavisine => 1e-2,
            Self::Doppler => 1e-4,
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "blocks" => Ok(Self::Blocks),
            "bumps" => Ok(Self::Bumps),
            "heavisine" => Ok(Self::Heavisine),
            "doppler" => Ok(Self::Doppler),
            other => Err(Error::Config(format!(
                "unknown test function `{other}` (expected blocks, bumps, heavisine or doppler)"
            ))),
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Blocks => "blocks",
            Self::Bumps => "bumps",
            Self::Heavisine => "heavisine",
            Self::Doppler => "doppler",
        })
    }
}

/// Where the extra variance goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskStructure {
    /// No extra variance: `sigma^2_jk = sigma^2`.
    None,
    /// Extra variance on the (numerically) zero coefficients of the mean.
    Zeros,
    /// Extra variance on a Bernoulli(p) subset of all detail positions.
    Bernoulli,
}

impl FromStr for MaskStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "homoscedastic" => Ok(Self::None),
            "zeros" => Ok(Self::Zeros),
            "bernoulli" => Ok(Self::Bernoulli),
            other => Err(Error::Config(format!("unknown mask `{other}` (expected none, zeros or bernoulli)"))),
        }
    }
}

impl fmt::Display for MaskStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Zeros => "zeros",
            Self::Bernoulli => "bernoulli",
        })
    }
}

/// How `snr` maps the spread of the mean curve to the noise level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrDefinition {
    /// `snr = sd(mu) / sigma`.
    #[default]
    Amplitude,
    /// `snr = var(mu) / sigma^2`.
    Power,
}

impl FromStr for SnrDefinition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "amplitude" | "sd" => Ok(Self::Amplitude),
            "power" | "variance" => Ok(Self::Power),
            other => Err(Error::Config(format!("unknown SNR definition `{other}` (expected amplitude or power)"))),
        }
    }
}

impl fmt::Display for SnrDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Amplitude => "amplitude",
            Self::Power => "power",
        })
    }
}

impl SnrDefinition {
    /// Noise variance for a mean curve of population variance `var`.
    pub fn sigma2(&self, var: f64, snr: f64) -> f64 {
        match self {
            Self::Amplitude => var / (snr * snr),
            Self::Power => var / snr,
        }
    }
}

fn default_eta() -> f64 {
    1.5
}

fn default_p() -> f64 {
    0.3
}

fn default_zero_tolerance() -> f64 {
    DEFAULT_ZERO_TOLERANCE
}

/// Coefficients with `|beta_jk| <= tolerance * max |beta|` count as zero.
pub const DEFAULT_ZERO_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub function: TestFunction,
    pub m: usize,
    pub n: usize,
    pub snr: f64,
    #[serde(default)]
    pub snr_definition: SnrDefinition,
    pub tau: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub structure: MaskStructure,
    #[serde(default = "default_p")]
    pub bernoulli_p: f64,
    /// Relative magnitude below which a mean coefficient counts as zero.
    #[serde(default = "default_zero_tolerance")]
    pub zero_tolerance: f64,
    #[serde(default)]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SimulationConfig {
    pub fn new(function: TestFunction, m: usize, n: usize, snr: f64, tau: f64, structure: MaskStructure) -> Self {
        Self {
            function,
            m,
            n,
            snr,
            snr_definition: SnrDefinition::default(),
            tau,
            eta: default_eta(),
            structure,
            bernoulli_p: default_p(),
            zero_tolerance: DEFAULT_ZERO_TOLERANCE,
            repetitions: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        dwt::dyadic_levels(self.m).map_err(|_| Error::Config(format!("M = {} is not a power of two", self.m)))?;
        if self.m < 2 {
            return Err(Error::Config("M must be at least 2".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        let positive = [("snr", self.snr), ("tau", self.tau)];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
        }
        if !self.eta.is_finite() {
            return Err(Error::Config(format!("eta must be finite, got {}", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.bernoulli_p) {
            return Err(Error::Config(format!("bernoulli_p must lie in [0, 1], got {}", self.bernoulli_p)));
        }
        if !(self.zero_tolerance >= 0.0 && self.zero_tolerance < 1.0) {
            return Err(Error::Config(format!("zero_tolerance must lie in [0, 1), got {}", self.zero_tolerance)));
        }
        Ok(())
    }

    pub fn filter(&self) -> WaveletFilter {
        self.function.designated_filter()
    }

    /// The sampled mean curve and its coefficients under the designated filter.
    pub fn truth(&self) -> Result<(Vec<f64>, CoefficientTree)> {
        let mu = self.function.sample(self.m)?;
        let tree = dwt::forward(&mu, self.filter())?;
        Ok((mu, tree))
    }
}

/// Realized noise variances for one simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseModel {
    pub sigma2: f64,
    pub gamma2_ref: f64,
    /// Gamma draws, zero off the mask.
    pub gamma2: CoefficientTree,
    /// Flat mask in tree layout; slot 0 (scaling) is always false.
    pub mask: Vec<bool>,
    pub variances: VarianceField,
}

impl NoiseModel {
    /// White noise of variance `sigma2` on every coefficient.
    pub fn homoscedastic(levels: usize, sigma2: f64) -> Result<Self> {
        Ok(Self {
            sigma2,
            gamma2_ref: 0.0,
            gamma2: CoefficientTree::zeros(levels),
            mask: vec![false; 1 << levels],
            variances: VarianceField::constant(levels, sigma2)?,
        })
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// ChaCha8 generator for `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives the noise model from the SNR and `tau` of `config`.
///
/// `sigma^2` follows [`SnrDefinition`] applied to the population variance of
/// the sampled mean, and `gamma^2_ref = M sigma^2 / (tau * sum_mask 2^{-j eta})`.
pub fn calibrate<R: Rng + ?Sized>(
    config: &SimulationConfig,
    mu_coefficients: &CoefficientTree,
    rng: &mut R,
) -> Result<NoiseModel> {
    config.validate()?;
    let levels = mu_coefficients.levels();
    if mu_coefficients.len() != config.m {
        return Err(Error::Structure(format!(
            "mean has {} coefficients, configuration says M = {}",
            mu_coefficients.len(),
            config.m
        )));
    }
    let detail_energy: f64 = mu_coefficients.iter_details().map(|(_, _, b)| b * b).sum();
    if detail_energy == 0.0 {
        return Err(Error::Calibration("the mean curve is constant; SNR is undefined".into()));
    }
    let sigma2 = config.snr_definition.sigma2(detail_energy / config.m as f64, config.snr);

    let mut mask = vec![false; config.m];
    match config.structure {
        MaskStructure::None => return NoiseModel::homoscedastic(levels, sigma2),
        MaskStructure::Zeros => {
            let largest = mu_coefficients.iter_details().map(|(_, _, b)| b.abs()).fold(0.0, f64::max);
            let cutoff = config.zero_tolerance * largest;
            for (flag, &b) in mask.iter_mut().zip(mu_coefficients.as_slice()).skip(1) {
                *flag = b.abs() <= cutoff;
            }
        }
        MaskStructure::Bernoulli => {
            let coin = Bernoulli::new(config.bernoulli_p).map_err(|e| Error::Config(e.to_string()))?;
            for flag in mask.iter_mut().skip(1) {
                *flag = coin.sample(rng);
            }
        }
    }

    let decay = |j: usize| 2f64.powf(-(j as f64) * config.eta);
    let weight: f64 = (0..levels)
        .flat_map(|j| (1usize << j..2 << j).map(move |idx| (j, idx)))
        .filter(|&(_, idx)| mask[idx])
        .map(|(j, _)| decay(j))
        .sum();
    if weight == 0.0 {
        return Err(Error::Calibration(format!(
            "no coefficient of {} qualifies for extra variance under the `{}` mask",
            config.function, config.structure
        )));
    }
    let gamma2_ref = config.m as f64 * sigma2 / (config.tau * weight);
    let gamma = Gamma::new(gamma2_ref / 2.0, 2.0).map_err(|e| Error::Calibration(e.to_string()))?;

    let mut gamma2 = CoefficientTree::zeros(levels);
    let mut variances = CoefficientTree::from_flat(vec![sigma2; config.m])?;
    for j in 0..levels {
        for (idx, &masked) in mask.iter().enumerate().take(2 << j).skip(1 << j) {
            if masked {
                let draw = gamma.sample(rng);
                gamma2.as_mut_slice()[idx] = draw;
                variances.as_mut_slice()[idx] = sigma2 + decay(j) * draw;
            }
        }
    }
    Ok(NoiseModel { sigma2, gamma2_ref, gamma2, mask, variances: VarianceField::from_tree(variances)? })
}

/// Draws `n` replicate coefficient trees `mu + eps`, `eps_jk ~ N(0, sigma^2_jk)`.
pub fn generate_panel<R: Rng + ?Sized>(
    noise: &NoiseModel,
    mu_coefficients: &CoefficientTree,
    n: usize,
    rng: &mut R,
) -> Result<Vec<CoefficientTree>> {
    let field = noise.variances.as_tree();
    if field.levels() != mu_coefficients.levels() {
        return Err(Error::Structure("noise model and mean have different depths".into()));
    }
    let sds: Vec<f64> = field.as_slice().iter().map(|v| v.sqrt()).collect();
    let mut panel = Vec::with_capacity(n);
    for _ in 0..n {
        let coeffs = mu_coefficients
            .as_slice()
            .iter()
            .zip(&sds)
            .map(|(&mu, &sd)| {
                let z: f64 = rng.sample(StandardNormal);
                mu + sd * z
            })
            .collect();
        panel.push(CoefficientTree::from_flat(coeffs)?);
    }
    Ok(panel)
}

/// Inverts replicate trees back to time-domain curves.
pub fn to_curves(trees: &[CoefficientTree], filter: WaveletFilter) -> Result<CurvePanel> {
    let rows = trees.iter().map(|t| dwt::inverse(t, filter)).collect::<Result<Vec<_>>>()?;
    CurvePanel::new(rows)
}

/// One full draw for `config`: calibration on stream 0, replicates on `stream`.
pub fn simulate(config: &SimulationConfig, stream: u64) -> Result<(NoiseModel, Vec<CoefficientTree>)> {
    let (_, tree) = config.truth()?;
    let noise = calibrate(config, &tree, &mut stream_rng(config.seed, 0))?;
    let panel = generate_panel(&noise, &tree, config.n, &mut stream_rng(config.seed, stream))?;
    Ok((noise, panel))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heavisine_midpoint() {
        // sin(2 pi) is zero only up to rounding
        assert!((TestFunction::Heavisine.eval(0.5) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn doppler_vanishes_at_zero() {
        assert!(TestFunction::Doppler.eval(1e-12).abs() < 1e-5);
        assert_eq!(TestFunction::Doppler.eval(0.0), 0.0);
    }

    #[test]
    fn blocks_is_sparse_under_haar() {
        let m = 1024;
        let mu = TestFunction::Blocks.sample(m).unwrap();
        let tree = dwt::forward(&mu, WaveletFilter::D1).unwrap();
        let nonzero = tree.iter_details().filter(|(_, _, d)| d.abs() > 1e-10).count();
        // each of the 11 jumps touches at most one coefficient per level
        assert!(nonzero <= 11 * tree.levels(), "{nonzero}");
        assert!(nonzero >= 11);
    }

    #[test]
    fn unknown_names_rejected() {
        assert!("wiggly".parse::<TestFunction>().is_err());
        assert!("zeros".parse::<MaskStructure>().is_ok());
    }

    fn blocks_config(structure: MaskStructure) -> SimulationConfig {
        SimulationConfig::new(TestFunction::Blocks, 1024, 10, 5.0, 0.1, structure)
    }

    #[test]
    fn tau_algebra() {
        let config = blocks_config(MaskStructure::Zeros);
        let (_, tree) = config.truth().unwrap();
        let noise = calibrate(&config, &tree, &mut stream_rng(1, 0)).unwrap();
        assert!(noise.masked_count() > 0);
        let masked_weight: f64 = noise
            .mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(idx, _)| 2f64.powf(-(idx.ilog2() as f64) * 1.5))
            .sum();
        let expected = 10.0 * 1024.0 * noise.sigma2 / masked_weight;
        assert!((noise.gamma2_ref - expected).abs() < 1e-9 * expected);
        for (idx, &v) in noise.variances.as_tree().as_slice().iter().enumerate() {
            assert!(v >= noise.sigma2);
            let j = if idx == 0 { 0 } else { idx.ilog2() as usize };
            let extra = if noise.mask[idx] { 2f64.powf(-(j as f64) * 1.5) * noise.gamma2.as_slice()[idx] } else { 0.0 };
            assert_eq!(v, noise.sigma2 + extra);
        }
    }

    #[test]
    fn large_tau_is_nearly_homoscedastic() {
        let mut config = blocks_config(MaskStructure::Zeros);
        config.tau = 1e12;
        let (_, tree) = config.truth().unwrap();
        let noise = calibrate(&config, &tree, &mut stream_rng(1, 0)).unwrap();
        assert!(noise.gamma2_ref < 1e-9 * noise.sigma2 * 1024.0);
        assert!(noise.variances.max() < noise.sigma2 * (1.0 + 1e-6));
    }

    #[test]
    fn gamma_mean() {
        let gamma = Gamma::new(4.0 / 2.0, 2.0).unwrap();
        let mut rng = stream_rng(2, 0);
        let mean: f64 = (0..10_000).map(|_| gamma.sample(&mut rng)).sum::<f64>() / 10_000.0;
        assert!((3.8..=4.2).contains(&mean), "{mean}");
    }

    #[test]
    fn calibration_errors() {
        let config = blocks_config(MaskStructure::Zeros);
        let flat = CoefficientTree::zeros(10);
        assert!(matches!(calibrate(&config, &flat, &mut stream_rng(0, 0)), Err(Error::Calibration(_))));

        let mut exact = blocks_config(MaskStructure::Zeros);
        exact.function = TestFunction::Doppler;
        exact.zero_tolerance = 0.0;
        let (_, tree) = exact.truth().unwrap();
        assert!(matches!(calibrate(&exact, &tree, &mut stream_rng(0, 0)), Err(Error::Calibration(_))));

        let mut bad = blocks_config(MaskStructure::Zeros);
        bad.m = 1000;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn zero_noise_panel_equals_mean() {
        let (_, tree) = blocks_config(MaskStructure::None).truth().unwrap();
        let noise = NoiseModel::homoscedastic(10, 0.0).unwrap();
        let panel = generate_panel(&noise, &tree, 3, &mut stream_rng(0, 1)).unwrap();
        assert!(panel.iter().all(|t| t == &tree));
    }

    #[test]
    fn same_seed_same_panel() {
        let mut config = blocks_config(MaskStructure::Bernoulli);
        config.seed = 99;
        let (a_noise, a) = simulate(&config, 4).unwrap();
        let (b_noise, b) = simulate(&config, 4).unwrap();
        assert_eq!(a_noise, b_noise);
        assert_eq!(a, b);
        let (_, c) = simulate(&config, 5).unwrap();
        assert_ne!(a, c);
    }
}
