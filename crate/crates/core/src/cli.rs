//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 configuration error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bench::{self, Method, StudySpec};
use crate::dwt::{self, CoefficientTree, WaveletFilter};
use crate::error::{Error, Result};
use crate::estimator::{self, Strategy, VarianceMode};
use crate::io::{self, Crop};
use crate::shrinkage::{ShrinkageKind, ShrinkageRule, DEFAULT_SCAD_A};
use crate::simgen::{self, MaskStructure, SimulationConfig, SnrDefinition, TestFunction, DEFAULT_ZERO_TOLERANCE};
use crate::threshold::{NoiseScale, Selector, ThresholdPolicy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "WAVEMIX_THREADS";

#[derive(Debug, Parser)]
#[command(name = "wavemix", version, about = "Mean-curve estimation from replicated noisy curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the mean curve of a CSV panel (one replicate per row).
    Denoise(DenoiseArgs),
    /// Generate a synthetic panel and its true mean curve.
    Simulate(SimulateArgs),
    /// Run a Monte-Carlo study described by a JSON spec.
    Study(StudyArgs),
    /// Forward or inverse wavelet transform of every row of a CSV file.
    Transform(TransformArgs),
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// Wavelet filter.
    #[arg(long, default_value = "d2")]
    pub filter: String,
    /// Shrinkage rule: hard, soft or scad.
    #[arg(long, default_value = "scad")]
    pub rule: String,
    /// SCAD shape parameter (> 2).
    #[arg(long = "scad-a", default_value_t = DEFAULT_SCAD_A)]
    pub scad_a: f64,
    /// Threshold selector: universal, sure or hybrid.
    #[arg(long, default_value = "universal")]
    pub selector: String,
    /// Multiplier on the universal threshold.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// First thresholded level.
    #[arg(long, default_value_t = 3)]
    pub j0: usize,
    /// Variance estimate: het (per coefficient) or mad (single noise level).
    #[arg(long, default_value = "het")]
    pub variance: String,
    /// Threshold noise level: averaged (standard error of the mean) or per-sample.
    #[arg(long = "noise-scale", default_value = "averaged")]
    pub noise_scale: String,
    /// Estimation strategy: average-then-shrink, shrink-then-average or pointwise-average.
    #[arg(long, default_value = "average-then-shrink")]
    pub strategy: String,
}

impl PolicyArgs {
    fn resolve(&self) -> Result<(WaveletFilter, Strategy, ThresholdPolicy, VarianceMode)> {
        let kind: ShrinkageKind = self.rule.parse()?;
        let policy = ThresholdPolicy {
            rule: ShrinkageRule::new(kind, self.scad_a)?,
            selector: self.selector.parse()?,
            j0: self.j0,
            scale: self.scale,
            noise_scale: self.noise_scale.parse()?,
        };
        Ok((self.filter.parse()?, self.strategy.parse()?, policy, self.variance.parse()?))
    }
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    /// Panel CSV file.
    pub input: PathBuf,
    /// Directory for mu_hat.csv, variances.csv and report.json.
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
    /// Columns dropped from the start of every row.
    #[arg(long = "crop-left", default_value_t = 0)]
    pub crop_left: usize,
    /// Columns dropped from the end of every row.
    #[arg(long = "crop-right", default_value_t = 0)]
    pub crop_right: usize,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Test function: blocks, bumps, heavisine or doppler.
    #[arg(long = "fn", default_value = "blocks")]
    pub function: String,
    /// Signal length (power of two).
    #[arg(long = "M", default_value_t = 1024)]
    pub m: usize,
    /// Number of replicates.
    #[arg(long = "N", default_value_t = 100)]
    pub n: usize,
    /// Signal-to-noise ratio, read per --snr-def.
    #[arg(long, default_value_t = 5.0)]
    pub snr: f64,
    /// SNR definition: amplitude (sd(mu) / sigma) or power (var(mu) / sigma^2).
    #[arg(long = "snr-def", default_value = "amplitude")]
    pub snr_def: String,
    /// Heteroscedasticity ratio (smaller means stronger extra variance).
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Scale-wise decay exponent of the extra variance.
    #[arg(long, default_value_t = 1.5)]
    pub eta: f64,
    /// Extra-variance positions: zeros, bernoulli or none.
    #[arg(long, default_value = "zeros")]
    pub mask: String,
    /// Bernoulli mask probability.
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    /// Relative magnitude under which a mean coefficient counts as zero.
    #[arg(long = "zero-tol", default_value_t = DEFAULT_ZERO_TOLERANCE)]
    pub zero_tol: f64,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Repetition index (selects the random stream).
    #[arg(long, default_value_t = 0)]
    pub rep: u64,
    /// Directory for panel.csv, mu_true.csv and noise_variances.csv.
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// JSON study spec.
    pub spec: PathBuf,
    /// Directory for report.csv and report.json.
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
    /// Also write per-repetition traces and median realizations under traces/.
    #[arg(long)]
    pub traces: bool,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// CSV file, one signal (or coefficient vector) per row.
    pub input: PathBuf,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
    /// Wavelet filter.
    #[arg(long, default_value = "d2")]
    pub filter: String,
    /// Treat rows as coefficient vectors and reconstruct signals.
    #[arg(long)]
    pub inverse: bool,
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let pool = match thread_pool() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let outcome = match pool {
        Some(pool) => pool.install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn thread_pool() -> Result<Option<rayon::ThreadPool>> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::Config(e.to_string()))
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Input { .. } | Error::Io(_) | Error::NonFinite { .. } | Error::InvalidLength { .. } | Error::Structure(_) => {
            EXIT_INPUT
        }
        Error::Config(_)
        | Error::InsufficientReplicates { .. }
        | Error::Calibration(_)
        | Error::Domain(_)
        | Error::Cell { .. } => EXIT_CONFIG,
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Denoise(args) => denoise(&args),
        Command::Simulate(args) => simulate(&args),
        Command::Study(args) => study(&args),
        Command::Transform(args) => transform(&args),
    }
}

fn read_file(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::Input { line: 0, message: format!("{}: {e}", path.display()) })
}

fn write_outputs(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, contents) in files {
        fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

fn denoise(args: &DenoiseArgs) -> Result<()> {
    let (filter, strategy, policy, variance) = args.policy.resolve()?;
    let panel = io::read_panel(read_file(&args.input)?, Crop { left: args.crop_left, right: args.crop_right })?;
    if strategy == Strategy::AverageThenShrink && variance == VarianceMode::Heteroscedastic && panel.n() < 2 {
        return Err(Error::InsufficientReplicates { n: panel.n() });
    }
    if strategy != Strategy::PointwiseAverage {
        policy.validate(panel.levels())?;
    }
    let result = estimator::estimate(&panel, filter, strategy, &policy, variance)?;

    let variances = result.variances.as_ref().map(io::variances_csv).unwrap_or_else(|| "j,k,sigma2\n".into());
    let report = json!({
        "input": args.input.display().to_string(),
        "n": panel.n(),
        "m": panel.m(),
        "crop": { "left": args.crop_left, "right": args.crop_right },
        "filter": filter,
        "strategy": strategy,
        "variance": variance,
        "policy": {
            "rule": policy.rule.kind(),
            "scad_a": policy.rule.scad_a(),
            "selector": policy.selector,
            "j0": policy.j0,
            "scale": policy.scale,
            "noise_scale": policy.noise_scale,
        },
        "sigma2_c": result.variances.as_ref().map(|v| v.sigma2_c()),
        "sigma_mad": result.sigma_mad,
        "diagnostics": result.diagnostics,
    });
    let report = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    write_outputs(
        &args.out_dir,
        &[("mu_hat.csv", io::row_csv(&result.mu_hat)), ("variances.csv", variances), ("report.json", report + "\n")],
    )
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let config = SimulationConfig {
        function: args.function.parse()?,
        m: args.m,
        n: args.n,
        snr: args.snr,
        snr_definition: args.snr_def.parse()?,
        tau: args.tau,
        eta: args.eta,
        structure: args.mask.parse()?,
        bernoulli_p: args.p,
        zero_tolerance: args.zero_tol,
        repetitions: 1,
        seed: args.seed,
    };
    config.validate()?;
    let (mu, _) = config.truth()?;
    let (noise, trees) = simgen::simulate(&config, args.rep + 1)?;
    let panel = simgen::to_curves(&trees, config.filter())?;
    write_outputs(
        &args.out_dir,
        &[
            ("panel.csv", io::panel_csv(&panel)),
            ("mu_true.csv", io::row_csv(&mu)),
            ("noise_variances.csv", io::variances_csv(&noise.variances)),
        ],
    )
}

fn transform(args: &TransformArgs) -> Result<()> {
    let filter: WaveletFilter = args.filter.parse()?;
    let panel = io::read_panel(read_file(&args.input)?, Crop::default())?;
    let mut out = String::new();
    for row in panel.rows() {
        let values = if args.inverse {
            dwt::inverse(&CoefficientTree::from_flat(row.to_vec())?, filter)?
        } else {
            dwt::forward(row, filter)?.into_flat()
        };
        out.push_str(&io::row_csv(&values));
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&args.out, out)?;
    Ok(())
}

/// Current study spec schema version.
pub const STUDY_SPEC_VERSION: u32 = 1;

/// A Cartesian grid of scenarios.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub functions: Vec<TestFunction>,
    pub m: Vec<usize>,
    pub n: Vec<usize>,
    pub snr: Vec<f64>,
    pub tau: Vec<f64>,
    #[serde(default)]
    pub snr_definition: SnrDefinition,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub mask: MaskStructure,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_zero_tol")]
    pub zero_tolerance: f64,
}

fn default_eta() -> f64 {
    1.5
}

fn default_p() -> f64 {
    0.3
}

fn default_zero_tol() -> f64 {
    DEFAULT_ZERO_TOLERANCE
}

fn default_scale() -> f64 {
    1.0
}

fn default_j0() -> usize {
    3
}

fn default_scad_a() -> f64 {
    DEFAULT_SCAD_A
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub strategy: Strategy,
    pub rule: ShrinkageKind,
    #[serde(default = "default_scad_a")]
    pub scad_a: f64,
    pub selector: Selector,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_j0")]
    pub j0: usize,
    pub variance: VarianceMode,
    #[serde(default)]
    pub noise_scale: NoiseScale,
    #[serde(default)]
    pub filter: Option<WaveletFilter>,
}

/// A single object or an array of them. Deserialized by looking at the JSON
/// shape, so errors inside the object keep their field path.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for OneOrMany<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct Shape<T>(std::marker::PhantomData<T>);

        impl<'de, T: Deserialize<'de>> serde::de::Visitor<'de> for Shape<T> {
            type Value = OneOrMany<T>;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an object or an array of objects")
            }

            fn visit_map<A: serde::de::MapAccess<'de>>(self, map: A) -> std::result::Result<Self::Value, A::Error> {
                T::deserialize(serde::de::value::MapAccessDeserializer::new(map)).map(OneOrMany::One)
            }

            fn visit_seq<A: serde::de::SeqAccess<'de>>(self, seq: A) -> std::result::Result<Self::Value, A::Error> {
                Vec::<T>::deserialize(serde::de::value::SeqAccessDeserializer::new(seq)).map(OneOrMany::Many)
            }
        }

        deserializer.deserialize_any(Shape(std::marker::PhantomData))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyFile {
    pub version: u32,
    pub master_seed: u64,
    pub repetitions: usize,
    pub grid: OneOrMany<GridSpec>,
    pub methods: Vec<MethodSpec>,
}

impl StudyFile {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: StudyFile =
            serde_path_to_error::deserialize(de).map_err(|e| Error::Config(format!("study spec: {e}")))?;
        if file.version != STUDY_SPEC_VERSION {
            return Err(Error::Config(format!(
                "study spec: version: unsupported version {} (expected {STUDY_SPEC_VERSION})",
                file.version
            )));
        }
        Ok(file)
    }

    /// Expands the grid(s) and method list into a runnable spec.
    pub fn into_spec(self) -> Result<StudySpec> {
        let grids = match self.grid {
            OneOrMany::One(g) => vec![g],
            OneOrMany::Many(gs) => gs,
        };
        let mut scenarios = Vec::new();
        for grid in &grids {
            for &function in &grid.functions {
                for &m in &grid.m {
                    for &n in &grid.n {
                        for &snr in &grid.snr {
                            for &tau in &grid.tau {
                                scenarios.push(SimulationConfig {
                                    function,
                                    m,
                                    n,
                                    snr,
                                    snr_definition: grid.snr_definition,
                                    tau,
                                    eta: grid.eta,
                                    structure: grid.mask,
                                    bernoulli_p: grid.p,
                                    zero_tolerance: grid.zero_tolerance,
                                    repetitions: self.repetitions,
                                    seed: self.master_seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        if scenarios.is_empty() {
            return Err(Error::Config("study spec: grid: expands to no scenarios".into()));
        }
        let methods = self
            .methods
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let rule = ShrinkageRule::new(spec.rule, spec.scad_a)
                    .map_err(|e| Error::Config(format!("study spec: methods[{i}].scad_a: {e}")))?;
                let policy = ThresholdPolicy {
                    rule,
                    selector: spec.selector,
                    j0: spec.j0,
                    scale: spec.scale,
                    noise_scale: spec.noise_scale,
                };
                let mut method = Method::new(spec.strategy, policy, spec.variance);
                if let Some(label) = &spec.label {
                    method = method.with_label(label.clone());
                }
                if let Some(filter) = spec.filter {
                    method = method.with_filter(filter);
                }
                Ok(method)
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = StudySpec { scenarios, methods, repetitions: self.repetitions, master_seed: self.master_seed };
        spec.validate()?;
        Ok(spec)
    }
}

fn study(args: &StudyArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| Error::Input { line: 0, message: format!("{}: {e}", args.spec.display()) })?;
    let spec = StudyFile::parse(&text)?.into_spec()?;
    let report = bench::run_study(&spec)?;

    // everything is computed before the first write
    let mut files = vec![("report.csv".to_string(), report.to_csv()), ("report.json".to_string(), report.to_json()? + "\n")];
    if args.traces {
        for cell in &report.cells {
            let stem = format!("traces/cell_{}_{}", cell.scenario_index, cell.method_index);
            files.push((format!("{stem}.csv"), report.trace_csv(cell)));
            let median = cell.median_repetition();
            let realization = bench::replay(&spec, cell.scenario_index, cell.method_index, median)?;
            let m = realization.mu_true.len();
            let mut curve = String::from("t,mu_true,mu_hat\n");
            for (i, (t, e)) in realization.mu_true.iter().zip(&realization.estimate.mu_hat).enumerate() {
                curve.push_str(&format!("{},{t},{e}\n", (i as f64 + 0.5) / m as f64));
            }
            files.push((format!("{stem}_median.csv"), curve));
        }
        fs::create_dir_all(args.out_dir.join("traces"))?;
    }
    fs::create_dir_all(&args.out_dir)?;
    for (name, contents) in files {
        fs::write(args.out_dir.join(name), contents)?;
    }
    Ok(())
}
