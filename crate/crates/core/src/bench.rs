//! Monte-Carlo study runner.
//!
//! A study crosses simulation scenarios with estimation methods. All methods
//! of a scenario are evaluated on the same simulated panels, so method
//! comparisons within a scenario are paired. Repetition `r` of scenario `s`
//! draws from ChaCha stream `(s << 32) | (r + 1)` of the master seed and the
//! scenario's noise model from stream `s << 32`; results therefore do not
//! depend on the number of worker threads.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dwt::{self, CoefficientTree, WaveletFilter};
use crate::error::{Error, Result};
use crate::estimator::{estimate_coefficients, EstimateResult, Strategy, VarianceMode};
use crate::simgen::{calibrate, generate_panel, stream_rng, NoiseModel, SimulationConfig};
use crate::threshold::{Selector, ThresholdPolicy};

/// `(1/M) sum (mu_hat - mu)^2`.
pub fn mise(mu_hat: &[f64], mu_true: &[f64]) -> Result<f64> {
    if mu_hat.len() != mu_true.len() || mu_hat.is_empty() {
        return Err(Error::Structure(format!(
            "cannot compare curves of lengths {} and {}",
            mu_hat.len(),
            mu_true.len()
        )));
    }
    let sum: f64 = mu_hat.iter().zip(mu_true).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / mu_hat.len() as f64)
}

/// One estimation procedure evaluated in a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub label: String,
    pub strategy: Strategy,
    pub policy: ThresholdPolicy,
    pub variance: VarianceMode,
    /// Filter used for estimation; defaults to the scenario's designated filter.
    pub filter: Option<WaveletFilter>,
}

impl Method {
    pub fn new(strategy: Strategy, policy: ThresholdPolicy, variance: VarianceMode) -> Self {
        let label = default_label(strategy, &policy, variance);
        Self { label, strategy, policy, variance, filter: None }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_filter(mut self, filter: WaveletFilter) -> Self {
        self.filter = Some(filter);
        self
    }
}

fn default_label(strategy: Strategy, policy: &ThresholdPolicy, variance: VarianceMode) -> String {
    match strategy {
        Strategy::PointwiseAverage => strategy.to_string(),
        Strategy::ShrinkThenAverage => format!("sta-{}-{}-x{}", policy.rule, policy.selector, policy.scale),
        Strategy::AverageThenShrink => {
            format!("{}-{}-{}-x{}", variance, policy.rule, policy.selector, policy.scale)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub scenarios: Vec<SimulationConfig>,
    pub methods: Vec<Method>,
    pub repetitions: usize,
    pub master_seed: u64,
}

impl StudySpec {
    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Config("study has no scenarios".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("study has no methods".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.scenarios.len() >= 1 << 31 {
            return Err(Error::Config("too many scenarios".into()));
        }
        for (s, scenario) in self.scenarios.iter().enumerate() {
            scenario.validate().map_err(|e| cell_error(s, scenario, None, e))?;
            let levels = scenario.m.trailing_zeros() as usize;
            for method in &self.methods {
                if method.strategy != Strategy::PointwiseAverage {
                    method.policy.validate(levels).map_err(|e| cell_error(s, scenario, Some(method), e))?;
                }
                if method.strategy == Strategy::AverageThenShrink
                    && method.variance == VarianceMode::Heteroscedastic
                    && scenario.n < 2
                {
                    return Err(cell_error(s, scenario, Some(method), Error::InsufficientReplicates { n: scenario.n }));
                }
            }
        }
        Ok(())
    }

    fn scenario_stream(index: usize) -> u64 {
        (index as u64) << 32
    }
}

fn cell_error(index: usize, scenario: &SimulationConfig, method: Option<&Method>, source: Error) -> Error {
    let mut cell = format!(
        "#{index} {} M={} N={} snr={} tau={} mask={}",
        scenario.function, scenario.m, scenario.n, scenario.snr, scenario.tau, scenario.structure
    );
    if let Some(method) = method {
        let _ = write!(cell, " / {}", method.label);
    }
    Error::Cell { cell, source: Box::new(source) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub scenario_index: usize,
    pub method_index: usize,
    pub scenario: SimulationConfig,
    pub method: Method,
    pub repetitions: usize,
    pub mean: f64,
    pub sd: f64,
    pub mises: Vec<f64>,
}

impl CellReport {
    fn from_mises(scenario_index: usize, method_index: usize, spec: &StudySpec, mises: Vec<f64>) -> Self {
        let count = mises.len() as f64;
        let mean = mises.iter().sum::<f64>() / count;
        let sd = if mises.len() > 1 {
            (mises.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            scenario_index,
            method_index,
            scenario: spec.scenarios[scenario_index].clone(),
            method: spec.methods[method_index].clone(),
            repetitions: mises.len(),
            mean,
            sd,
            mises,
        }
    }

    /// Repetition whose MISE is the (lower) median.
    pub fn median_repetition(&self) -> usize {
        let mut order: Vec<usize> = (0..self.mises.len()).collect();
        order.sort_by(|&a, &b| self.mises[a].total_cmp(&self.mises[b]).then(a.cmp(&b)));
        order[(order.len() - 1) / 2]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub master_seed: u64,
    pub repetitions: usize,
    pub wall_time_secs: f64,
    pub cells: Vec<CellReport>,
}

const CSV_HEADER: &str = "scenario,function,m,n,snr,snr_def,tau,eta,mask,p,method,strategy,rule,selector,scale,j0,\
variance,noise_scale,filter,repetitions,mise_mean,mise_sd,display_unit,mise_mean_display,mise_sd_display";

impl StudyReport {
    pub fn cell(&self, scenario_index: usize, method_index: usize) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.scenario_index == scenario_index && c.method_index == method_index)
    }

    /// Long-format CSV, one row per (scenario, method). Contains no timing
    /// information, so it is reproducible byte for byte.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for cell in &self.cells {
            let s = &cell.scenario;
            let m = &cell.method;
            let unit = s.function.display_scale();
            let filter = m.filter.unwrap_or_else(|| s.filter());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                cell.scenario_index,
                s.function,
                s.m,
                s.n,
                s.snr,
                s.snr_definition,
                s.tau,
                s.eta,
                s.structure,
                s.bernoulli_p,
                m.label,
                m.strategy,
                m.policy.rule,
                m.policy.selector,
                m.policy.scale,
                m.policy.j0,
                m.variance,
                m.policy.noise_scale,
                filter,
                cell.repetitions,
                cell.mean,
                cell.sd,
                unit,
                cell.mean / unit,
                cell.sd / unit,
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Per-repetition MISE trace of one cell as CSV.
    pub fn trace_csv(&self, cell: &CellReport) -> String {
        let mut out = String::from("repetition,mise\n");
        for (r, v) in cell.mises.iter().enumerate() {
            let _ = writeln!(out, "{r},{v}");
        }
        out
    }
}

struct PreparedScenario {
    mu: Vec<f64>,
    tree: CoefficientTree,
    noise: NoiseModel,
}

fn prepare(spec: &StudySpec, index: usize) -> Result<PreparedScenario> {
    let scenario = &spec.scenarios[index];
    let (mu, tree) = scenario.truth()?;
    let mut rng = stream_rng(spec.master_seed, StudySpec::scenario_stream(index));
    let noise = calibrate(scenario, &tree, &mut rng)?;
    Ok(PreparedScenario { mu, tree, noise })
}

fn replicate_trees(spec: &StudySpec, index: usize, prepared: &PreparedScenario, rep: usize) -> Result<Vec<CoefficientTree>> {
    let stream = StudySpec::scenario_stream(index) | (rep as u64 + 1);
    let mut rng = stream_rng(spec.master_seed, stream);
    generate_panel(&prepared.noise, &prepared.tree, spec.scenarios[index].n, &mut rng)
}

fn run_method(
    scenario: &SimulationConfig,
    method: &Method,
    trees: &[CoefficientTree],
) -> Result<EstimateResult> {
    let native = scenario.filter();
    let filter = method.filter.unwrap_or(native);
    if filter == native {
        return estimate_coefficients(trees, filter, method.strategy, &method.policy, method.variance);
    }
    let converted = trees
        .iter()
        .map(|t| dwt::forward(&dwt::inverse(t, native)?, filter))
        .collect::<Result<Vec<_>>>()?;
    estimate_coefficients(&converted, filter, method.strategy, &method.policy, method.variance)
}

/// Runs every (scenario, method) cell for `spec.repetitions` repetitions.
pub fn run_study(spec: &StudySpec) -> Result<StudyReport> {
    spec.validate()?;
    let started = Instant::now();

    let per_scenario: Vec<Vec<Vec<f64>>> = (0..spec.scenarios.len())
        .into_par_iter()
        .map(|s| {
            let scenario = &spec.scenarios[s];
            let prepared = prepare(spec, s).map_err(|e| cell_error(s, scenario, None, e))?;
            let by_rep: Vec<Vec<f64>> = (0..spec.repetitions)
                .into_par_iter()
                .map(|rep| {
                    let trees = replicate_trees(spec, s, &prepared, rep).map_err(|e| cell_error(s, scenario, None, e))?;
                    spec.methods
                        .iter()
                        .map(|method| {
                            run_method(scenario, method, &trees)
                                .and_then(|est| mise(&est.mu_hat, &prepared.mu))
                                .map_err(|e| cell_error(s, scenario, Some(method), e))
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?;
            // transpose to per-method vectors
            Ok((0..spec.methods.len())
                .map(|m| by_rep.iter().map(|row| row[m]).collect())
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(spec.scenarios.len() * spec.methods.len());
    for (s, methods) in per_scenario.into_iter().enumerate() {
        for (m, mises) in methods.into_iter().enumerate() {
            cells.push(CellReport::from_mises(s, m, spec, mises));
        }
    }
    Ok(StudyReport {
        master_seed: spec.master_seed,
        repetitions: spec.repetitions,
        wall_time_secs: started.elapsed().as_secs_f64(),
        cells,
    })
}

/// A single repetition of one cell, regenerated from the study seeds.
#[derive(Debug, Clone)]
pub struct Realization {
    pub mu_true: Vec<f64>,
    pub estimate: EstimateResult,
    pub mise: f64,
}

/// Regenerates repetition `rep` of a cell, e.g. the median-MISE realization.
pub fn replay(spec: &StudySpec, scenario_index: usize, method_index: usize, rep: usize) -> Result<Realization> {
    let scenario = spec
        .scenarios
        .get(scenario_index)
        .ok_or_else(|| Error::Config(format!("no scenario #{scenario_index}")))?;
    let method = spec
        .methods
        .get(method_index)
        .ok_or_else(|| Error::Config(format!("no method #{method_index}")))?;
    let prepared = prepare(spec, scenario_index)?;
    let trees = replicate_trees(spec, scenario_index, &prepared, rep)?;
    let estimate = run_method(scenario, method, &trees)?;
    let mise = mise(&estimate.mu_hat, &prepared.mu)?;
    Ok(Realization { mu_true: prepared.mu, estimate, mise })
}

/// Methods of the heteroscedastic-versus-homoscedastic comparison: SCAD with
/// the universal threshold at `scale`, with per-coefficient and MAD variances.
pub fn he_ho_methods(scale: f64) -> Vec<Method> {
    let policy = ThresholdPolicy { scale, ..Default::default() };
    vec![
        Method::new(Strategy::AverageThenShrink, policy, VarianceMode::Heteroscedastic).with_label("He"),
        Method::new(Strategy::AverageThenShrink, policy, VarianceMode::HomoscedasticMad).with_label("Ho"),
    ]
}

/// Methods of the threshold comparison: {soft, SCAD} x {universal, hybrid SURE},
/// all heteroscedastic.
pub fn selector_methods(scale: f64) -> Vec<Method> {
    use crate::shrinkage::ShrinkageRule;
    let mut out = Vec::new();
    for (rule, name) in [(ShrinkageRule::soft(), "soft"), (ShrinkageRule::scad(), "scad")] {
        for (selector, sel_name) in [(Selector::Universal, "universal"), (Selector::Hybrid, "sure")] {
            let policy = ThresholdPolicy { rule, selector, scale, ..Default::default() };
            out.push(
                Method::new(Strategy::AverageThenShrink, policy, VarianceMode::Heteroscedastic)
                    .with_label(format!("{name}-{sel_name}")),
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{MaskStructure, TestFunction};

    #[test]
    fn mise_examples() {
        let mu = vec![1.0, -2.0, 0.5, 3.0];
        assert_eq!(mise(&mu, &mu).unwrap(), 0.0);
        let shifted: Vec<f64> = mu.iter().map(|v| v + 0.3).collect();
        assert!((mise(&shifted, &mu).unwrap() - 0.09).abs() < 1e-12);
        assert!(matches!(mise(&mu, &mu[..3]), Err(Error::Structure(_))));

        let heavisine = TestFunction::Heavisine.sample(1024).unwrap();
        let direct = heavisine.iter().map(|v| v * v).sum::<f64>() / 1024.0;
        assert!((mise(&vec![0.0; 1024], &heavisine).unwrap() - direct).abs() < 1e-12);
    }

    fn small_spec(structure: MaskStructure) -> StudySpec {
        let mut scenario = SimulationConfig::new(TestFunction::Blocks, 256, 8, 3.0, 0.5, structure);
        scenario.seed = 5;
        StudySpec { scenarios: vec![scenario], methods: he_ho_methods(0.5), repetitions: 6, master_seed: 77 }
    }

    #[test]
    fn study_is_deterministic_across_thread_counts() {
        let spec = small_spec(MaskStructure::Zeros);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_study(&spec)).unwrap();
        let b = four.install(|| run_study(&spec)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.cells.len(), 2);
        assert!(a.cells.iter().all(|c| c.repetitions == 6 && c.mean.is_finite()));
    }

    #[test]
    fn replay_matches_recorded_mise() {
        let spec = small_spec(MaskStructure::Bernoulli);
        let report = run_study(&spec).unwrap();
        let cell = report.cell(0, 1).unwrap();
        let median = cell.median_repetition();
        let realization = replay(&spec, 0, 1, median).unwrap();
        assert_eq!(realization.mise, cell.mises[median]);
    }

    #[test]
    fn failures_name_the_cell() {
        let mut spec = small_spec(MaskStructure::Zeros);
        spec.scenarios[0].n = 1;
        let err = run_study(&spec).unwrap_err();
        assert!(matches!(err, Error::Cell { .. }));
        assert!(err.to_string().contains("He"), "{err}");

        let mut empty = small_spec(MaskStructure::Zeros);
        empty.methods.clear();
        assert!(matches!(run_study(&empty), Err(Error::Config(_))));
    }

    #[test]
    fn alternate_filter_methods_run() {
        let mut spec = small_spec(MaskStructure::None);
        spec.methods = vec![
            Method::new(Strategy::AverageThenShrink, ThresholdPolicy::default(), VarianceMode::Heteroscedastic)
                .with_filter(WaveletFilter::D5),
            Method::new(Strategy::PointwiseAverage, ThresholdPolicy::default(), VarianceMode::Heteroscedastic),
        ];
        let report = run_study(&spec).unwrap();
        assert!(report.cells.iter().all(|c| c.mean > 0.0));
        assert!(report.to_csv().contains(",d5,"));
    }
}
