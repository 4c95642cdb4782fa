//! Seeded Monte-Carlo replication of the estimators over a grid of sample
//! sizes or signal-to-noise ratios.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimationResult, EstimatorOptions, Inits, Method};
use crate::model::{sigma_for_snr, synthesize, ChirpParams};
use crate::noise::NoiseModel;
use crate::optimize::{InitStrategy, DEFAULT_GRID_POINTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SampleSize(Vec<usize>),
    /// SNR in dB; the innovation standard deviation of the noise model is
    /// set to match each value.
    SnrDb(Vec<f64>),
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::SampleSize(v) => v.len(),
            SweepAxis::SnrDb(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub strategy: InitStrategy,
    pub grid_points: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { strategy: InitStrategy::OracleNeighborhood, grid_points: DEFAULT_GRID_POINTS }
    }
}

fn default_replications() -> usize {
    500
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub params: ChirpParams,
    pub noise: NoiseModel,
    pub axis: SweepAxis,
    /// Series length for an SNR sweep.
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub estimator: EstimatorOptions,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub record_timing: bool,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPointSetup {
    pub axis_value: f64,
    pub n_samples: usize,
    pub noise_sigma: f64,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.params.len();
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.axis.is_empty() {
            return Err(Error::Config("the sweep axis is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::Config(format!("method {m} is listed twice")));
            }
        }
        if self.init.grid_points < 2 {
            return Err(Error::Config("init.grid_points must be at least 2".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.noise.validate().map_err(|e| Error::Config(format!("noise: {e}")))?;
        self.estimator.optimizer.validate()?;
        for point in self.grid()? {
            if point.n_samples < 2 * p + 2 {
                return Err(Error::Config(format!(
                    "N = {} is too small for {p} components (need at least {})",
                    point.n_samples,
                    2 * p + 2
                )));
            }
        }
        Ok(())
    }

    /// Sample size and noise level at each grid point.
    pub fn grid(&self) -> Result<Vec<GridPointSetup>> {
        match &self.axis {
            SweepAxis::SampleSize(ns) => Ok(ns
                .iter()
                .map(|&n| GridPointSetup { axis_value: n as f64, n_samples: n, noise_sigma: self.noise.sigma() })
                .collect()),
            SweepAxis::SnrDb(snrs) => {
                let n = self
                    .n_samples
                    .ok_or_else(|| Error::Config("an snr_db sweep needs n_samples".into()))?;
                snrs.iter()
                    .map(|&snr| {
                        let sigma = sigma_for_snr(&self.params, snr)
                            .map_err(|e| Error::Config(format!("snr_db {snr}: {e}")))?;
                        Ok(GridPointSetup { axis_value: snr, n_samples: n, noise_sigma: sigma })
                    })
                    .collect()
            }
        }
    }
}

/// Seed of replication `rep` at grid point `grid_index`.
pub fn replication_seed(master: u64, grid_index: usize, rep: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(master) ^ grid_index as u64) ^ rep as u64)
}

/// Parameter labels in the order `A1, B1, ..., Ap, Bp, alpha1, ..., alphap, beta`.
pub fn parameter_names(p: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..=p).flat_map(|k| [format!("A{k}"), format!("B{k}")]).collect();
    names.extend((1..=p).map(|k| format!("alpha{k}")));
    names.push("beta".into());
    names
}

/// Estimation errors in the [`parameter_names`] order, matched to truth by
/// the component's init position.
pub fn estimation_errors(result: &EstimationResult, truth: &ChirpParams) -> Result<Vec<f64>> {
    let p = truth.len();
    let mut err = vec![f64::NAN; 3 * p + 1];
    for c in &result.components {
        let k = c.source_index;
        let t = truth
            .components()
            .get(k)
            .ok_or_else(|| Error::Numerical(format!("estimate refers to component {k} of {p}")))?;
        err[2 * k] = c.a - t.a;
        err[2 * k + 1] = c.b - t.b;
        err[2 * p + k] = c.alpha - t.alpha;
    }
    err[3 * p] = result.beta - truth.beta();
    if err.iter().any(|e| e.is_nan()) {
        return Err(Error::Numerical("estimate does not cover every component".into()));
    }
    Ok(err)
}

#[derive(Debug, Clone)]
struct MethodOutcome {
    errors: Option<Vec<f64>>,
    converged: bool,
    seconds: f64,
}

fn run_replication(
    config: &SweepConfig,
    point: &GridPointSetup,
    grid_index: usize,
    rep: usize,
) -> Result<Vec<MethodOutcome>> {
    let seed = replication_seed(config.master_seed, grid_index, rep);
    let noise = config.noise.with_sigma(point.noise_sigma).generate(point.n_samples, seed)?;
    let signal = synthesize(&config.params, point.n_samples, Some(&noise))?;
    let hints: Vec<(f64, f64)> =
        config.params.components().iter().map(|c| (c.alpha, config.params.beta())).collect();
    let inits = Inits::from_grid(
        &signal,
        &hints,
        config.init.strategy,
        config.init.grid_points,
        &config.estimator.bounds,
    )?;
    Ok(config
        .methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let result = estimate(method, &signal, &inits, &config.estimator);
            let seconds = if config.record_timing { start.elapsed().as_secs_f64() } else { 0.0 };
            match result.and_then(|r| Ok((estimation_errors(&r, &config.params)?, r.converged()))) {
                Ok((errors, converged)) => MethodOutcome { errors: Some(errors), converged, seconds },
                Err(_) => MethodOutcome { errors: None, converged: false, seconds },
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub axis_value: f64,
    pub method: Method,
    pub parameter: String,
    pub mse: f64,
    pub bias: f64,
    /// Replications that produced an estimate.
    pub n_reps: usize,
    /// Replications with a non-converged search or a failed estimate.
    pub n_nonconverged: usize,
    pub mean_seconds: f64,
    /// MSE over converged replications only; `None` when there are none.
    pub mse_converged: Option<f64>,
    pub n_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub p: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub grid: Vec<GridPointSetup>,
    pub rows: Vec<MseRow>,
}

impl MseReport {
    pub fn get(&self, axis_value: f64, method: Method, parameter: &str) -> Option<&MseRow> {
        self.rows
            .iter()
            .find(|r| r.axis_value == axis_value && r.method == method && r.parameter == parameter)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "axis_value,method,parameter,mse,bias,n_reps,n_nonconverged,mean_seconds")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:e},{:e},{},{},{:e}",
                r.axis_value, r.method, r.parameter, r.mse, r.bias, r.n_reps, r.n_nonconverged, r.mean_seconds
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn replicate(config: &SweepConfig) -> Result<Vec<(GridPointSetup, Vec<Vec<MethodOutcome>>)>> {
    config.validate()?;
    let grid = config.grid()?;
    with_pool(config.threads, || {
        grid.iter()
            .enumerate()
            .map(|(g, point)| {
                let outcomes = (0..config.replications)
                    .into_par_iter()
                    .map(|rep| run_replication(config, point, g, rep))
                    .collect::<Result<Vec<_>>>()?;
                Ok((*point, outcomes))
            })
            .collect()
    })?
}

/// Runs every replication and aggregates squared errors. Replications are
/// reduced in index order, so the report does not depend on the thread count.
pub fn run_sweep(config: &SweepConfig) -> Result<MseReport> {
    let p = config.params.len();
    let names = parameter_names(p);
    let mut rows = Vec::new();
    let grid_outcomes = replicate(config)?;
    for (point, outcomes) in &grid_outcomes {
        for (m, &method) in config.methods.iter().enumerate() {
            let per_method: Vec<&MethodOutcome> = outcomes.iter().map(|o| &o[m]).collect();
            let done: Vec<&MethodOutcome> = per_method.iter().copied().filter(|o| o.errors.is_some()).collect();
            let n_converged = done.iter().filter(|o| o.converged).count();
            let n_nonconverged = per_method.len() - n_converged;
            let mean_seconds = per_method.iter().map(|o| o.seconds).sum::<f64>() / per_method.len() as f64;
            for (j, name) in names.iter().enumerate() {
                let (mut sum, mut sq, mut sq_conv) = (0.0, 0.0, 0.0);
                for o in &done {
                    let e = o.errors.as_ref().expect("filtered")[j];
                    sum += e;
                    sq += e * e;
                    if o.converged {
                        sq_conv += e * e;
                    }
                }
                let n = done.len();
                rows.push(MseRow {
                    axis_value: point.axis_value,
                    method,
                    parameter: name.clone(),
                    mse: if n > 0 { sq / n as f64 } else { f64::NAN },
                    bias: if n > 0 { sum / n as f64 } else { f64::NAN },
                    n_reps: n,
                    n_nonconverged,
                    mean_seconds,
                    mse_converged: (n_converged > 0).then(|| sq_conv / n_converged as f64),
                    n_converged,
                });
            }
        }
    }
    Ok(MseReport {
        p,
        replications: config.replications,
        master_seed: config.master_seed,
        grid: grid_outcomes.iter().map(|(g, _)| *g).collect(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub axis_value: f64,
    pub method: Method,
    pub mean_seconds: f64,
    pub ratio_to_plugin: f64,
    pub n_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
}

impl TimingReport {
    pub fn mean_seconds(&self, axis_value: f64, method: Method) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.axis_value == axis_value && r.method == method)
            .map(|r| r.mean_seconds)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "axis_value,method,mean_seconds,ratio_to_plugin,n_reps")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:e},{:.6},{}",
                r.axis_value, r.method, r.mean_seconds, r.ratio_to_plugin, r.n_reps
            )?;
        }
        Ok(())
    }
}

/// Mean wall-clock time per estimator on shared signals and inits. Runs on
/// one thread so the methods do not compete for cores.
pub fn run_timing(config: &SweepConfig) -> Result<TimingReport> {
    if Method::ALL.iter().any(|m| !config.methods.contains(m)) {
        return Err(Error::Config("timing needs all three methods".into()));
    }
    let mut config = config.clone();
    config.record_timing = true;
    config.threads = Some(1);
    let mut rows = Vec::new();
    for (point, outcomes) in replicate(&config)? {
        let mean = |m: usize| outcomes.iter().map(|o| o[m].seconds).sum::<f64>() / outcomes.len() as f64;
        let plugin_index = config.methods.iter().position(|&m| m == Method::Plugin).expect("checked");
        let plugin = mean(plugin_index);
        for (m, &method) in config.methods.iter().enumerate() {
            let t = mean(m);
            rows.push(TimingRow {
                axis_value: point.axis_value,
                method,
                mean_seconds: t,
                ratio_to_plugin: t / plugin,
                n_reps: outcomes.len(),
            });
        }
    }
    Ok(TimingReport { rows })
}
