//! Full least squares, sequential combined and sequential plugin estimators.
//!
//! Every nonlinear search runs in scaled coordinates `u = N (alpha - alpha_0)`
//! and `v = N^2 (beta - beta_0)` around its starting point, which puts both
//! directions on the scale of their own estimation error.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChirpParams, Component, NonlinearParams, ParameterBounds, Signal};
use crate::optimize::{grid_search, initializer, nelder_mead, GridAxis, GridSpec, InitStrategy, NelderMeadOptions};
use crate::varpro::{ReducedObjective, SeparableFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lse,
    Combined,
    Plugin,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lse, Method::Combined, Method::Plugin];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Lse => "lse",
            Method::Combined => "combined",
            Method::Plugin => "plugin",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lse" => Ok(Method::Lse),
            "combined" => Ok(Method::Combined),
            "plugin" => Ok(Method::Plugin),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected lse, combined or plugin)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorOptions {
    pub optimizer: NelderMeadOptions,
    pub bounds: ParameterBounds,
}

/// One estimated component. `beta` is the chirp rate this component was
/// fitted and subtracted with; `rss` is the objective value of the search
/// that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentEstimate {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rss: f64,
    /// Position of this component's init in the caller's init list.
    pub source_index: usize,
}

impl ComponentEstimate {
    pub fn power(&self) -> f64 {
        self.a * self.a + self.b * self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerCall {
    pub dim: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    pub optimizer_calls: Vec<OptimizerCall>,
    /// Residual sum of squares left after the last fitted component.
    pub total_rss: f64,
    /// Set when a sequential step found more power than the step before it.
    pub ordering_violation: bool,
    /// Weights of the per-component chirp rates in the fused estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fusion_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub method: Method,
    pub components: Vec<ComponentEstimate>,
    /// The reported shared chirp rate.
    pub beta: f64,
    pub diagnostics: Diagnostics,
}

impl EstimationResult {
    pub fn converged(&self) -> bool {
        self.diagnostics.optimizer_calls.iter().all(|c| c.converged)
    }

    pub fn nonlinear(&self) -> NonlinearParams {
        NonlinearParams::new(self.components.iter().map(|c| c.alpha).collect(), self.beta)
    }

    /// Estimates as a validated parameter vector, in decreasing power order.
    pub fn params_hat(&self) -> Result<ChirpParams> {
        let comps = self.components.iter().map(|c| Component::new(c.a, c.b, c.alpha)).collect();
        ChirpParams::sorted(comps, self.beta).map(|(p, _)| p)
    }

    /// `(dimension, count)` of the nonlinear searches performed.
    pub fn optimizer_dims(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for call in &self.diagnostics.optimizer_calls {
            match out.iter_mut().find(|(d, _)| *d == call.dim) {
                Some((_, n)) => *n += 1,
                None => out.push((call.dim, 1)),
            }
        }
        out
    }
}

/// Starting points for all three estimators, one `(alpha_k, beta_k)` pair
/// per component in the order the components should be extracted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inits {
    pub pairs: Vec<(f64, f64)>,
}

impl Inits {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Domain("at least one init is required".into()));
        }
        Ok(Self { pairs })
    }

    /// Every component starts at the same chirp rate.
    pub fn shared(nonlinear: &NonlinearParams) -> Result<Self> {
        Self::new(nonlinear.alphas.iter().map(|&a| (a, nonlinear.beta)).collect())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// All frequencies with the chirp rate of the first component.
    pub fn lse(&self) -> NonlinearParams {
        NonlinearParams::new(self.pairs.iter().map(|p| p.0).collect(), self.pairs[0].1)
    }

    pub fn combined(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn plugin(&self) -> ((f64, f64), Vec<f64>) {
        (self.pairs[0], self.pairs[1..].iter().map(|p| p.0).collect())
    }

    /// Per-component 2-D grid search of the single-component reduced RSS on
    /// the raw series, centred on `hints`.
    pub fn from_grid(
        signal: &Signal,
        hints: &[(f64, f64)],
        strategy: InitStrategy,
        points: usize,
        bounds: &ParameterBounds,
    ) -> Result<Self> {
        let objective = ReducedObjective::new(signal.samples(), 1, *bounds)?;
        let pairs = hints
            .iter()
            .map(|&hint| {
                let grid = initializer(strategy, hint, signal.n_samples(), points)?;
                let best = grid_search(|x| objective.value(&NonlinearParams::single(x[0], x[1])), &grid);
                if best.value.is_finite() {
                    Ok((best.x[0], best.x[1]))
                } else {
                    Err(Error::Domain(format!(
                        "init grid around ({}, {}) lies outside the parameter bounds",
                        hint.0, hint.1
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }

    /// Per-component 2-D grid search of the single-component reduced RSS
    /// over user-supplied boxes, for data without known parameters.
    pub fn from_boxes(signal: &Signal, boxes: &[InitBox], points: usize, bounds: &ParameterBounds) -> Result<Self> {
        let objective = ReducedObjective::new(signal.samples(), 1, *bounds)?;
        let pairs = boxes
            .iter()
            .map(|b| {
                let grid = GridSpec::new(vec![
                    GridAxis::new(b.alpha.0, b.alpha.1, points)?,
                    GridAxis::new(b.beta.0, b.beta.1, points)?,
                ])?;
                let best = grid_search(|x| objective.value(&NonlinearParams::single(x[0], x[1])), &grid);
                if best.value.is_finite() {
                    Ok((best.x[0], best.x[1]))
                } else {
                    Err(Error::Domain(format!("init box {b:?} lies outside the parameter bounds")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }
}

/// Search box for one component's `(alpha, beta)` starting point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitBox {
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
}

/// Scaled-coordinate search: `alpha_k = alphas0_k + z_k / N`, and when
/// `beta_free`, `beta = beta0 + z_last / N^2`.
fn search(
    objective: &ReducedObjective<'_>,
    alphas0: &[f64],
    beta0: f64,
    beta_free: bool,
    opts: &NelderMeadOptions,
) -> Result<(NonlinearParams, SeparableFit, OptimizerCall)> {
    let n = objective.samples().len() as f64;
    let p = alphas0.len();
    let to_xi = |z: &[f64]| {
        let alphas = alphas0.iter().zip(z).map(|(a, u)| a + u / n).collect();
        let beta = if beta_free { beta0 + z[p] / (n * n) } else { beta0 };
        NonlinearParams::new(alphas, beta)
    };
    let start = NonlinearParams::new(alphas0.to_vec(), beta0);
    if !objective.bounds().contains(&start) {
        return Err(Error::Domain(format!("init {start:?} lies outside the parameter bounds")));
    }
    // Surfaces a degenerate starting design as an error instead of a bad start.
    objective.fit(&start)?;

    let dim = p + usize::from(beta_free);
    let nm = nelder_mead(|z| objective.value(&to_xi(z)), &vec![0.0; dim], opts)?;
    let xi = to_xi(&nm.x);
    let fit = objective.fit(&xi)?;
    let call = OptimizerCall {
        dim,
        iterations: nm.iterations,
        evaluations: nm.evaluations,
        converged: nm.converged,
        objective: nm.f,
    };
    Ok((xi, fit, call))
}

fn subtract(series: &mut [f64], fitted: &[f64]) {
    series.iter_mut().zip(fitted).for_each(|(y, f)| *y -= f);
}

/// Full least squares: one `(p + 1)`-dimensional search from `init`.
/// Components are reported in decreasing estimated power.
pub fn estimate_lse(
    signal: &Signal,
    p: usize,
    init: &NonlinearParams,
    opts: &EstimatorOptions,
) -> Result<EstimationResult> {
    if init.len() != p {
        return Err(Error::Domain(format!("expected {p} frequency inits, got {}", init.len())));
    }
    let objective = ReducedObjective::new(signal.samples(), p, opts.bounds)?;
    let (xi, fit, call) = search(&objective, &init.alphas, init.beta, true, &opts.optimizer)?;
    let mut components: Vec<ComponentEstimate> = (0..p)
        .map(|k| ComponentEstimate {
            a: fit.amplitudes[2 * k],
            b: fit.amplitudes[2 * k + 1],
            alpha: xi.alphas[k],
            beta: xi.beta,
            rss: fit.rss,
            source_index: k,
        })
        .collect();
    components.sort_by(|x, y| y.power().total_cmp(&x.power()));
    Ok(EstimationResult {
        method: Method::Lse,
        components,
        beta: xi.beta,
        diagnostics: Diagnostics {
            optimizer_calls: vec![call],
            total_rss: fit.rss,
            ..Default::default()
        },
    })
}

/// Weights `S_k / sum_j S_j` for fusing per-component chirp rates.
pub fn fusion_weights(powers: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = powers.iter().sum();
    if powers.is_empty() || powers.iter().any(|s| !(*s >= 0.0)) || !(total > 0.0) {
        return Err(Error::Numerical(format!("cannot form fusion weights from powers {powers:?}")));
    }
    Ok(powers.iter().map(|s| s / total).collect())
}

/// Sequential combined estimator: `p` two-dimensional searches, each on the
/// residual left by its predecessors, then a power-weighted average of the
/// per-component chirp rates. Amplitudes are not refitted afterwards.
pub fn estimate_sequential_combined(
    signal: &Signal,
    p: usize,
    inits: &[(f64, f64)],
    opts: &EstimatorOptions,
) -> Result<EstimationResult> {
    if inits.len() != p {
        return Err(Error::Domain(format!("expected {p} inits, got {}", inits.len())));
    }
    ReducedObjective::new(signal.samples(), p, opts.bounds)?;
    let mut series = signal.samples().to_vec();
    let mut components = Vec::with_capacity(p);
    let mut calls = Vec::with_capacity(p);
    let mut total_rss = 0.0;
    for (k, &(alpha0, beta0)) in inits.iter().enumerate() {
        let objective = ReducedObjective::new(&series, 1, opts.bounds)?;
        let (xi, fit, call) = search(&objective, &[alpha0], beta0, true, &opts.optimizer)?;
        components.push(ComponentEstimate {
            a: fit.amplitudes[0],
            b: fit.amplitudes[1],
            alpha: xi.alphas[0],
            beta: xi.beta,
            rss: fit.rss,
            source_index: k,
        });
        calls.push(call);
        total_rss = fit.rss;
        subtract(&mut series, &fit.fitted);
    }
    let powers: Vec<f64> = components.iter().map(ComponentEstimate::power).collect();
    let ordering_violation = powers.windows(2).any(|w| w[1] > w[0]);
    let weights = fusion_weights(&powers)?;
    let beta = components.iter().zip(&weights).map(|(c, w)| w * c.beta).sum();
    Ok(EstimationResult {
        method: Method::Combined,
        components,
        beta,
        diagnostics: Diagnostics {
            optimizer_calls: calls,
            total_rss,
            ordering_violation,
            fusion_weights: Some(weights),
        },
    })
}

/// Sequential plugin estimator: one two-dimensional search for the first
/// component, then `p - 1` frequency-only searches with the chirp rate held
/// at the first component's estimate.
pub fn estimate_sequential_plugin(
    signal: &Signal,
    p: usize,
    init1: (f64, f64),
    alpha_inits: &[f64],
    opts: &EstimatorOptions,
) -> Result<EstimationResult> {
    if alpha_inits.len() + 1 != p {
        return Err(Error::Domain(format!(
            "expected {} frequency inits after the first, got {}",
            p.saturating_sub(1),
            alpha_inits.len()
        )));
    }
    ReducedObjective::new(signal.samples(), p, opts.bounds)?;
    let mut series = signal.samples().to_vec();
    let objective = ReducedObjective::new(&series, 1, opts.bounds)?;
    let (xi, fit, call) = search(&objective, &[init1.0], init1.1, true, &opts.optimizer)?;
    let beta = xi.beta;
    let mut components = vec![ComponentEstimate {
        a: fit.amplitudes[0],
        b: fit.amplitudes[1],
        alpha: xi.alphas[0],
        beta,
        rss: fit.rss,
        source_index: 0,
    }];
    let mut calls = vec![call];
    let mut total_rss = fit.rss;
    subtract(&mut series, &fit.fitted);

    for (j, &alpha0) in alpha_inits.iter().enumerate() {
        let objective = ReducedObjective::new(&series, 1, opts.bounds)?;
        let (xi, fit, call) = search(&objective, &[alpha0], beta, false, &opts.optimizer)?;
        components.push(ComponentEstimate {
            a: fit.amplitudes[0],
            b: fit.amplitudes[1],
            alpha: xi.alphas[0],
            beta,
            rss: fit.rss,
            source_index: j + 1,
        });
        calls.push(call);
        total_rss = fit.rss;
        subtract(&mut series, &fit.fitted);
    }
    let ordering_violation = components.windows(2).any(|w| w[1].power() > w[0].power());
    Ok(EstimationResult {
        method: Method::Plugin,
        components,
        beta,
        diagnostics: Diagnostics {
            optimizer_calls: calls,
            total_rss,
            ordering_violation,
            fusion_weights: None,
        },
    })
}

/// Runs `method` from the starting points in `inits`.
pub fn estimate(
    method: Method,
    signal: &Signal,
    inits: &Inits,
    opts: &EstimatorOptions,
) -> Result<EstimationResult> {
    let p = inits.len();
    match method {
        Method::Lse => estimate_lse(signal, p, &inits.lse(), opts),
        Method::Combined => estimate_sequential_combined(signal, p, inits.combined(), opts),
        Method::Plugin => {
            let (first, rest) = inits.plugin();
            estimate_sequential_plugin(signal, p, first, &rest, opts)
        }
    }
}
