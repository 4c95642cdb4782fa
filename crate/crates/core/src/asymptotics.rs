//! Closed-form asymptotic covariances of the three estimators.
//!
//! All variances refer to the scaled estimators: amplitudes times `N^{1/2}`,
//! frequencies times `N^{3/2}` and the chirp rate times `N^{5/2}`. Dividing by
//! `N^{2 * power}` gives the finite-sample prediction. With `S_k = A_k^2 + B_k^2`
//! and `T = S_1`, everything is proportional to `2 c sigma^2`.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::model::ChirpParams;

/// Dense row-major matrix as nested vectors.
pub type Matrix = Vec<Vec<f64>>;

const CLOSED_FORM_TOLERANCE: f64 = 1e-8;
const IDENTITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterKind {
    Amplitude,
    Frequency,
    ChirpRate,
}

impl ParameterKind {
    /// Power of `N` in the scaling of this kind of parameter.
    pub fn exponent(&self) -> f64 {
        match self {
            ParameterKind::Amplitude => 0.5,
            ParameterKind::Frequency => 1.5,
            ParameterKind::ChirpRate => 2.5,
        }
    }

    pub fn of_name(name: &str) -> Option<Self> {
        match name.trim_end_matches(|c: char| c.is_ascii_digit()) {
            "A" | "B" => Some(ParameterKind::Amplitude),
            "alpha" => Some(ParameterKind::Frequency),
            "beta" => Some(ParameterKind::ChirpRate),
            _ => None,
        }
    }
}

/// Diagonal scaling in the ordering `(A_1, B_1, ..., A_p, B_p, alpha_1, ..., alpha_p, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingMatrix {
    pub n_samples: usize,
    pub p: usize,
}

impl ScalingMatrix {
    pub fn new(n_samples: usize, p: usize) -> Self {
        Self { n_samples, p }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.n_samples as f64;
        let mut d = vec![n.sqrt(); 2 * self.p];
        d.extend(std::iter::repeat_n(n.powf(1.5), self.p));
        d.push(n.powf(2.5));
        d
    }

    /// Converts a scaled variance to the variance of the raw estimator.
    pub fn unscale(&self, kind: ParameterKind, scaled_variance: f64) -> f64 {
        scaled_variance / (self.n_samples as f64).powf(2.0 * kind.exponent())
    }
}

fn check_noise(c: f64, sigma2: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite() && sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(format!("c and sigma^2 must be positive, got {c} and {sigma2}")));
    }
    Ok(2.0 * c * sigma2)
}

fn to_rows(m: &DMatrix<f64>) -> Matrix {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(rows: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn ensure_close(what: &str, got: f64, expected: f64, tol: f64) -> Result<()> {
    if relative_gap(got, expected) > tol {
        return Err(Error::Numerical(format!("{what}: matrix route {got} vs closed form {expected}")));
    }
    Ok(())
}

/// Limit of the scaled Hessian for the full model, assembled block by block.
pub fn sigma1_inverse(params: &ChirpParams) -> Matrix {
    let p = params.len();
    let dim = 3 * p + 1;
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..2 * p {
        m[(i, i)] = 1.0;
    }
    let mut total = 0.0;
    for (k, comp) in params.components().iter().enumerate() {
        let (a, b, s) = (comp.a, comp.b, comp.power());
        let (ra, rb, ca) = (2 * k, 2 * k + 1, 2 * p + k);
        let cb = dim - 1;
        m[(ra, ca)] = b / 2.0;
        m[(rb, ca)] = -a / 2.0;
        m[(ra, cb)] = b / 3.0;
        m[(rb, cb)] = -a / 3.0;
        m[(ca, ca)] = s / 3.0;
        m[(ca, cb)] = s / 4.0;
        total += s;
    }
    m[(dim - 1, dim - 1)] = total / 5.0;
    let upper = m.clone();
    for i in 0..dim {
        for j in 0..i {
            m[(i, j)] = upper[(j, i)];
        }
    }
    to_rows(&m)
}

fn invert_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LseAvar {
    pub beta: f64,
    pub alpha: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `2 c sigma^2 Sigma_1` in the full parameter ordering.
    pub covariance: Matrix,
}

/// Closed forms for the full least squares estimator, cross-checked against
/// the inverse of [`sigma1_inverse`].
pub fn lse_avar(params: &ChirpParams, c: f64, sigma2: f64) -> Result<LseAvar> {
    let k2 = check_noise(c, sigma2)?;
    let p = params.len();
    let total: f64 = params.powers().iter().sum();
    let beta = 180.0 * k2 / total;
    let alpha: Vec<f64> = params.powers().iter().map(|s| beta + 12.0 * k2 / s).collect();

    let sigma1 = invert_spd(&from_rows(&sigma1_inverse(params)), "Sigma_1 inverse")? * k2;
    let sigma1 = (&sigma1 + sigma1.transpose()) * 0.5;
    let dim = 3 * p + 1;
    ensure_close("beta variance", sigma1[(dim - 1, dim - 1)], beta, CLOSED_FORM_TOLERANCE)?;
    for (k, &v) in alpha.iter().enumerate() {
        ensure_close("alpha variance", sigma1[(2 * p + k, 2 * p + k)], v, CLOSED_FORM_TOLERANCE)?;
    }
    Ok(LseAvar {
        beta,
        alpha,
        a: (0..p).map(|k| sigma1[(2 * k, 2 * k)]).collect(),
        b: (0..p).map(|k| sigma1[(2 * k + 1, 2 * k + 1)]).collect(),
        covariance: to_rows(&sigma1),
    })
}

/// Covariance of one sequentially fitted component `(A, B, alpha, beta)`.
pub fn component_covariance(a: f64, b: f64, k2: f64) -> [[f64; 4]; 4] {
    let f = k2 / (a * a + b * b);
    let m = [
        [a * a + 9.0 * b * b, -8.0 * a * b, -36.0 * b, 30.0 * b],
        [-8.0 * a * b, 9.0 * a * a + b * b, 36.0 * a, -30.0 * a],
        [-36.0 * b, 36.0 * a, 192.0, -180.0],
        [30.0 * b, -30.0 * a, -180.0, 180.0],
    ];
    m.map(|row| row.map(|v| v * f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedAvar {
    /// Per-component covariance of `(A_k, B_k, alpha_k, beta_k)`.
    pub components: Vec<[[f64; 4]; 4]>,
    pub weights: Vec<f64>,
    /// Variance of the power-weighted chirp rate.
    pub beta: f64,
    pub alpha: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Block-diagonal covariance of all `4p` per-component estimates.
    pub covariance: Matrix,
}

pub fn combined_avar(params: &ChirpParams, c: f64, sigma2: f64) -> Result<CombinedAvar> {
    let k2 = check_noise(c, sigma2)?;
    let p = params.len();
    let powers = params.powers();
    let total: f64 = powers.iter().sum();
    let weights: Vec<f64> = powers.iter().map(|s| s / total).collect();
    let components: Vec<_> = params
        .components()
        .iter()
        .map(|comp| component_covariance(comp.a, comp.b, k2))
        .collect();
    let beta: f64 = weights.iter().zip(&components).map(|(w, m)| w * w * m[3][3]).sum();
    let lse_beta = 180.0 * k2 / total;
    if relative_gap(beta, lse_beta) > IDENTITY_TOLERANCE {
        return Err(Error::Numerical(format!(
            "fused chirp-rate variance {beta} differs from {lse_beta}"
        )));
    }
    let mut full = vec![vec![0.0; 4 * p]; 4 * p];
    for (k, m) in components.iter().enumerate() {
        for i in 0..4 {
            for j in 0..4 {
                full[4 * k + i][4 * k + j] = m[i][j];
            }
        }
    }
    Ok(CombinedAvar {
        alpha: components.iter().map(|m| m[2][2]).collect(),
        a: components.iter().map(|m| m[0][0]).collect(),
        b: components.iter().map(|m| m[1][1]).collect(),
        components,
        weights,
        beta,
        covariance: full,
    })
}

/// How the cross-component score covariances between two later components
/// of the plugin estimator are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CrossTermConvention {
    /// As printed, with no `1 / S_1` factor.
    #[default]
    Verbatim,
    /// Divided by `S_1`, matching the dimension of the within-component terms.
    DividedByLeadingPower,
}

/// `Sigma_bar_k`, the limit of the scaled Hessian of a frequency-only fit.
pub fn sigma_bar(a: f64, b: f64) -> [[f64; 3]; 3] {
    let s = a * a + b * b;
    [[1.0, 0.0, b / 2.0], [0.0, 1.0, -a / 2.0], [b / 2.0, -a / 2.0, s / 3.0]]
}

/// Closed-form inverse of [`sigma_bar`].
pub fn sigma_bar_inverse(a: f64, b: f64) -> [[f64; 3]; 3] {
    let s = a * a + b * b;
    let m = [
        [a * a + 4.0 * b * b, -3.0 * a * b, -6.0 * b],
        [-3.0 * a * b, 4.0 * a * a + b * b, 6.0 * a],
        [-6.0 * b, 6.0 * a, 12.0],
    ];
    m.map(|row| row.map(|v| v / s))
}

/// Score covariance `Sigma_3^k` of a later plugin component, in units of `2 c sigma^2`.
pub fn sigma3(a: f64, b: f64, leading_power: f64) -> [[f64; 3]; 3] {
    let (s, t) = (a * a + b * b, leading_power);
    let g = 0.5 + 15.0 * s / t;
    [
        [1.0 + 20.0 * b * b / t, -20.0 * a * b / t, b * g],
        [-20.0 * a * b / t, 1.0 + 20.0 * a * a / t, -a * g],
        [b * g, -a * g, s / 3.0 + 45.0 * s * s / (4.0 * t)],
    ]
}

/// Cross score covariance between later components `k` and `j`, in units of
/// `2 c sigma^2`. Rows follow `(A_k, B_k, alpha_k)`, columns `(A_j, B_j, alpha_j)`.
pub fn cross_score_covariance(
    (ak, bk): (f64, f64),
    (aj, bj): (f64, f64),
    leading_power: f64,
    convention: CrossTermConvention,
) -> [[f64; 3]; 3] {
    let (sk, sj) = (ak * ak + bk * bk, aj * aj + bj * bj);
    let m = [
        [20.0 * bj * bk, -20.0 * aj * bk, 15.0 * bk * sj],
        [-20.0 * bj * ak, 20.0 * aj * ak, -15.0 * ak * sj],
        [15.0 * bj * sk, -15.0 * aj * sk, 45.0 / 4.0 * sk * sj],
    ];
    match convention {
        CrossTermConvention::Verbatim => m,
        CrossTermConvention::DividedByLeadingPower => m.map(|r| r.map(|v| v / leading_power)),
    }
}

fn mat3_mul(x: &[[f64; 3]; 3], y: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|l| x[i][l] * y[l][j]).sum();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginAvar {
    pub beta: f64,
    pub alpha: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Covariance of `(A_k, B_k, alpha_k)` for `k >= 2` from the sandwich form.
    pub sandwich: Vec<[[f64; 3]; 3]>,
    /// Covariance between `(A_1, B_1, alpha_1, beta)` and `(A_k, B_k, alpha_k)` for `k >= 2`.
    pub first_cross: Vec<[[f64; 3]; 4]>,
    pub convention: CrossTermConvention,
    /// Full covariance in the ordering `(A_1, B_1, alpha_1, beta, A_2, B_2, alpha_2, ...)`.
    pub covariance: Matrix,
}

pub fn plugin_avar(
    params: &ChirpParams,
    c: f64,
    sigma2: f64,
    convention: CrossTermConvention,
) -> Result<PluginAvar> {
    let k2 = check_noise(c, sigma2)?;
    let comps = params.components();
    let p = comps.len();
    let t = comps[0].power();
    let first = component_covariance(comps[0].a, comps[0].b, k2);

    let mut alpha = vec![first[2][2]];
    let mut a = vec![first[0][0]];
    let mut b = vec![first[1][1]];
    let mut sandwich = Vec::with_capacity(p.saturating_sub(1));
    let mut first_cross = Vec::with_capacity(p.saturating_sub(1));
    for comp in &comps[1..] {
        let (ak, bk, sk) = (comp.a, comp.b, comp.power());
        let inv = sigma_bar_inverse(ak, bk);
        let raw = mat3_mul(&mat3_mul(&inv, &sigma3(ak, bk, t)), &inv);
        let m: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| 0.5 * k2 * (raw[i][j] + raw[j][i])));

        let alpha_k = 12.0 * k2 / sk + 180.0 * k2 / t;
        let a_k = k2 / sk * ((ak * ak + 4.0 * bk * bk) + 5.0 * bk * bk * sk / t);
        let b_k = k2 / sk * ((4.0 * ak * ak + bk * bk) + 5.0 * ak * ak * sk / t);
        ensure_close("plugin alpha variance", m[2][2], alpha_k, CLOSED_FORM_TOLERANCE)?;
        ensure_close("plugin A variance", m[0][0], a_k, CLOSED_FORM_TOLERANCE)?;
        ensure_close("plugin B variance", m[1][1], b_k, CLOSED_FORM_TOLERANCE)?;
        alpha.push(alpha_k);
        a.push(a_k);
        b.push(b_k);
        sandwich.push(m);

        let (a1, b1) = (comps[0].a, comps[0].b);
        let f = k2 / t;
        first_cross.push([
            [5.0 * b1 * bk * f, -5.0 * b1 * ak * f, -30.0 * b1 * f],
            [-5.0 * a1 * bk * f, 5.0 * a1 * ak * f, 30.0 * a1 * f],
            [-30.0 * bk * f, 30.0 * ak * f, 180.0 * f],
            [30.0 * bk * f, -30.0 * ak * f, -180.0 * f],
        ]);
    }

    let dim = 3 * p + 1;
    let mut full = vec![vec![0.0; dim]; dim];
    for i in 0..4 {
        for j in 0..4 {
            full[i][j] = first[i][j];
        }
    }
    let offset = |k: usize| 4 + 3 * (k - 1);
    for k in 1..p {
        let ok = offset(k);
        for i in 0..3 {
            for j in 0..3 {
                full[ok + i][ok + j] = sandwich[k - 1][i][j];
            }
        }
        for i in 0..4 {
            for j in 0..3 {
                full[i][ok + j] = first_cross[k - 1][i][j];
                full[ok + j][i] = first_cross[k - 1][i][j];
            }
        }
        for j in k + 1..p {
            let oj = offset(j);
            let (ck, cj) = (&comps[k], &comps[j]);
            let cross = cross_score_covariance((ck.a, ck.b), (cj.a, cj.b), t, convention);
            let m = mat3_mul(&mat3_mul(&sigma_bar_inverse(ck.a, ck.b), &cross), &sigma_bar_inverse(cj.a, cj.b));
            for r in 0..3 {
                for s in 0..3 {
                    full[ok + r][oj + s] = k2 * m[r][s];
                    full[oj + s][ok + r] = k2 * m[r][s];
                }
            }
        }
    }

    Ok(PluginAvar { beta: first[3][3], alpha, a, b, sandwich, first_cross, convention, covariance: full })
}

/// Plugin minus combined asymptotic variances for one component `k >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// 1-based component index.
    pub component: usize,
    /// `360 c sigma^2 (S_k - S_1) / (S_1 S_k)`.
    pub delta_alpha: f64,
    /// The same difference taken from the two variance formulas.
    pub delta_alpha_direct: f64,
    /// `(3A^2 - 8B^2)/S_k + 5A^2/S_1`, the printed amplitude-A comparison.
    pub delta1: f64,
    /// `(Var(A plugin) - Var(A combined)) / (2 c sigma^2)` from the variance formulas.
    pub delta1_direct: f64,
    /// `(8(A^2 - B^2)/S_1, 8(A^2 - B^2)/S_k)`.
    pub delta1_bracket: (f64, f64),
    /// `(3B^2 - 8A^2)/S_k + 5B^2/S_1`, the printed amplitude-B comparison.
    pub delta2: f64,
    pub delta2_direct: f64,
    /// `(8(B^2 - A^2)/S_1, 8(B^2 - A^2)/S_k)`.
    pub delta2_bracket: (f64, f64),
}

pub fn estimator_comparison(params: &ChirpParams, c: f64, sigma2: f64) -> Result<Vec<ComparisonRow>> {
    let k2 = check_noise(c, sigma2)?;
    if params.len() < 2 {
        return Err(Error::Domain("the comparison needs at least two components".into()));
    }
    let plugin = plugin_avar(params, c, sigma2, CrossTermConvention::Verbatim)?;
    let combined = combined_avar(params, c, sigma2)?;
    let t = params.components()[0].power();
    let rows = params
        .components()
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, comp)| {
            let (a2, b2, s) = (comp.a * comp.a, comp.b * comp.b, comp.power());
            ComparisonRow {
                component: k + 1,
                delta_alpha: 180.0 * k2 * (s - t) / (t * s),
                delta_alpha_direct: plugin.alpha[k] - combined.alpha[k],
                delta1: (3.0 * a2 - 8.0 * b2) / s + 5.0 * a2 / t,
                delta1_direct: (plugin.a[k] - combined.a[k]) / k2,
                delta1_bracket: (8.0 * (a2 - b2) / t, 8.0 * (a2 - b2) / s),
                delta2: (3.0 * b2 - 8.0 * a2) / s + 5.0 * b2 / t,
                delta2_direct: (plugin.b[k] - combined.b[k]) / k2,
                delta2_bracket: (8.0 * (b2 - a2) / t, 8.0 * (b2 - a2) / s),
            }
        })
        .collect();
    Ok(rows)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    SymmetricEigen::new(from_rows(m)).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEntry {
    pub method: Method,
    pub parameter: String,
    pub scaled_variance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unscaled_variance_at_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub c: f64,
    pub sigma2: f64,
    pub n_samples: Option<usize>,
    pub entries: Vec<VarianceEntry>,
    pub lse: LseAvar,
    pub combined: CombinedAvar,
    pub plugin: PluginAvar,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub comparison: Vec<ComparisonRow>,
}

impl AsymptoticReport {
    pub fn new(
        params: &ChirpParams,
        c: f64,
        sigma2: f64,
        n_samples: Option<usize>,
        convention: CrossTermConvention,
    ) -> Result<Self> {
        let lse = lse_avar(params, c, sigma2)?;
        let combined = combined_avar(params, c, sigma2)?;
        let plugin = plugin_avar(params, c, sigma2, convention)?;
        let comparison = if params.len() >= 2 { estimator_comparison(params, c, sigma2)? } else { Vec::new() };
        let scaling = n_samples.map(|n| ScalingMatrix::new(n, params.len()));

        let mut entries = Vec::new();
        let mut push = |method: Method, parameter: String, v: f64| {
            let unscaled = scaling.and_then(|s| ParameterKind::of_name(&parameter).map(|k| s.unscale(k, v)));
            entries.push(VarianceEntry { method, parameter, scaled_variance: v, unscaled_variance_at_n: unscaled });
        };
        for (method, a, b, alpha, beta) in [
            (Method::Lse, &lse.a, &lse.b, &lse.alpha, lse.beta),
            (Method::Combined, &combined.a, &combined.b, &combined.alpha, combined.beta),
            (Method::Plugin, &plugin.a, &plugin.b, &plugin.alpha, plugin.beta),
        ] {
            for k in 0..params.len() {
                push(method, format!("A{}", k + 1), a[k]);
                push(method, format!("B{}", k + 1), b[k]);
            }
            for (k, v) in alpha.iter().enumerate() {
                push(method, format!("alpha{}", k + 1), *v);
            }
            push(method, "beta".into(), beta);
        }
        Ok(Self { c, sigma2, n_samples, entries, lse, combined, plugin, comparison })
    }

    pub fn get(&self, method: Method, parameter: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.method == method && e.parameter == parameter)
            .map(|e| e.scaled_variance)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "method,parameter,scaled_variance,unscaled_variance_at_N")?;
        for e in &self.entries {
            let unscaled = e.unscaled_variance_at_n.map(|v| format!("{v:e}")).unwrap_or_default();
            writeln!(out, "{},{},{:e},{}", e.method, e.parameter, e.scaled_variance, unscaled)?;
        }
        Ok(())
    }
}
