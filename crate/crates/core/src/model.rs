//! Parameter space, signal synthesis and the regression design matrix.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One chirp component: `a cos(phase) + b sin(phase)` with
/// `phase = alpha n + beta n^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
}

impl Component {
    pub fn new(a: f64, b: f64, alpha: f64) -> Self {
        Self { a, b, alpha }
    }

    /// `a^2 + b^2`.
    pub fn power(&self) -> f64 {
        self.a * self.a + self.b * self.b
    }
}

/// Full parameter vector of the equal-chirp-rate model.
///
/// Components are held in strictly decreasing order of `a^2 + b^2`, every
/// component has non-zero power, `alpha` lies in `(0, 2pi)` and the shared
/// `beta` in `(0, pi/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChirpParams")]
pub struct ChirpParams {
    components: Vec<Component>,
    beta: f64,
}

#[derive(Deserialize)]
struct RawChirpParams {
    components: Vec<Component>,
    beta: f64,
}

impl TryFrom<RawChirpParams> for ChirpParams {
    type Error = Error;

    fn try_from(raw: RawChirpParams) -> Result<Self> {
        ChirpParams::sorted(raw.components, raw.beta).map(|(params, _)| params)
    }
}

impl ChirpParams {
    /// Builds parameters from components that are already in strictly
    /// decreasing power order. Unordered input is rejected.
    pub fn new(components: Vec<Component>, beta: f64) -> Result<Self> {
        let (params, reordered) = Self::sorted(components, beta)?;
        if reordered {
            return Err(Error::Domain(
                "components must be in strictly decreasing order of a^2 + b^2".into(),
            ));
        }
        Ok(params)
    }

    /// Builds parameters from components in any order, sorting them by
    /// decreasing power. The flag reports whether a reorder happened.
    /// Components of equal power are rejected.
    pub fn sorted(mut components: Vec<Component>, beta: f64) -> Result<(Self, bool)> {
        if components.is_empty() {
            return Err(Error::Domain("at least one component is required".into()));
        }
        for (k, c) in components.iter().enumerate() {
            if !(c.a.is_finite() && c.b.is_finite() && c.alpha.is_finite()) {
                return Err(Error::Domain(format!("component {} is not finite", k + 1)));
            }
            if c.power() <= 0.0 {
                return Err(Error::Domain(format!("component {} has zero power", k + 1)));
            }
            if !(c.alpha > 0.0 && c.alpha < TAU) {
                return Err(Error::Domain(format!(
                    "alpha of component {} is {}, outside (0, 2pi)",
                    k + 1,
                    c.alpha
                )));
            }
        }
        if !(beta > 0.0 && beta < FRAC_PI_2) {
            return Err(Error::Domain(format!("beta is {beta}, outside (0, pi/2)")));
        }
        let reordered = components.windows(2).any(|w| w[0].power() <= w[1].power());
        if reordered {
            components.sort_by(|x, y| y.power().total_cmp(&x.power()));
        }
        if let Some(k) = components.windows(2).position(|w| w[0].power() == w[1].power()) {
            return Err(Error::Domain(format!(
                "components {} and {} have equal power",
                k + 1,
                k + 2
            )));
        }
        Ok((Self { components, beta }, reordered))
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Number of components `p`.
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.components.iter().map(Component::power).collect()
    }

    pub fn nonlinear(&self) -> NonlinearParams {
        NonlinearParams {
            alphas: self.components.iter().map(|c| c.alpha).collect(),
            beta: self.beta,
        }
    }

    /// Stacked amplitudes `(A_1, B_1, ..., A_p, B_p)`.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.components.iter().flat_map(|c| [c.a, c.b]).collect()
    }

    /// The five-component benchmark used throughout the simulation study,
    /// with `B_k = A_k`.
    pub fn benchmark() -> Self {
        Self::benchmark_with_b(&[3.35, 2.8, 2.1, 1.59, 0.9]).expect("benchmark is valid")
    }

    /// The benchmark frequencies and chirp rate with caller-supplied
    /// `B_k` values.
    pub fn benchmark_with_b(b: &[f64]) -> Result<Self> {
        const A: [f64; 5] = [3.35, 2.8, 2.1, 1.59, 0.9];
        const ALPHA: [f64; 5] = [0.89, 0.96, 0.76, 0.56, 0.37];
        if b.len() != 5 {
            return Err(Error::Domain("benchmark needs five B values".into()));
        }
        let components = (0..5).map(|k| Component::new(A[k], b[k], ALPHA[k])).collect();
        Self::new(components, 0.87)
    }
}

/// Nonlinear part of the parameter vector: `(alpha_1, ..., alpha_p, beta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearParams {
    pub alphas: Vec<f64>,
    pub beta: f64,
}

impl NonlinearParams {
    pub fn new(alphas: Vec<f64>, beta: f64) -> Self {
        Self { alphas, beta }
    }

    pub fn single(alpha: f64, beta: f64) -> Self {
        Self { alphas: vec![alpha], beta }
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

/// Admissible region for estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBounds {
    /// Amplitudes live in `[-M, M]`.
    pub amplitude_bound: f64,
    pub alpha_interval: (f64, f64),
    pub beta_interval: (f64, f64),
}

impl Default for ParameterBounds {
    fn default() -> Self {
        Self {
            amplitude_bound: 1.0e3,
            alpha_interval: (0.0, TAU),
            beta_interval: (0.0, FRAC_PI_2),
        }
    }
}

impl ParameterBounds {
    pub fn contains_alpha(&self, alpha: f64) -> bool {
        alpha > self.alpha_interval.0 && alpha < self.alpha_interval.1
    }

    pub fn contains_beta(&self, beta: f64) -> bool {
        beta > self.beta_interval.0 && beta < self.beta_interval.1
    }

    pub fn contains_amplitude(&self, x: f64) -> bool {
        x.abs() <= self.amplitude_bound
    }

    pub fn contains(&self, xi: &NonlinearParams) -> bool {
        xi.alphas.iter().all(|&a| self.contains_alpha(a)) && self.contains_beta(xi.beta)
    }
}

/// Real time series `y(1..N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    samples: Vec<f64>,
}

impl Signal {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("a signal needs at least one sample".into()));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Writes the `n,y` CSV form, one row per sample starting at `n = 1`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::with_capacity(24 * self.samples.len() + 4);
        buf.push_str("n,y\n");
        for (i, y) in self.samples.iter().enumerate() {
            writeln!(buf, "{},{}", i + 1, y).expect("writing to a String");
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Parses the `n,y` CSV form. Rows must be numbered consecutively from 1.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut samples = Vec::new();
        let mut saw_header = false;
        for (idx, line) in input.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if !saw_header {
                if line.replace(' ', "") != "n,y" {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected header `n,y`, found `{line}`"),
                    });
                }
                saw_header = true;
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: line_no, message };
            let (n_field, y_field) = line
                .split_once(',')
                .ok_or_else(|| parse_err(format!("expected two fields, found `{line}`")))?;
            let n: usize = n_field
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("invalid sample index `{}`", n_field.trim())))?;
            let y: f64 = y_field
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("invalid sample value `{}`", y_field.trim())))?;
            if n != samples.len() + 1 {
                return Err(parse_err(format!(
                    "sample index {n} out of sequence, expected {}",
                    samples.len() + 1
                )));
            }
            if !y.is_finite() {
                return Err(parse_err("sample value is not finite".into()));
            }
            samples.push(y);
        }
        if !saw_header {
            return Err(Error::Parse { line: 1, message: "missing header `n,y`".into() });
        }
        Signal::new(samples).map_err(|_| Error::Parse {
            line: 2,
            message: "no sample rows".into(),
        })
    }
}

/// Chirp phase `alpha n + beta n^2` reduced into `[0, 2pi)`.
#[inline]
pub fn phase(alpha: f64, beta: f64, n: usize) -> f64 {
    let n = n as f64;
    (alpha * n + beta * n * n).rem_euclid(TAU)
}

/// Dense column-major `N x 2p` regression matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub(crate) fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `W x` for a stacked amplitude vector `x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "amplitude vector length");
        let mut out = vec![0.0; self.rows];
        for (col, &coef) in x.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.column(col)) {
                *o += coef * w;
            }
        }
        out
    }

    /// `W^T v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "vector length");
        (0..self.cols)
            .map(|col| self.column(col).iter().zip(v).map(|(w, x)| w * x).sum())
            .collect()
    }
}

/// Builds `W(xi)`: column `2k` holds `cos(alpha_k n + beta n^2)` and column
/// `2k + 1` holds the sine, for rows `n = 1..N` (0-based column indices).
pub fn design_matrix(xi: &NonlinearParams, n_samples: usize) -> DesignMatrix {
    assert!(n_samples >= 1, "design matrix needs at least one row");
    assert!(!xi.alphas.is_empty(), "design matrix needs at least one component");
    let rows = n_samples;
    let cols = 2 * xi.alphas.len();
    let mut data = vec![0.0; rows * cols];
    for (k, &alpha) in xi.alphas.iter().enumerate() {
        let (cos_col, rest) = data[2 * k * rows..(2 * k + 2) * rows].split_at_mut(rows);
        for n in 1..=rows {
            let (s, c) = phase(alpha, xi.beta, n).sin_cos();
            cos_col[n - 1] = c;
            rest[n - 1] = s;
        }
    }
    DesignMatrix { rows, cols, data }
}

/// Synthesizes `y(1..N)`, adding `noise` sample-by-sample when given.
pub fn synthesize(params: &ChirpParams, n_samples: usize, noise: Option<&[f64]>) -> Result<Signal> {
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be at least 1".into()));
    }
    if let Some(noise) = noise {
        if noise.len() != n_samples {
            return Err(Error::Domain(format!(
                "noise stream has {} values, expected {n_samples}",
                noise.len()
            )));
        }
    }
    let beta = params.beta();
    let samples = (1..=n_samples)
        .map(|n| {
            let clean: f64 = params
                .components()
                .iter()
                .map(|c| {
                    let (s, co) = phase(c.alpha, beta, n).sin_cos();
                    c.a * co + c.b * s
                })
                .sum();
            clean + noise.map_or(0.0, |x| x[n - 1])
        })
        .collect();
    Signal::new(samples)
}

/// Total signal power `sum_k (A_k^2 + B_k^2) / 2`.
pub fn signal_power(params: &ChirpParams) -> f64 {
    params.powers().iter().sum::<f64>() / 2.0
}

/// Signal power and SNR in dB for per-sample noise standard deviation
/// `sigma`. SNR is total signal power over noise variance.
pub fn signal_power_and_snr(params: &ChirpParams, sigma: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("noise sigma must be positive, got {sigma}")));
    }
    let power = signal_power(params);
    Ok((power, 10.0 * (power / (sigma * sigma)).log10()))
}

/// Noise standard deviation giving the requested SNR.
pub fn sigma_for_snr(params: &ChirpParams, snr_db: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::Domain("SNR must be finite".into()));
    }
    Ok((signal_power(params) / 10f64.powf(snr_db / 10.0)).sqrt())
}
