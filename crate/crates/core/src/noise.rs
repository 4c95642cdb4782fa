//! Stationary linear-process noise `X(n) = sum_j a(j) e(n - j)` with
//! i.i.d. Gaussian innovations `e(n) ~ N(0, sigma^2)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Warm-up samples discarded before an ARMA(1,1) stream is emitted.
pub const ARMA_BURN_IN: usize = 500;

fn default_phi() -> f64 {
    0.6
}

fn default_theta() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseModel {
    /// `X(n) = e(n)`.
    Iid { sigma: f64 },
    /// `X(n) = phi X(n-1) + e(n) + theta e(n-1)`.
    Arma11 {
        #[serde(default = "default_phi")]
        phi: f64,
        #[serde(default = "default_theta")]
        theta: f64,
        sigma: f64,
    },
    /// Finite two-sided filter. `coefficients[i]` is `a(first_lag + i)`.
    Linear {
        coefficients: Vec<f64>,
        #[serde(default)]
        first_lag: i64,
        sigma: f64,
    },
}

impl NoiseModel {
    /// The E2 error process of the simulation study.
    pub fn e2(sigma: f64) -> Self {
        NoiseModel::Arma11 { phi: 0.6, theta: 0.1, sigma }
    }

    /// Innovation standard deviation.
    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseModel::Iid { sigma }
            | NoiseModel::Arma11 { sigma, .. }
            | NoiseModel::Linear { sigma, .. } => sigma,
        }
    }

    /// The same process with a different innovation standard deviation.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            NoiseModel::Iid { sigma: s }
            | NoiseModel::Arma11 { sigma: s, .. }
            | NoiseModel::Linear { sigma: s, .. } => *s = sigma,
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let sigma = self.sigma();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("noise sigma must be positive, got {sigma}")));
        }
        match self {
            NoiseModel::Iid { .. } => Ok(()),
            NoiseModel::Arma11 { phi, theta, .. } => {
                if !theta.is_finite() || !phi.is_finite() {
                    return Err(Error::Domain("ARMA coefficients must be finite".into()));
                }
                if phi.abs() >= 1.0 {
                    return Err(Error::Domain(format!(
                        "ARMA(1,1) with |phi| = {} >= 1 is not stationary",
                        phi.abs()
                    )));
                }
                Ok(())
            }
            NoiseModel::Linear { coefficients, .. } => {
                if coefficients.is_empty() {
                    return Err(Error::Domain("linear process needs at least one coefficient".into()));
                }
                if coefficients.iter().any(|a| !a.is_finite()) {
                    return Err(Error::Domain("linear process coefficients must be finite".into()));
                }
                Ok(())
            }
        }
    }

    /// Long-run constant `c = sum_j a(j)^2` of the process, the factor
    /// multiplying `sigma^2` in every asymptotic variance. Equals the
    /// process variance divided by the innovation variance.
    pub fn long_run_constant(&self) -> f64 {
        match self {
            NoiseModel::Iid { .. } => 1.0,
            NoiseModel::Arma11 { phi, theta, .. } => {
                (1.0 + 2.0 * phi * theta + theta * theta) / (1.0 - phi * phi)
            }
            NoiseModel::Linear { coefficients, .. } => coefficients.iter().map(|a| a * a).sum(),
        }
    }

    /// Stationary variance of `X(n)`.
    pub fn variance(&self) -> f64 {
        self.long_run_constant() * self.sigma() * self.sigma()
    }

    /// Draws `n_samples` values. Deterministic in `(self, n_samples, seed)`.
    pub fn generate(&self, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        if n_samples == 0 {
            return Err(Error::Domain("n_samples must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = self.sigma();
        let mut innovations = |count: usize| -> Vec<f64> {
            (0..count)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sigma * z
                })
                .collect()
        };
        match *self {
            NoiseModel::Iid { .. } => Ok(innovations(n_samples)),
            NoiseModel::Arma11 { phi, theta, .. } => {
                let e = innovations(ARMA_BURN_IN + n_samples);
                let mut out = Vec::with_capacity(n_samples);
                let (mut x_prev, mut e_prev) = (0.0, 0.0);
                for (t, &e_t) in e.iter().enumerate() {
                    let x = phi * x_prev + e_t + theta * e_prev;
                    if t >= ARMA_BURN_IN {
                        out.push(x);
                    }
                    x_prev = x;
                    e_prev = e_t;
                }
                Ok(out)
            }
            NoiseModel::Linear { ref coefficients, .. } => {
                // The innovation window is e(1 - last_lag) ..= e(N - first_lag);
                // first_lag only relabels it, so it does not affect the draw.
                let taps = coefficients.len();
                let e = innovations(n_samples + taps - 1);
                let out = (0..n_samples)
                    .map(|n| {
                        coefficients
                            .iter()
                            .enumerate()
                            .fold(0.0, |acc, (i, a)| acc + a * e[n + taps - 1 - i])
                    })
                    .collect();
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n)
    }

    /// MA(infinity) weights of ARMA(1,1): psi_0 = 1, psi_j = (phi + theta) phi^(j-1).
    fn truncated_ma_constant(phi: f64, theta: f64, terms: usize) -> f64 {
        let mut sum = 1.0;
        let mut psi = phi + theta;
        for _ in 1..terms {
            sum += psi * psi;
            psi *= phi;
        }
        sum
    }

    #[test]
    fn iid_variance() {
        let x = NoiseModel::Iid { sigma: 1.0 }.generate(100_000, 7).unwrap();
        let (_, v) = mean_var(&x);
        assert!((0.98..=1.02).contains(&v), "{v}");
    }

    #[test]
    fn arma_variance_and_lag_one_autocovariance() {
        let (phi, theta) = (0.6, 0.1);
        let model = NoiseModel::e2(1.0);
        let x = model.generate(100_000, 11).unwrap();
        let (m, v) = mean_var(&x);
        let expect = (1.0 + 2.0 * phi * theta + theta * theta) / (1.0 - phi * phi);
        assert!((expect - 1.765625f64).abs() < 1e-15);
        assert!((v / expect - 1.0).abs() < 0.03, "{v}");

        let n = x.len();
        let g1 = (0..n - 1).map(|i| (x[i] - m) * (x[i + 1] - m)).sum::<f64>() / n as f64;
        let g1_expect = (1.0 + phi * theta) * (phi + theta) / (1.0 - phi * phi);
        assert!((g1 / g1_expect - 1.0).abs() < 0.05, "{g1} vs {g1_expect}");
    }

    #[test]
    fn single_tap_filter_matches_iid_stream() {
        let a = NoiseModel::Linear { coefficients: vec![1.0], first_lag: 0, sigma: 2.0 };
        let b = NoiseModel::Iid { sigma: 2.0 };
        assert_eq!(a.generate(257, 99).unwrap(), b.generate(257, 99).unwrap());
    }

    #[test]
    fn linear_process_is_a_convolution() {
        let coefficients = vec![0.5, -0.25, 0.125];
        let model = NoiseModel::Linear { coefficients: coefficients.clone(), first_lag: 0, sigma: 1.0 };
        let x = model.generate(20, 5).unwrap();
        let e = NoiseModel::Iid { sigma: 1.0 }.generate(22, 5).unwrap();
        for n in 0..20 {
            // X(n) = a0 e(n) + a1 e(n-1) + a2 e(n-2) with e shifted by two warm-up draws.
            let expect = 0.5 * e[n + 2] - 0.25 * e[n + 1] + 0.125 * e[n];
            assert!((x[n] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn long_run_constants() {
        assert_eq!(NoiseModel::Iid { sigma: 3.0 }.long_run_constant(), 1.0);
        let lp = NoiseModel::Linear { coefficients: vec![0.5, 0.5], first_lag: 0, sigma: 1.0 };
        assert!((lp.long_run_constant() - 0.5).abs() < 1e-15);
        let unit = NoiseModel::Linear { coefficients: vec![0.0, 1.0, 0.0], first_lag: -1, sigma: 1.0 };
        assert_eq!(unit.long_run_constant(), 1.0);
        let c = NoiseModel::e2(1.0).long_run_constant();
        assert!((c - truncated_ma_constant(0.6, 0.1, 200)).abs() < 1e-12);
        assert!((c - 1.765625).abs() < 1e-15);
    }

    #[test]
    fn determinism_and_errors() {
        let m = NoiseModel::e2(1.5);
        assert_eq!(m.generate(300, 1).unwrap(), m.generate(300, 1).unwrap());
        assert_ne!(m.generate(300, 1).unwrap(), m.generate(300, 2).unwrap());
        assert!(NoiseModel::Arma11 { phi: 1.0, theta: 0.0, sigma: 1.0 }.generate(10, 0).is_err());
        assert!(NoiseModel::Arma11 { phi: -1.2, theta: 0.0, sigma: 1.0 }.generate(10, 0).is_err());
        assert!(NoiseModel::Iid { sigma: 0.0 }.generate(10, 0).is_err());
        assert!(NoiseModel::Linear { coefficients: vec![], first_lag: 0, sigma: 1.0 }
            .generate(10, 0)
            .is_err());
        assert!(NoiseModel::Iid { sigma: 1.0 }.generate(0, 0).is_err());
    }

    #[test]
    fn json_form() {
        let m: NoiseModel = serde_json::from_str(r#"{"kind":"arma11","sigma":2.0}"#).unwrap();
        assert_eq!(m, NoiseModel::e2(2.0));
        let m: NoiseModel =
            serde_json::from_str(r#"{"kind":"linear","coefficients":[0.0],"sigma":1.0}"#).unwrap();
        assert_eq!(m.generate(4, 3).unwrap(), vec![0.0; 4]);
        let m: NoiseModel = serde_json::from_str(r#"{"kind":"iid","sigma":0.5}"#).unwrap();
        assert_eq!(m.sigma(), 0.5);
    }

    proptest::proptest! {
        #[test]
        fn long_run_constant_is_non_negative(coefs in proptest::collection::vec(-5.0f64..5.0, 1..8)) {
            let m = NoiseModel::Linear { coefficients: coefs, first_lag: 0, sigma: 1.0 };
            proptest::prop_assert!(m.long_run_constant() >= 0.0);
        }
    }
}
