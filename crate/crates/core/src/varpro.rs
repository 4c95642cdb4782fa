//! Separable least squares: for fixed nonlinear parameters the amplitudes
//! enter linearly, so they are eliminated in closed form and only the
//! reduced residual sum of squares is left for the nonlinear search.

use crate::error::{Error, Result};
use crate::model::{design_matrix, DesignMatrix, NonlinearParams, ParameterBounds, Signal};

/// Pivots below this fraction of the leading pivot mark a rank-deficient design.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Amplitudes, fitted values and residual sum of squares at one `xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableFit {
    pub amplitudes: Vec<f64>,
    pub fitted: Vec<f64>,
    pub rss: f64,
}

/// Least-squares solve of `W x ~ y` by Householder QR with column-norm
/// pivoting. Consumes the column-major copy of `W`.
fn pivoted_qr_solve(w: &DesignMatrix, y: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = (w.rows(), w.cols());
    if m < n {
        return Err(Error::Domain(format!(
            "{m} samples cannot determine {n} amplitudes"
        )));
    }
    let mut a = w.clone().into_data();
    let mut qty = y.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut diag = vec![0.0f64; n];

    for k in 0..n {
        // Pivot on the largest remaining column norm.
        let (mut best, mut best_norm) = (k, -1.0);
        for j in k..n {
            let norm: f64 = a[j * m + k..(j + 1) * m].iter().map(|v| v * v).sum();
            if norm > best_norm {
                best = j;
                best_norm = norm;
            }
        }
        if best != k {
            for i in 0..m {
                a.swap(k * m + i, best * m + i);
            }
            perm.swap(k, best);
        }

        let norm = best_norm.sqrt();
        if norm == 0.0 || k > 0 && norm <= RANK_TOLERANCE * diag[0].abs() {
            return Err(Error::DegenerateDesign { columns: collinear_pair(w, &perm, k) });
        }

        let (head, tail) = a.split_at_mut((k + 1) * m);
        let v = &mut head[k * m + k..(k + 1) * m];
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let v_norm2: f64 = v.iter().map(|x| x * x).sum();
        for j in 0..(n - k - 1) {
            let col = &mut tail[j * m + k..(j + 1) * m];
            let t = 2.0 * dot(v, col) / v_norm2;
            col.iter_mut().zip(v.iter()).for_each(|(c, vi)| *c -= t * vi);
        }
        let t = 2.0 * dot(v, &qty[k..]) / v_norm2;
        qty[k..].iter_mut().zip(v.iter()).for_each(|(c, vi)| *c -= t * vi);
        diag[k] = alpha;
    }

    // Back-substitution on R (diagonal in `diag`, strict upper part in `a`).
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = qty[i];
        for j in i + 1..n {
            s -= a[j * m + i] * x[j];
        }
        x[i] = s / diag[i];
    }
    let mut out = vec![0.0; n];
    for (i, &col) in perm.iter().enumerate() {
        out[col] = x[i];
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The column that failed the pivot test at step `k`, paired with the
/// already-accepted column it is most nearly parallel to.
fn collinear_pair(w: &DesignMatrix, perm: &[usize], k: usize) -> (usize, usize) {
    let bad = perm[k];
    let partner = perm[..k]
        .iter()
        .copied()
        .max_by(|&i, &j| cosine(w, i, bad).total_cmp(&cosine(w, j, bad)))
        .unwrap_or(bad);
    (partner.min(bad), partner.max(bad))
}

fn cosine(w: &DesignMatrix, i: usize, j: usize) -> f64 {
    let (ci, cj) = (w.column(i), w.column(j));
    let denom = (dot(ci, ci) * dot(cj, cj)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (dot(ci, cj) / denom).abs()
    }
}

/// Separable fit of `samples` at nonlinear parameters `xi`.
pub fn fit(xi: &NonlinearParams, samples: &[f64]) -> Result<SeparableFit> {
    let w = design_matrix(xi, samples.len());
    let amplitudes = pivoted_qr_solve(&w, samples)?;
    let fitted = w.mul_vec(&amplitudes);
    let rss = samples.iter().zip(&fitted).map(|(y, f)| (y - f) * (y - f)).sum();
    Ok(SeparableFit { amplitudes, fitted, rss })
}

/// Least-squares amplitudes `(A_1, B_1, ..., A_p, B_p)` at `xi`.
pub fn solve_amplitudes(xi: &NonlinearParams, signal: &Signal) -> Result<Vec<f64>> {
    let w = design_matrix(xi, signal.n_samples());
    pivoted_qr_solve(&w, signal.samples())
}

/// Residual sum of squares after the amplitudes are concentrated out.
pub fn reduced_rss(xi: &NonlinearParams, signal: &Signal) -> Result<f64> {
    fit(xi, signal.samples()).map(|f| f.rss)
}

/// Reduced objective over the nonlinear parameters of a `p`-component fit
/// to a fixed data series.
#[derive(Debug, Clone, Copy)]
pub struct ReducedObjective<'a> {
    samples: &'a [f64],
    p: usize,
    bounds: ParameterBounds,
}

impl<'a> ReducedObjective<'a> {
    pub fn new(samples: &'a [f64], p: usize, bounds: ParameterBounds) -> Result<Self> {
        if p == 0 {
            return Err(Error::Domain("at least one component is required".into()));
        }
        if samples.len() < 2 * p + 2 {
            return Err(Error::Domain(format!(
                "{} samples are too few for {p} components (need at least {})",
                samples.len(),
                2 * p + 2
            )));
        }
        Ok(Self { samples, p, bounds })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn samples(&self) -> &'a [f64] {
        self.samples
    }

    pub fn bounds(&self) -> &ParameterBounds {
        &self.bounds
    }

    pub fn fit(&self, xi: &NonlinearParams) -> Result<SeparableFit> {
        if xi.len() != self.p {
            return Err(Error::Domain(format!(
                "expected {} frequencies, got {}",
                self.p,
                xi.len()
            )));
        }
        fit(xi, self.samples)
    }

    /// Reduced RSS, or `+inf` outside the bounds or at a degenerate design
    /// so that a direct search steps away from such points.
    pub fn value(&self, xi: &NonlinearParams) -> f64 {
        if !self.bounds.contains(xi) {
            return f64::INFINITY;
        }
        self.fit(xi).map_or(f64::INFINITY, |f| f.rss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synthesize, ChirpParams, Component};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params2() -> ChirpParams {
        ChirpParams::new(
            vec![Component::new(1.5, -0.5, 0.7), Component::new(0.6, 0.8, 1.9)],
            0.31,
        )
        .unwrap()
    }

    #[test]
    fn exact_interpolation() {
        let p = params2();
        let y = synthesize(&p, 80, None).unwrap();
        let a = solve_amplitudes(&p.nonlinear(), &y).unwrap();
        for (x, t) in a.iter().zip(p.amplitudes()) {
            assert!((x - t).abs() < 1e-8);
        }
        let rss = reduced_rss(&p.nonlinear(), &y).unwrap();
        let yty: f64 = y.samples().iter().map(|v| v * v).sum();
        assert!(rss <= 1e-12 * yty);
    }

    #[test]
    fn null_data_gives_zero_amplitudes() {
        let y = Signal::new(vec![0.0; 30]).unwrap();
        let a = solve_amplitudes(&NonlinearParams::new(vec![0.4, 1.1], 0.2), &y).unwrap();
        assert!(a.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn far_frequency_is_nearly_orthogonal() {
        let truth = ChirpParams::new(vec![Component::new(1.0, 0.3, 2.5)], 0.4).unwrap();
        let y = synthesize(&truth, 400, None).unwrap();
        let yty: f64 = y.samples().iter().map(|v| v * v).sum();
        let rss = reduced_rss(&NonlinearParams::single(0.6, 0.05), &y).unwrap();
        // Projection norm oracle: ||P y||^2 computed from the 2x2 normal equations.
        let w = design_matrix(&NonlinearParams::single(0.6, 0.05), 400);
        let b = w.tr_mul_vec(y.samples());
        let (g00, g01, g11) = (
            dot(w.column(0), w.column(0)),
            dot(w.column(0), w.column(1)),
            dot(w.column(1), w.column(1)),
        );
        let det = g00 * g11 - g01 * g01;
        let proj = (g11 * b[0] * b[0] - 2.0 * g01 * b[0] * b[1] + g00 * b[1] * b[1]) / det;
        assert!(((yty - rss) - proj).abs() < 1e-8 * yty);
        assert!(rss > 0.95 * yty, "{rss} vs {yty}");
    }

    #[test]
    fn pythagoras_and_orthogonal_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let xi = NonlinearParams::new(
                vec![rng.random_range(0.1..3.0), rng.random_range(3.2..6.0)],
                rng.random_range(0.01..1.5),
            );
            let y: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();
            let f = fit(&xi, &y).unwrap();
            let yty = dot(&y, &y);
            let fty = dot(&f.fitted, &f.fitted);
            assert!(((yty - fty) - f.rss).abs() <= 1e-8 * yty);
            assert!(f.rss >= 0.0 && f.rss <= yty);
            let r: Vec<f64> = y.iter().zip(&f.fitted).map(|(a, b)| a - b).collect();
            let wtr = design_matrix(&xi, 50).tr_mul_vec(&r);
            let ynorm = yty.sqrt();
            assert!(wtr.iter().all(|v| v.abs() < 1e-8 * ynorm), "{wtr:?}");
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let xi = NonlinearParams::new(vec![0.3, 2.2], 0.7);
        let y: Vec<f64> = (1..=60).map(|n| ((n * n) as f64 * 0.37).sin()).collect();
        let first = fit(&xi, &y).unwrap();
        let again = fit(&xi, &first.fitted).unwrap();
        for (a, b) in first.amplitudes.iter().zip(&again.amplitudes) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn adding_a_component_never_increases_rss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y: Vec<f64> = (0..70).map(|_| rng.random_range(-1.0..1.0)).collect();
        let one = fit(&NonlinearParams::single(1.0, 0.2), &y).unwrap();
        let two = fit(&NonlinearParams::new(vec![1.0, 2.7], 0.2), &y).unwrap();
        assert!(two.rss <= one.rss * (1.0 + 1e-12));
    }

    #[test]
    fn duplicated_frequency_is_degenerate() {
        let y = Signal::new((0..40).map(|n| (n as f64).cos()).collect()).unwrap();
        let err = solve_amplitudes(&NonlinearParams::new(vec![0.8, 1.7, 0.8], 0.1), &y).unwrap_err();
        match err {
            Error::DegenerateDesign { columns } => {
                // cos columns 0 and 4, or sin columns 1 and 5.
                assert!(columns == (0, 4) || columns == (1, 5), "{columns:?}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn objective_guards() {
        let y = vec![0.0; 5];
        assert!(ReducedObjective::new(&y, 2, ParameterBounds::default()).is_err());
        let y = vec![1.0; 10];
        let obj = ReducedObjective::new(&y, 1, ParameterBounds::default()).unwrap();
        assert_eq!(obj.value(&NonlinearParams::single(-0.1, 0.2)), f64::INFINITY);
        assert_eq!(obj.value(&NonlinearParams::single(0.5, 2.0)), f64::INFINITY);
        assert!(obj.value(&NonlinearParams::single(0.5, 0.2)).is_finite());
    }
}
