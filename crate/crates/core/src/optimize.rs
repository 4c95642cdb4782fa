//! Nelder–Mead direct search and exhaustive grid search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const REFLECTION: f64 = 1.0;
const EXPANSION: f64 = 2.0;
const CONTRACTION: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Points per dimension used by [`initializer`] unless overridden.
pub const DEFAULT_GRID_POINTS: usize = 21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Simplex diameter (max-norm distance of any vertex from the best) below
    /// which the search may stop.
    pub x_tolerance: f64,
    /// Relative spread `(f_max - f_min) / (1 + |f_min|)` below which the
    /// search may stop.
    pub f_tolerance: f64,
    /// Offset of the initial vertices along each axis. A single entry applies
    /// to every coordinate.
    pub initial_simplex_scale: Vec<f64>,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            x_tolerance: 1e-8,
            f_tolerance: 1e-12,
            initial_simplex_scale: vec![0.5],
        }
    }
}

impl NelderMeadOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.x_tolerance > 0.0) || !(self.f_tolerance > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.initial_simplex_scale.is_empty()
            || self.initial_simplex_scale.iter().any(|s| !(s.is_finite() && *s != 0.0))
        {
            return Err(Error::Config("initial_simplex_scale entries must be finite and non-zero".into()));
        }
        Ok(())
    }

    fn scale(&self, i: usize, dim: usize) -> Result<f64> {
        match self.initial_simplex_scale.len() {
            1 => Ok(self.initial_simplex_scale[0]),
            len if len == dim => Ok(self.initial_simplex_scale[i]),
            len => Err(Error::Config(format!(
                "initial_simplex_scale has {len} entries for a {dim}-dimensional search"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with coefficients (reflection 1, expansion 2,
/// contraction 0.5, shrink 0.5). Non-finite values are treated as `+inf`,
/// so a barrier objective keeps the search inside its domain.
///
/// The search is converged when the simplex diameter is below `x_tolerance`
/// and the relative value spread is below `f_tolerance`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> f64,
{
    opts.validate()?;
    let dim = x0.len();
    if dim == 0 {
        return Err(Error::Domain("nelder_mead needs at least one coordinate".into()));
    }
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let f0 = eval(x0);
    if !f0.is_finite() || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::BadStart);
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += opts.scale(i, dim)?;
        let v = eval(&x);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if is_converged(&simplex, opts) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let worst = simplex[dim].1;
        let second_worst = simplex[dim - 1].1;
        let best = simplex[0].1;
        let centroid = centroid(&simplex[..dim]);
        let toward = |t: f64, from: &[f64]| -> Vec<f64> {
            centroid.iter().zip(from).map(|(c, x)| c + t * (x - c)).collect()
        };

        let xr = toward(-REFLECTION, &simplex[dim].0);
        let fr = eval(&xr);
        if fr < best {
            let xe = toward(EXPANSION, &xr);
            let fe = eval(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < second_worst {
            simplex[dim] = (xr, fr);
            continue;
        }
        let outside = fr < worst;
        let xc = toward(CONTRACTION, if outside { &xr } else { &simplex[dim].0 });
        let fc = eval(&xc);
        if (outside && fc <= fr) || fc < worst.min(fr) {
            simplex[dim] = (xc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = anchor
                .iter()
                .zip(&vertex.0)
                .map(|(a, v)| a + SHRINK * (v - a))
                .collect();
            let v = eval(&x);
            *vertex = (x, v);
        }
    }

    let (x, fbest) = simplex.swap_remove(0);
    Ok(NelderMeadResult { x, f: fbest, iterations, evaluations, converged })
}

fn centroid(vertices: &[(Vec<f64>, f64)]) -> Vec<f64> {
    let mut c = vec![0.0; vertices[0].0.len()];
    for (x, _) in vertices {
        c.iter_mut().zip(x).for_each(|(ci, xi)| *ci += xi);
    }
    let k = vertices.len() as f64;
    c.iter_mut().for_each(|ci| *ci /= k);
    c
}

fn is_converged(sorted: &[(Vec<f64>, f64)], opts: &NelderMeadOptions) -> bool {
    let (best, f_best) = (&sorted[0].0, sorted[0].1);
    let f_worst = sorted[sorted.len() - 1].1;
    if !f_worst.is_finite() {
        return false;
    }
    let diameter = sorted[1..]
        .iter()
        .flat_map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    diameter < opts.x_tolerance && f_worst - f_best <= opts.f_tolerance * (1.0 + f_best.abs())
}

/// Evenly spaced closed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn new(lower: f64, upper: f64, points: usize) -> Result<Self> {
        let axis = Self { lower, upper, points };
        axis.validate()?;
        Ok(axis)
    }

    pub fn centered(center: f64, half_width: f64, points: usize) -> Result<Self> {
        Self::new(center - half_width, center + half_width, points)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::Config(format!("grid axis needs at least 2 points, got {}", self.points)));
        }
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::Config(format!(
                "grid interval [{}, {}] must be finite and non-empty",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.upper
        } else {
            self.lower + (self.upper - self.lower) * i as f64 / (self.points - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self> {
        let spec = Self { axes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::Config("grid needs at least one axis".into()));
        }
        self.axes.iter().try_for_each(GridAxis::validate)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: Vec<usize>,
    pub x: Vec<f64>,
    pub value: f64,
}

/// Exhaustive search in row-major index order. The first strict minimum
/// wins, so ties go to the lexicographically smallest index; NaN ranks last.
pub fn grid_search<F>(mut f: F, grid: &GridSpec) -> GridPoint
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = grid.dim();
    let mut index = vec![0usize; dim];
    let mut x: Vec<f64> = grid.axes.iter().map(|a| a.value(0)).collect();
    let mut best = GridPoint { index: index.clone(), x: x.clone(), value: f64::NAN };
    loop {
        let v = f(&x);
        if best.value.is_nan() && !v.is_nan() || v < best.value {
            best = GridPoint { index: index.clone(), x: x.clone(), value: v };
        }
        // Odometer increment, last axis fastest.
        let mut d = dim;
        loop {
            if d == 0 {
                return best;
            }
            d -= 1;
            index[d] += 1;
            if index[d] < grid.axes[d].points {
                x[d] = grid.axes[d].value(index[d]);
                break;
            }
            index[d] = 0;
            x[d] = grid.axes[d].value(0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// `[alpha +- 1/N] x [beta +- 1/N^2]` around a hint (the truth in simulations).
    #[default]
    OracleNeighborhood,
    /// `[alpha +- 1/sqrt(N)] x [beta +- 1/sqrt(N)]` around a rough hint.
    CoarseSqrtN,
}

impl InitStrategy {
    pub fn half_widths(&self, n_samples: usize) -> (f64, f64) {
        let n = n_samples as f64;
        match self {
            InitStrategy::OracleNeighborhood => (1.0 / n, 1.0 / (n * n)),
            InitStrategy::CoarseSqrtN => (1.0 / n.sqrt(), 1.0 / n.sqrt()),
        }
    }
}

/// 2-D `(alpha, beta)` grid around `hint` for a series of `n_samples` points.
pub fn initializer(
    strategy: InitStrategy,
    hint: (f64, f64),
    n_samples: usize,
    points: usize,
) -> Result<GridSpec> {
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be at least 1".into()));
    }
    let (ha, hb) = strategy.half_widths(n_samples);
    GridSpec::new(vec![
        GridAxis::centered(hint.0, ha, points)?,
        GridAxis::centered(hint.1, hb, points)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let r = nelder_mead(
            |x| (x[0] - 2.0).powi(2) + (x[1] - 3.0).powi(2),
            &[0.0, 0.0],
            &NelderMeadOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 2.0).abs() < 1e-6 && (r.x[1] - 3.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn one_dimensional_parabola() {
        let r = nelder_mead(|x| x[0] * x[0], &[5.0], &NelderMeadOptions::default()).unwrap();
        assert!(r.x[0].abs() < 1e-8, "{:?}", r.x);
    }

    #[test]
    fn bad_start() {
        let err = nelder_mead(|_| f64::INFINITY, &[1.0], &NelderMeadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::BadStart));
        let err = nelder_mead(|x| x[0], &[f64::NAN], &NelderMeadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::BadStart));
    }

    #[test]
    fn barrier_keeps_search_in_domain() {
        let f = |x: &[f64]| if x[0] <= 0.0 { f64::INFINITY } else { x[0] - x[0].ln() };
        let r = nelder_mead(f, &[0.2], &NelderMeadOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let opts = NelderMeadOptions { max_iterations: 3, ..Default::default() };
        let r = nelder_mead(|x| (x[0] - 10.0).powi(2), &[0.0], &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
        assert!(r.f <= 100.0);
    }

    #[test]
    fn option_errors() {
        let opts = NelderMeadOptions { initial_simplex_scale: vec![0.1, 0.2, 0.3], ..Default::default() };
        assert!(nelder_mead(|x| x[0] * x[0], &[0.0, 1.0], &opts).is_err());
        let opts = NelderMeadOptions { x_tolerance: 0.0, ..Default::default() };
        assert!(opts.validate().is_err());
    }

    #[test]
    fn grid_on_grid_minimum() {
        let g = GridSpec::new(vec![GridAxis::new(0.0, 1.0, 11).unwrap()]).unwrap();
        let best = grid_search(|x| (x[0] - 0.5).abs(), &g);
        assert_eq!(best.index, vec![5]);
        assert!((best.x[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn grid_tie_break_is_first_index() {
        let g = GridSpec::new(vec![
            GridAxis::new(-1.0, 1.0, 4).unwrap(),
            GridAxis::new(2.0, 3.0, 3).unwrap(),
        ])
        .unwrap();
        let best = grid_search(|_| 1.0, &g);
        assert_eq!(best.index, vec![0, 0]);
        assert_eq!(best.x, vec![-1.0, 2.0]);
        // Two tied minima: the one with smaller index wins.
        let best = grid_search(|x| if x[1] == 3.0 { 0.0 } else { 1.0 }, &g);
        assert_eq!(best.index, vec![0, 2]);
    }

    #[test]
    fn grid_visits_every_point_once() {
        let g = GridSpec::new(vec![
            GridAxis::new(0.0, 1.0, 3).unwrap(),
            GridAxis::new(0.0, 1.0, 5).unwrap(),
            GridAxis::new(0.0, 1.0, 2).unwrap(),
        ])
        .unwrap();
        let mut seen = Vec::new();
        grid_search(|x| {
            seen.push(x.to_vec());
            0.0
        }, &g);
        assert_eq!(seen.len(), 30);
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        seen.dedup();
        assert_eq!(seen.len(), 30);
    }

    #[test]
    fn grid_validation() {
        assert!(GridAxis::new(0.0, 1.0, 1).is_err());
        assert!(GridAxis::new(1.0, 0.0, 3).is_err());
        assert!(GridAxis::new(0.0, f64::INFINITY, 3).is_err());
        assert!(GridSpec::new(vec![]).is_err());
    }

    #[test]
    fn initializer_intervals() {
        let g = initializer(InitStrategy::OracleNeighborhood, (0.89, 0.87), 100, 21).unwrap();
        assert!((g.axes[0].lower - 0.88).abs() < 1e-12 && (g.axes[0].upper - 0.90).abs() < 1e-12);
        assert!((g.axes[1].lower - 0.8699).abs() < 1e-12 && (g.axes[1].upper - 0.8701).abs() < 1e-12);
        assert_eq!(g.axes[0].points, DEFAULT_GRID_POINTS);
        let g = initializer(InitStrategy::CoarseSqrtN, (0.89, 0.87), 100, 21).unwrap();
        assert!((g.axes[1].lower - 0.77).abs() < 1e-12 && (g.axes[1].upper - 0.97).abs() < 1e-12);
    }

    #[test]
    fn strategy_json_names() {
        let s: InitStrategy = serde_json::from_str("\"coarse_sqrt_n\"").unwrap();
        assert_eq!(s, InitStrategy::CoarseSqrtN);
        assert_eq!(serde_json::to_string(&InitStrategy::OracleNeighborhood).unwrap(), "\"oracle_neighborhood\"");
    }
}
