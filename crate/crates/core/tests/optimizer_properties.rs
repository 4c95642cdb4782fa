use eqchirp::optimize::{grid_search, nelder_mead, GridAxis, GridSpec, NelderMeadOptions};
use proptest::prelude::*;

fn quadratic(center: &[f64], weights: &[f64]) -> impl Fn(&[f64]) -> f64 {
    let (c, w) = (center.to_vec(), weights.to_vec());
    move |x: &[f64]| x.iter().zip(&c).zip(&w).map(|((x, c), w)| w * (x - c).powi(2)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn converges_on_convex_quadratics(
        center in proptest::collection::vec(-3.0f64..3.0, 1..=4),
        seed in proptest::collection::vec(0.5f64..4.0, 4),
    ) {
        let weights = &seed[..center.len()];
        let f = quadratic(&center, weights);
        let res = nelder_mead(&f, &vec![0.0; center.len()], &NelderMeadOptions::default()).unwrap();
        prop_assert!(res.converged);
        for (x, c) in res.x.iter().zip(&center) {
            prop_assert!((x - c).abs() < 1e-6, "{:?} vs {:?}", res.x, center);
        }
    }

    #[test]
    fn never_worse_than_the_start(
        x0 in proptest::collection::vec(-2.0f64..2.0, 1..=3),
        a in 0.1f64..3.0,
    ) {
        let f = |x: &[f64]| x.iter().map(|v| (a * v).sin() + 0.1 * v * v).sum::<f64>();
        let opts = NelderMeadOptions { max_iterations: 50, ..NelderMeadOptions::default() };
        let res = nelder_mead(f, &x0, &opts).unwrap();
        prop_assert!(res.f <= f(&x0));
        prop_assert_eq!(res.f, f(&res.x));
    }

    #[test]
    fn grid_minimum_is_the_brute_force_minimum(
        c0 in -1.0f64..1.0,
        c1 in -1.0f64..1.0,
        points in 2usize..9,
    ) {
        let grid = GridSpec::new(vec![GridAxis::new(-1.0, 1.0, points).unwrap(), GridAxis::new(-1.0, 1.0, points + 1).unwrap()]).unwrap();
        let f = |x: &[f64]| (x[0] - c0).powi(2) + 2.0 * (x[1] - c1).powi(2);
        let best = grid_search(f, &grid);
        let mut brute = f64::INFINITY;
        for i in 0..points {
            for j in 0..=points {
                brute = brute.min(f(&[grid.axes[0].value(i), grid.axes[1].value(j)]));
            }
        }
        prop_assert_eq!(best.value, brute);
    }
}
