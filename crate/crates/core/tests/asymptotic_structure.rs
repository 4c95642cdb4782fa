use eqchirp::asymptotics::{
    combined_avar, lse_avar, min_eigenvalue, plugin_avar, sigma1_inverse, AsymptoticReport, CrossTermConvention,
};
use eqchirp::model::{ChirpParams, Component};
use eqchirp::Method;
use nalgebra::DMatrix;

fn three_components() -> ChirpParams {
    ChirpParams::new(
        vec![Component::new(2.0, 1.5, 0.8), Component::new(-1.2, 1.4, 1.6), Component::new(0.9, 0.2, 2.4)],
        0.4,
    )
    .unwrap()
}

fn to_dmatrix(m: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(m.len(), m.len(), |i, j| m[i][j])
}

#[test]
fn lse_covariance_inverts_the_hessian_limit() {
    let params = three_components();
    let k2 = 2.0;
    let lse = lse_avar(&params, 1.0, 1.0).unwrap();
    let product = to_dmatrix(&sigma1_inverse(&params)) * to_dmatrix(&lse.covariance) / k2;
    let identity = DMatrix::<f64>::identity(product.nrows(), product.ncols());
    assert!((product - identity).amax() < 1e-9);
}

#[test]
fn covariances_are_symmetric_positive_definite() {
    let params = three_components();
    let lse = lse_avar(&params, 1.3, 0.7).unwrap();
    let combined = combined_avar(&params, 1.3, 0.7).unwrap();
    for m in [&lse.covariance, &combined.covariance] {
        let d = to_dmatrix(m);
        assert!((d.clone() - d.transpose()).amax() == 0.0);
        assert!(min_eigenvalue(m) > 0.0);
    }
    let plugin = plugin_avar(&params, 1.3, 0.7, CrossTermConvention::Verbatim).unwrap();
    let d = to_dmatrix(&plugin.covariance);
    assert!((d.clone() - d.transpose()).amax() == 0.0);
    for block in &plugin.sandwich {
        let m: Vec<Vec<f64>> = block.iter().map(|r| r.to_vec()).collect();
        assert!(min_eigenvalue(&m) > 0.0);
    }
}

#[test]
fn lse_is_at_least_as_efficient_as_the_sequential_procedures() {
    let params = three_components();
    let lse = lse_avar(&params, 1.0, 1.0).unwrap();
    let combined = combined_avar(&params, 1.0, 1.0).unwrap();
    let plugin = plugin_avar(&params, 1.0, 1.0, CrossTermConvention::Verbatim).unwrap();
    assert!((lse.beta - combined.beta).abs() <= 1e-12 * lse.beta);
    assert!(lse.beta < plugin.beta);
    for k in 0..3 {
        assert!(lse.alpha[k] <= combined.alpha[k]);
        assert!(lse.alpha[k] <= plugin.alpha[k]);
    }
    // The first plugin component is the first combined component.
    assert_eq!(plugin.alpha[0], combined.alpha[0]);
}

#[test]
fn cross_term_convention_only_touches_later_pairs() {
    let params = three_components();
    let v = plugin_avar(&params, 1.0, 1.0, CrossTermConvention::Verbatim).unwrap();
    let d = plugin_avar(&params, 1.0, 1.0, CrossTermConvention::DividedByLeadingPower).unwrap();
    let t = params.components()[0].power();
    let (k, j) = (4, 7);
    for r in 0..3 {
        for s in 0..3 {
            assert!((v.covariance[k + r][j + s] / t - d.covariance[k + r][j + s]).abs() < 1e-12);
        }
    }
    for i in 0..7 {
        assert_eq!(v.covariance[i][..7], d.covariance[i][..7]);
    }
}

#[test]
fn single_unit_component_report() {
    let params = ChirpParams::new(vec![Component::new(1.0, 0.0, 1.0)], 0.5).unwrap();
    let report = AsymptoticReport::new(&params, 1.0, 1.0, Some(100), CrossTermConvention::Verbatim).unwrap();
    // 360 / S + 24 / S for the frequency, 384 / S for the combined one.
    assert!((report.get(Method::Lse, "beta").unwrap() - 360.0).abs() < 1e-9);
    assert!((report.get(Method::Lse, "alpha1").unwrap() - 384.0).abs() < 1e-9);
    assert!((report.get(Method::Combined, "alpha1").unwrap() - 384.0).abs() < 1e-9);
    let mut out = Vec::new();
    report.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next(), Some("method,parameter,scaled_variance,unscaled_variance_at_N"));
    let row = text.lines().find(|l| l.starts_with("lse,beta,")).unwrap();
    let unscaled: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!((unscaled - 360.0 / 1e10).abs() < 1e-20);
}
