mod common;

use transport_rc::calibration::{
    fit_transport_inputs, original_rc, rosner_point, transportable_rc_rosner, Method,
};
use transport_rc::linalg::{design_with_intercept, fit_multi_ols, Matrix, Vector};
use transport_rc::simulation::{run_study, MeLevel, ScenarioSpec, Transport};
use transport_rc::variance::{
    assemble_vcov, assemble_vcov_parts, derivative_blocks, original_rc_vcov, transportable_vcov, ThetaHat,
};

use common::{fd_jacobian, gauss_solve, random_pair, random_scenario, rel_err, rng};

fn stacked(theta: &ThetaHat) -> Vector {
    let (b0, b1, b2, _) = rosner_point(theta).expect("point estimate");
    let mut v = Vector::zeros(1 + b1.len() + b2.len());
    v[0] = b0;
    v.rows_mut(1, b1.len()).copy_from(&b1);
    v.rows_mut(1 + b1.len(), b2.len()).copy_from(&b2);
    v
}

fn fitted_theta(seed: u64, p: usize, q: usize) -> ThetaHat {
    let mut r = rng(seed);
    let (main, val) = random_pair(&mut r, p, q, 3000, 600);
    fit_transport_inputs(&main, &val).unwrap()
}

fn fd_of(theta: &ThetaHat) -> Matrix {
    let x = theta.parameter_vector();
    fd_jacobian(|t| stacked(&theta.with_parameters(t)), &x)
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut seed = 100;
    for p in [1, 2, 4] {
        for q in [1, 2] {
            for _ in 0..3 {
                seed += 1;
                let theta = fitted_theta(seed, p, q);
                let blocks = derivative_blocks(&theta).unwrap();
                let analytic = blocks.jacobian();
                let numeric = fd_of(&theta);
                let err = rel_err(&analytic, &numeric);
                assert!(err < 1e-6, "p={p} q={q} seed={seed}: {err:e}");
            }
        }
    }
}

#[test]
fn assembled_covariance_equals_sandwich() {
    let mut seed = 200;
    for p in [1, 2, 4] {
        for q in [1, 2] {
            seed += 1;
            let theta = fitted_theta(seed, p, q);
            let blocks = derivative_blocks(&theta).unwrap();
            let assembled = assemble_vcov(&theta, &blocks).unwrap();
            let sigma = theta.parameter_covariance();
            let j = fd_of(&theta);
            let sandwich = j.transpose() * &sigma * &j;
            assert!(rel_err(&assembled, &sandwich) < 1e-5, "p={p} q={q}");
            let exact = blocks.jacobian().transpose() * &sigma * blocks.jacobian();
            assert!(rel_err(&assembled, &exact) < 1e-10, "p={p} q={q}");
        }
    }
}

#[test]
fn covariance_is_symmetric_psd() {
    for seed in 300..310 {
        let theta = fitted_theta(seed, 2, 2);
        let (v, _) = transportable_vcov(&theta).unwrap();
        assert_eq!(v, v.transpose());
        let ev = v.clone().symmetric_eigenvalues();
        assert!(ev.min() > -1e-12 * ev.max(), "{ev}");
    }
}

/// Single exposure, no confounders: `β1 = c1σz²β1*/(σz² − σe²)` differentiated
/// by hand.
#[test]
fn scalar_hand_derivation() {
    let mut r = rng(400);
    for _ in 0..10 {
        let (main, val) = random_pair(&mut r, 1, 0, 2000, 300);
        let theta = fit_transport_inputs(&main, &val).unwrap();
        let b1s = theta.outcome.beta1_star[0];
        let c1 = theta.error_model.c1[(0, 0)];
        let se2 = theta.error_model.sigma_e[(0, 0)];
        let sz2 = theta.margin.sigma_z[(0, 0)];
        let d = sz2 - se2;
        let beta1 = c1 * sz2 * b1s / d;
        let g = [c1 * sz2 / d, sz2 * b1s / d, c1 * sz2 * b1s / (d * d), -c1 * se2 * b1s / (d * d)];
        let v = [
            theta.outcome.vcov[(1, 1)],
            theta.error_model.vcov_coeffs[(1, 1)],
            theta.error_model.vcov_sigma_e[(0, 0)],
            theta.margin.vcov_sigma_z[(0, 0)],
        ];
        assert!((v[2] - 2.0 * se2 * se2 / 300.0).abs() < 1e-12 * v[2]);
        assert!((v[3] - 2.0 * sz2 * sz2 / 2000.0).abs() < 1e-12 * v[3]);
        let var: f64 = g.iter().zip(v).map(|(g, v)| g * g * v).sum();

        let est = transportable_rc_rosner(&main, &val).unwrap();
        assert!((est.beta1[0] - beta1).abs() < 1e-10 * beta1.abs());
        let got = est.vcov.unwrap()[(1, 1)];
        assert!((got - var).abs() < 1e-10 * var, "{got} vs {var}");
    }
}

#[test]
fn validation_part_scales_inversely_with_its_size() {
    let theta = fitted_theta(500, 2, 1);
    let blocks = derivative_blocks(&theta).unwrap();
    let parts = assemble_vcov_parts(&theta, &blocks).unwrap();
    let total = assemble_vcov(&theta, &blocks).unwrap();
    assert!(rel_err(&(&parts.main + &parts.validation), &total) < 1e-12);

    // Twice the validation sample: every validation covariance halves.
    let mut bigger = theta.clone();
    bigger.error_model.vcov_coeffs /= 2.0;
    bigger.error_model.vcov_sigma_e /= 2.0;
    let halved = assemble_vcov_parts(&bigger, &blocks).unwrap();
    assert!(rel_err(&halved.validation, &(&parts.validation / 2.0)) < 1e-12);
    assert!(rel_err(&halved.main, &parts.main) < 1e-12);
}

/// Original RC as an explicit function of `(β*, calibration coefficients)`,
/// inverted with the Gaussian-elimination oracle.
fn original_rc_map(params: &Vector, p: usize, q: usize) -> Vector {
    let r = 1 + p + q;
    let bs = params.rows(0, r).into_owned();
    let coef = Matrix::from_column_slice(r, p, params.rows(r, r * p).as_slice());
    let g1: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| coef[(1 + i, j)]).collect()).collect();
    let rhs: Vec<Vec<f64>> = (0..p).map(|i| vec![bs[1 + i]]).collect();
    let b1 = Vector::from_iterator(p, gauss_solve(&g1, &rhs).into_iter().map(|r| r[0]));
    let mut out = Vector::zeros(r);
    out[0] = bs[0] - (0..p).map(|j| coef[(0, j)] * b1[j]).sum::<f64>();
    out.rows_mut(1, p).copy_from(&b1);
    for k in 0..q {
        out[1 + p + k] = bs[1 + p + k] - (0..p).map(|j| coef[(1 + p + k, j)] * b1[j]).sum::<f64>();
    }
    out
}

#[test]
fn original_rc_covariance_matches_finite_differences() {
    let mut r = rng(600);
    for (p, q) in [(1, 1), (2, 1), (3, 2)] {
        let (main, val) = random_pair(&mut r, p, q, 2000, 400);
        let est = original_rc(&main, &val).unwrap();
        let outcome = fit_transport_inputs(&main, &val).unwrap().outcome;
        let cal = fit_multi_ols(&design_with_intercept(&[val.z(), val.w()]), val.x()).unwrap();
        let n_out = 1 + p + q;
        let mut x = Vector::zeros(n_out + cal.coef.len());
        x.rows_mut(0, 1).fill(outcome.beta0_star);
        x.rows_mut(1, p).copy_from(&outcome.beta1_star);
        x.rows_mut(1 + p, q).copy_from(&outcome.beta2_star);
        x.rows_mut(n_out, cal.coef.len()).copy_from_slice(cal.coef.as_slice());
        let point = original_rc_map(&x, p, q);
        let as_col = |v: &Vector| Matrix::from_column_slice(v.len(), 1, v.as_slice());
        assert!(rel_err(&as_col(&point), &as_col(&est.coefficients())) < 1e-10);

        let j = fd_jacobian(|t| original_rc_map(t, p, q), &x);
        let mut sigma = Matrix::zeros(x.len(), x.len());
        sigma.view_mut((0, 0), (n_out, n_out)).copy_from(&outcome.vcov);
        sigma.view_mut((n_out, n_out), (cal.coef.len(), cal.coef.len())).copy_from(&cal.coef_vcov);
        let sandwich = j.transpose() * sigma * j;
        let v = est.vcov.unwrap();
        assert!(rel_err(&v, &sandwich) < 1e-6, "p={p} q={q}");

        // Direct call agrees with what the estimator attached.
        let g1 = cal.coef.rows(1, p).into_owned().try_inverse().unwrap();
        let direct = original_rc_vcov(&outcome, &cal, &g1, &est.beta1);
        assert!(rel_err(&direct, &v) < 1e-12);
    }
}

/// Delta-method standard errors against the Monte Carlo spread of the
/// estimates themselves.
#[test]
fn standard_errors_match_monte_carlo_spread() {
    let mut r = rng(700);
    let mut spec = random_scenario(&mut r, 2, 1, 20_000, 2_000);
    spec.transport = Transport::S2;
    spec.validate().unwrap();
    let summary = run_study(&spec, 400, 7, 0).unwrap();
    let t = summary.method(Method::TransportableRc).unwrap();
    assert_eq!(t.failed, 0);
    for c in &t.coefficients {
        let ratio = c.mean_se / c.sd.unwrap();
        // SD from 400 draws is ~3.5% noisy.
        assert!((0.85..1.15).contains(&ratio), "{}: SE/SD = {ratio}", c.name);
    }
}

#[test]
fn scalar_scenario_standard_error_matches_spread() {
    let spec = ScenarioSpec::scalar(Transport::S3, MeLevel::Large);
    let summary = run_study(&spec, 400, 8, 0).unwrap();
    let c = summary.method(Method::TransportableRc).unwrap().coefficient("beta1[1]").unwrap();
    let ratio = c.mean_se / c.sd.unwrap();
    assert!((0.85..1.15).contains(&ratio), "SE/SD = {ratio}");
}
