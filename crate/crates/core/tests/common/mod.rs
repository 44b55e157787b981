//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's numerics except to build inputs.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use transport_rc::calibration::{MainStudyData, ValidationStudyData};
use transport_rc::linalg::{Matrix, Vector};
use transport_rc::simulation::{generate_pair, MeLevel, ScenarioSpec, Transport, SMALL_ME_THRESHOLD};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * normal(rng))
}

/// `GGᵀ/k + floor·I`, comfortably positive definite.
pub fn random_spd(rng: &mut ChaCha8Rng, p: usize, floor: f64) -> Matrix {
    let g = random_matrix(rng, p, p + 2, 1.0);
    g.clone() * g.transpose() / (p + 2) as f64 + Matrix::identity(p, p) * floor
}

/// Solves `a x = b` (column by column) by Gaussian elimination with partial
/// pivoting.
pub fn gauss_solve(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(r, rb)| r.iter().chain(rb.iter()).copied().collect())
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, piv);
        let d = aug[col][col];
        assert!(d.abs() > 1e-300, "singular system");
        for i in 0..n {
            if i != col {
                let f = aug[i][col] / d;
                for k in col..n + m {
                    aug[i][k] -= f * aug[col][k];
                }
            }
        }
    }
    (0..n)
        .map(|i| (0..m).map(|k| aug[i][n + k] / aug[i][i]).collect())
        .collect()
}

/// Normal-equation OLS: returns `(coef (k × m), residual covariance (1/n))`.
pub fn ols_oracle(x: &Matrix, y: &Matrix) -> (Matrix, Matrix) {
    let (n, k) = x.shape();
    let m = y.ncols();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![vec![0.0; m]; k];
    for i in 0..n {
        for a in 0..k {
            for b in 0..k {
                xtx[a][b] += x[(i, a)] * x[(i, b)];
            }
            for c in 0..m {
                xty[a][c] += x[(i, a)] * y[(i, c)];
            }
        }
    }
    let sol = gauss_solve(&xtx, &xty);
    let coef = Matrix::from_fn(k, m, |a, c| sol[a][c]);
    let mut cov = Matrix::zeros(m, m);
    for i in 0..n {
        let r: Vec<f64> = (0..m)
            .map(|c| y[(i, c)] - (0..k).map(|a| x[(i, a)] * coef[(a, c)]).sum::<f64>())
            .collect();
        for a in 0..m {
            for b in 0..m {
                cov[(a, b)] += r[a] * r[b] / n as f64;
            }
        }
    }
    (coef, cov)
}

/// Central-difference Jacobian in denominator layout: row `i` is `∂f/∂x_i`.
/// Step `max(1e-6, 1e-6·|x_i|)`.
pub fn fd_jacobian(f: impl Fn(&Vector) -> Vector, x: &Vector) -> Matrix {
    let m = f(x).len();
    let mut j = Matrix::zeros(x.len(), m);
    for i in 0..x.len() {
        let h = (1e-6 * x[i].abs()).max(1e-6);
        let mut up = x.clone();
        let mut dn = x.clone();
        up[i] += h;
        dn[i] -= h;
        let d = (f(&up) - f(&dn)) / (2.0 * h);
        j.row_mut(i).copy_from(&d.transpose());
    }
    j
}

/// Plain Nelder–Mead with standard coefficients.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..iters {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (simplex[n][k] - centroid[k])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let xc = if fr < vals[n] { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            if fc < vals[n].min(fr) {
                simplex[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k])).collect();
                    vals[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    (simplex[best].clone(), vals[best])
}

/// `max|a − b| / max|b|` (absolute when `b` vanishes).
pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let diff = (a - b).abs().max();
    let scale = b.abs().max();
    if scale > 1e-12 {
        diff / scale
    } else {
        diff
    }
}

/// A random but well-conditioned design with `p` exposures and `q`
/// confounders; the ME level is set to whatever the parameters imply.
pub fn random_scenario(rng: &mut ChaCha8Rng, p: usize, q: usize, n_main: usize, n_validation: usize) -> ScenarioSpec {
    let transport = Transport::ALL[rng.random_range(0..3)];
    let mut spec = ScenarioSpec::scalar(transport, MeLevel::Small);
    spec.n_main = n_main;
    spec.n_validation = n_validation;
    spec.beta0 = normal(rng);
    spec.beta1 = Vector::from_fn(p, |_, _| 0.5 + rng.random::<f64>());
    spec.beta2 = Vector::from_fn(q, |_, _| normal(rng));
    spec.a0 = Vector::from_fn(p, |_, _| normal(rng));
    spec.a2 = random_matrix(rng, q, p, 0.5);
    spec.sigma_x = random_spd(rng, p, 0.7);
    spec.c0 = Vector::from_fn(p, |_, _| 0.3 * normal(rng));
    spec.c1 = Matrix::identity(p, p) + random_matrix(rng, p, p, 0.15);
    spec.c2 = random_matrix(rng, q, p, 0.3);
    spec.sigma_e = random_spd(rng, p, 0.2) * 0.5;
    let cv = spec.conditional_exposure_variance().expect("valid scenario");
    let worst = (0..p).map(|j| spec.beta1[j].powi(2) * cv[j]).fold(0.0, f64::max);
    spec.me_level = if worst < SMALL_ME_THRESHOLD { MeLevel::Small } else { MeLevel::Large };
    spec.validate().expect("random scenario validates");
    spec
}

pub fn random_pair(
    rng: &mut ChaCha8Rng,
    p: usize,
    q: usize,
    n_main: usize,
    n_validation: usize,
) -> (MainStudyData, ValidationStudyData) {
    let spec = random_scenario(rng, p, q, n_main, n_validation);
    generate_pair(&spec, rng.random()).expect("generation succeeds")
}
