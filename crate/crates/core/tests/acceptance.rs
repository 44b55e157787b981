//! Acceptance criteria, one `PASS`/`FAIL` line each. Runs without the test
//! harness so the lines always reach stdout; exits non-zero on any failure.
//!
//! Seeds and tolerances are fixed here. Monte Carlo quantities carry their own
//! noise, so a criterion that sits close to its bound (AC1 coverage in the
//! large-error scenarios, ~93.2–93.4% against a 93.0% floor) can flip with the
//! seed; the seeds below were chosen once and never tuned per criterion.

mod common;

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use transport_rc::calibration::{
    derive_calibration, fit_transport_inputs, optimal_operator_gap, rosner_point, transportable_rc_carroll,
    transportable_rc_rosner, Method,
};
use transport_rc::cli::{cmd_simulate, SimulationConfig};
use transport_rc::linalg::{Matrix, Vector};
use transport_rc::simulation::{
    expected_attenuation, run_study, ErrorDistribution, MeLevel, ReplicationSummary, ScenarioSpec, Transport,
};
use transport_rc::variance::{assemble_vcov, derivative_blocks, ThetaHat};

use common::{fd_jacobian, nelder_mead, normal, random_matrix, random_pair, random_spd, rel_err, rng};

// AC1: scalar exposure, every transport scenario and ME level.
const AC1_REPS: usize = 10_000;
const AC1_SEED: u64 = 1;
const AC1_MAX_ABS_REL_BIAS_PCT: f64 = 1.0;
const AC1_CP: (f64, f64) = (93.0, 96.0);
const AC1_SE_SD_REL: f64 = 0.10;
const AC1_NAIVE_ABS: f64 = 0.02;
const AC1_ORC_S2_SMALL_BIAS_PCT: (f64, f64) = (6.0, 11.0);
const AC1_ORC_S2_SMALL_CP_MAX: f64 = 60.0;
// Bundled-config check run alongside AC1.
const CFG_SCENARIO1_CP: (f64, f64) = (94.0, 96.0);

// AC2: four exposures.
const AC2_REPS: usize = 2_000;
const AC2_SEED: u64 = 2;
const AC2_MAX_ABS_REL_BIAS_PCT: f64 = 1.5;
const AC2_CP: (f64, f64) = (93.0, 97.5);

// AC3: gamma exposure errors, scalar S2 small.
const AC3_REPS: usize = 5_000;
const AC3_SEED: u64 = 3;
const AC3_MAX_ABS_REL_BIAS_PCT: f64 = 1.0;
const AC3_CP: (f64, f64) = (93.0, 96.0);
const AC3_ORC_BIAS_PCT: (f64, f64) = (7.0, 12.0);

// AC4: the two forms of the transportable estimator.
const AC4_PAIRS: usize = 200;
const AC4_REL: f64 = 1e-8;
const AC4_SECONDS: f64 = 30.0;

// AC5: analytic derivatives and assembled covariance.
const AC5_POINTS: usize = 50;
const AC5_JACOBIAN_REL: f64 = 1e-4;
const AC5_SANDWICH_REL: f64 = 1e-3;
const AC5_SECONDS: f64 = 60.0;

// AC6: optimality of the combining operators.
const AC6_TRIALS: usize = 1_000;
const AC6_GAP_FLOOR: f64 = -1e-9;
const AC6_STARTS: usize = 20;
const AC6_MIN_GAP: f64 = 1e-6;

// AC7: consistency at large n.
const AC7_N: usize = 100_000;
const AC7_REPS: usize = 500;
const AC7_SEED: u64 = 4;
const AC7_MC_SE_BAND: f64 = 3.0;

// AC8: CLI determinism.
const AC8_SEED: &str = "8";
const AC8_REPS: &str = "200";

struct Outcome {
    pass: bool,
    detail: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { pass: true, detail: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.detail.push(format!("{} {line}", if ok { "ok  " } else { "MISS" }));
    }
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    lo <= x && x <= hi
}

fn beta1(summary: &ReplicationSummary, method: Method) -> &transport_rc::simulation::CoefficientSummary {
    summary.method(method).unwrap().coefficient("beta1[1]").unwrap()
}

fn ac1() -> Outcome {
    let mut out = Outcome::new();
    for me in [MeLevel::Small, MeLevel::Large] {
        for t in Transport::ALL {
            let spec = ScenarioSpec::scalar(t, me);
            let s = run_study(&spec, AC1_REPS, AC1_SEED, 0).unwrap();
            let tr = beta1(&s, Method::TransportableRc);
            let rb = tr.relative_bias_pct.unwrap();
            let sd = tr.sd.unwrap();
            let se_sd = (tr.mean_se - sd).abs() / sd;
            out.check(
                rb.abs() <= AC1_MAX_ABS_REL_BIAS_PCT && within(tr.coverage_pct, AC1_CP) && se_sd <= AC1_SE_SD_REL,
                format!(
                    "{} {}: transportable bias {rb:+.2}%, CP {:.2}%, SE {:.4} vs SD {sd:.4}",
                    t.label(),
                    me.label(),
                    tr.coverage_pct,
                    tr.mean_se
                ),
            );
            let naive = beta1(&s, Method::Naive);
            let expect = expected_attenuation(&spec).unwrap().naive_beta1[0];
            out.check(
                (naive.mean - expect).abs() <= AC1_NAIVE_ABS,
                format!("{} {}: naive mean {:.4} vs analytic {expect:.4}", t.label(), me.label(), naive.mean),
            );
            if t == Transport::S2 && me == MeLevel::Small {
                let orc = beta1(&s, Method::OriginalRc);
                let b = orc.relative_bias_pct.unwrap();
                out.check(
                    within(b, AC1_ORC_S2_SMALL_BIAS_PCT) && orc.coverage_pct < AC1_ORC_S2_SMALL_CP_MAX,
                    format!("S2 small: original RC bias {b:+.2}%, CP {:.2}%", orc.coverage_pct),
                );
            }
        }
    }

    // The bundled scenario file goes through the same code path as `trc simulate`.
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/scenario1_small.cfg");
    let mut cfg = SimulationConfig::load(&path).unwrap();
    cfg.replications = Some(AC1_REPS);
    cfg.threads = Some(0);
    let report = cmd_simulate(&cfg).unwrap();
    let tr = beta1(&report.summary, Method::TransportableRc);
    out.check(
        within(tr.coverage_pct, CFG_SCENARIO1_CP),
        format!("configs/scenario1_small.cfg: transportable CP {:.2}%", tr.coverage_pct),
    );
    out
}

fn ac2() -> Outcome {
    let mut out = Outcome::new();
    for me in [MeLevel::Small, MeLevel::Large] {
        for t in Transport::ALL {
            let spec = ScenarioSpec::four_exposure(t, me);
            let s = run_study(&spec, AC2_REPS, AC2_SEED, 0).unwrap();
            let tr = s.method(Method::TransportableRc).unwrap();
            let worst_bias = tr.exposures().map(|c| c.relative_bias_pct.unwrap().abs()).fold(0.0, f64::max);
            let cps: Vec<f64> = tr.exposures().map(|c| c.coverage_pct).collect();
            let cp_ok = cps.iter().all(|&c| within(c, AC2_CP));
            out.check(
                worst_bias <= AC2_MAX_ABS_REL_BIAS_PCT && cp_ok,
                format!(
                    "{} {}: transportable max |bias| {worst_bias:.2}%, CP {:.1?}",
                    t.label(),
                    me.label(),
                    cps
                ),
            );
            let orc: Vec<f64> = s
                .method(Method::OriginalRc)
                .unwrap()
                .exposures()
                .map(|c| c.relative_bias_pct.unwrap())
                .collect();
            let sign_ok = match t {
                Transport::S1 => true,
                Transport::S2 => orc.iter().all(|&b| b > 0.0),
                Transport::S3 => orc.iter().all(|&b| b < 0.0),
            };
            out.check(sign_ok, format!("{} {}: original RC bias {:+.2?}%", t.label(), me.label(), orc));
        }
    }
    out
}

fn ac3() -> Outcome {
    let mut out = Outcome::new();
    let spec = ScenarioSpec::scalar(Transport::S2, MeLevel::Small).with_error_distribution(ErrorDistribution::Gamma);
    let s = run_study(&spec, AC3_REPS, AC3_SEED, 0).unwrap();
    let tr = beta1(&s, Method::TransportableRc);
    let rb = tr.relative_bias_pct.unwrap();
    out.check(
        rb.abs() <= AC3_MAX_ABS_REL_BIAS_PCT && within(tr.coverage_pct, AC3_CP),
        format!("transportable bias {rb:+.2}%, CP {:.2}%", tr.coverage_pct),
    );
    let orc = beta1(&s, Method::OriginalRc).relative_bias_pct.unwrap();
    out.check(within(orc, AC3_ORC_BIAS_PCT), format!("original RC bias {orc:+.2}%"));
    out
}

fn dims(i: usize) -> (usize, usize) {
    const P: [usize; 3] = [1, 2, 4];
    const Q: [usize; 2] = [1, 2];
    (P[i % 3], Q[(i / 3) % 2])
}

fn as_col(v: &Vector) -> Matrix {
    Matrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn ac4() -> Outcome {
    let mut out = Outcome::new();
    let mut r = rng(40);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for i in 0..AC4_PAIRS {
        let (p, q) = dims(i);
        let (main, val) = random_pair(&mut r, p, q, 400 + 50 * (i % 7), 120 + 20 * (i % 5));
        match (transportable_rc_carroll(&main, &val), transportable_rc_rosner(&main, &val)) {
            (Ok(a), Ok(b)) => worst = worst.max(rel_err(&as_col(&a.coefficients()), &as_col(&b.coefficients()))),
            _ => failures += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    out.check(failures == 0, format!("{failures} of {AC4_PAIRS} pairs failed to fit"));
    out.check(worst < AC4_REL, format!("max relative difference {worst:.2e}"));
    out.check(secs < AC4_SECONDS, format!("runtime {secs:.2} s"));
    out
}

fn stacked(theta: &ThetaHat) -> Vector {
    let (b0, b1, b2, _) = rosner_point(theta).expect("point estimate");
    let mut v = Vector::zeros(1 + b1.len() + b2.len());
    v[0] = b0;
    v.rows_mut(1, b1.len()).copy_from(&b1);
    v.rows_mut(1 + b1.len(), b2.len()).copy_from(&b2);
    v
}

fn ac5() -> Outcome {
    let mut out = Outcome::new();
    let mut r = rng(50);
    let start = Instant::now();
    let (mut worst_j, mut worst_v): (f64, f64) = (0.0, 0.0);
    for i in 0..AC5_POINTS {
        let (p, q) = dims(i);
        let (main, val) = random_pair(&mut r, p, q, 2000, 300);
        let theta = fit_transport_inputs(&main, &val).unwrap();
        let blocks = derivative_blocks(&theta).unwrap();
        let x = theta.parameter_vector();
        let j_fd = fd_jacobian(|t| stacked(&theta.with_parameters(t)), &x);
        worst_j = worst_j.max(rel_err(&blocks.jacobian(), &j_fd));
        let sandwich = j_fd.transpose() * theta.parameter_covariance() * &j_fd;
        worst_v = worst_v.max(rel_err(&assemble_vcov(&theta, &blocks).unwrap(), &sandwich));
    }
    let secs = start.elapsed().as_secs_f64();
    out.check(worst_j < AC5_JACOBIAN_REL, format!("max Jacobian relative error {worst_j:.2e}"));
    out.check(worst_v < AC5_SANDWICH_REL, format!("max covariance relative error {worst_v:.2e}"));
    out.check(secs < AC5_SECONDS, format!("runtime {secs:.2} s"));
    out
}

/// Population calibration problem with `Σz = C1ᵀΣxC1 + Σe`, built from the
/// library's own calibration formula so `Γ1` is the transported one.
fn operator_problem(r: &mut rand_chacha::ChaCha8Rng, p: usize) -> (Matrix, Matrix, Matrix, Vector) {
    use transport_rc::calibration::{MeasurementErrorModel, SurrogateMarginModel};
    let sigma_x = random_spd(r, p, 0.5);
    let sigma_e = random_spd(r, p, 0.3);
    let c1 = Matrix::identity(p, p) + random_matrix(r, p, p, 0.2);
    let sigma_z = c1.transpose() * &sigma_x * &c1 + &sigma_e;
    let me = MeasurementErrorModel {
        c0: Vector::zeros(p),
        c1,
        c2: Matrix::zeros(1, p),
        sigma_e,
        vcov_coeffs: Matrix::zeros(0, 0),
        vcov_sigma_e: Matrix::zeros(0, 0),
        n: 1,
    };
    let sm = SurrogateMarginModel {
        b0: Vector::zeros(p),
        b2: Matrix::zeros(1, p),
        sigma_z: sigma_z.clone(),
        vcov_coeffs: Matrix::zeros(0, 0),
        vcov_sigma_z: Matrix::zeros(0, 0),
        n: 1,
    };
    let gamma1 = derive_calibration(&me, &sm).unwrap().gamma1;
    let alpha = Vector::from_fn(p, |_, _| normal(r));
    (gamma1, sigma_x, sigma_z, alpha)
}

fn ac6() -> Outcome {
    let mut out = Outcome::new();
    let mut r = rng(60);
    for p in [1, 2] {
        let mut min_gap = f64::INFINITY;
        let mut singular = 0;
        for _ in 0..AC6_TRIALS {
            let (g1, sx, sz, alpha) = operator_problem(&mut r, p);
            let t1 = random_matrix(&mut r, p, p, 1.0);
            let t2 = random_matrix(&mut r, p, p, 1.0);
            match optimal_operator_gap(&g1, &sx, &sz, &alpha, &t1, &t2) {
                Ok(gap) => min_gap = min_gap.min(gap),
                Err(_) => singular += 1,
            }
        }
        out.check(
            min_gap >= AC6_GAP_FLOOR,
            format!("p = {p}: smallest gap over {AC6_TRIALS} trial pairs {min_gap:.3e} ({singular} singular)"),
        );

        let (g1, sx, sz, alpha) = operator_problem(&mut r, p);
        let n = 2 * p * p;
        let f = |v: &[f64]| {
            let l1 = Matrix::from_column_slice(p, p, &v[..p * p]);
            let l2 = Matrix::from_column_slice(p, p, &v[p * p..]);
            optimal_operator_gap(&g1, &sx, &sz, &alpha, &l1, &l2).unwrap_or(f64::INFINITY)
        };
        let mut worst: f64 = 0.0;
        for _ in 0..AC6_STARTS {
            let mut x: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
            let mut fx = f(&x);
            // Restarting resets a collapsed simplex.
            for _ in 0..10 {
                (x, fx) = nelder_mead(f, &x, 0.5, 4000);
            }
            worst = worst.max(fx);
        }
        out.check(
            worst < AC6_MIN_GAP,
            format!("p = {p}: worst gap reached from {AC6_STARTS} starts {worst:.3e}"),
        );
    }
    out
}

fn ac7() -> Outcome {
    let mut out = Outcome::new();
    for t in Transport::ALL {
        let spec = ScenarioSpec::scalar(t, MeLevel::Small).with_sizes(AC7_N, AC7_N);
        let s = run_study(&spec, AC7_REPS, AC7_SEED, 0).unwrap();
        let tr = beta1(&s, Method::TransportableRc);
        let z_tr = tr.bias / tr.mc_se.unwrap();
        out.check(
            z_tr.abs() <= AC7_MC_SE_BAND,
            format!("{}: transportable mean {:.5}, {z_tr:+.2} MC SE from 1", t.label(), tr.mean),
        );
        let orc = beta1(&s, Method::OriginalRc);
        let z_orc = orc.bias / orc.mc_se.unwrap();
        if t != Transport::S1 {
            out.check(
                z_orc.abs() > AC7_MC_SE_BAND,
                format!("{}: original RC mean {:.5}, {z_orc:+.1} MC SE from 1", t.label(), orc.mean),
            );
        }
    }
    out
}

fn ac8() -> Outcome {
    let mut out = Outcome::new();
    let dir = tempfile::TempDir::new().unwrap();
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/scenario2_large.cfg");
    let mut files = Vec::new();
    for (i, threads) in ["1", "8", "8"].iter().enumerate() {
        let path = dir.path().join(format!("run{i}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_trc"))
            .args(["simulate", "--config"])
            .arg(&cfg)
            .args(["--seed", AC8_SEED, "--reps", AC8_REPS, "--threads", threads, "--format", "json", "--output"])
            .arg(&path)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        out.check(status.success(), format!("run {i} with --threads {threads} exited {status}"));
        files.push(std::fs::read(&path).unwrap_or_default());
    }
    out.check(!files[0].is_empty() && files[1] == files[2], "repeat runs byte-identical".into());
    out.check(files[0] == files[1], "--threads 1 and --threads 8 byte-identical".into());
    out
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 8] = [
        ("AC1", "scalar exposure, three scenarios x two ME levels", ac1),
        ("AC2", "four exposures, bias pattern and coverage", ac2),
        ("AC3", "gamma exposure errors", ac3),
        ("AC4", "prediction and closed forms agree", ac4),
        ("AC5", "analytic derivatives and covariance", ac5),
        ("AC6", "optimal combining operators", ac6),
        ("AC7", "consistency at n = 1e5", ac7),
        ("AC8", "CLI determinism", ac8),
    ];
    // `cargo test` forwards harness flags; a bare word filters criteria.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, what, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| id.eq_ignore_ascii_case(f)) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        println!(
            "{} {id} {what} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        for d in &o.detail {
            println!("       {d}");
        }
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
