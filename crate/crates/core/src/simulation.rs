//! Scenario generators and the Monte Carlo replication engine.
//!
//! Each study draws `W ~ N(1, 1)` (independently per confounder), the true
//! exposure `X = s(a0 + A2ᵀW) + ε` with `var ε = sΣ_M`, the surrogate
//! `Z = c0 + C1ᵀX + C2ᵀW + e` with the *same* error model in both studies, and
//! (main study only) `Y = β0 + β1ᵀX + β2ᵀW + σ_Y·N(0, 1)`. The transport
//! multiplier `s` is 1 in the main study and 1, 0.8 or 1.25 in the
//! validation study for scenarios S1, S2 and S3.
//!
//! Randomness: replication `r` of a study seeded with `seed` uses
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `r`, so results do not depend
//! on how replications are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal as NormalDist, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaCdf, Normal};

use crate::calibration::{
    self, fit_transport_inputs, naive_from_fit, original_rc_from_fit, CorrectedEstimate,
    MainStudyData, Method, ValidationStudyData,
};
use crate::linalg::{Factorized, Matrix, Vector};
use crate::variance::critical_value;
use crate::{Error, Result};

pub const RNG_NAME: &str = "ChaCha8Rng/rand_chacha-0.9 (seed_from_u64, stream = replication index)";

/// Measurement error is "small" when `β1j²·var(Xj | Z, W)` is below this.
pub const SMALL_ME_THRESHOLD: f64 = 0.5;

/// `max_j β1j²·var(Xj | Z, W)` targets used to calibrate default error
/// variances for multi-exposure scenarios; the scalar defaults sit at the
/// same two levels (0.4925/1.4925 and 1.941/2.941).
pub const SMALL_ME_TARGET: f64 = 0.33;
pub const LARGE_ME_TARGET: f64 = 0.66;

/// Default scalar error variances: population attenuation 0.670 / 0.340.
pub const SCALAR_SIGMA_E_SMALL: f64 = 0.4925;
pub const SCALAR_SIGMA_E_LARGE: f64 = 1.941;

pub const DEFAULT_BETA0: f64 = 1.0;
pub const DEFAULT_BETA2: f64 = 0.5;
pub const FOUR_EXPOSURE_BETA1: [f64; 4] = [1.2, 1.1, 0.9, 0.8];
pub const FOUR_EXPOSURE_CORRELATION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    #[serde(alias = "S1")]
    S1,
    #[serde(alias = "S2")]
    S2,
    #[serde(alias = "S3")]
    S3,
}

impl Transport {
    /// Validation-study multiplier on the mean and covariance of `X | W`.
    pub fn multiplier(self) -> f64 {
        match self {
            Transport::S1 => 1.0,
            Transport::S2 => 0.8,
            Transport::S3 => 1.25,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Transport::S1 => "S1",
            Transport::S2 => "S2",
            Transport::S3 => "S3",
        }
    }

    pub const ALL: [Transport; 3] = [Transport::S1, Transport::S2, Transport::S3];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeLevel {
    Small,
    Large,
}

impl MeLevel {
    pub fn label(self) -> &'static str {
        match self {
            MeLevel::Small => "small",
            MeLevel::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorDistribution {
    Normal,
    /// Shape = variance, rate 1, shifted to mean zero; correlated components
    /// via a normal copula.
    Gamma,
}

impl ErrorDistribution {
    pub fn label(self) -> &'static str {
        match self {
            ErrorDistribution::Normal => "normal",
            ErrorDistribution::Gamma => "gamma",
        }
    }
}

/// Full description of one simulated design.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub n_main: usize,
    pub n_validation: usize,
    pub transport: Transport,
    pub me_level: MeLevel,
    pub exposure_error: ErrorDistribution,
    pub beta0: f64,
    /// length `p`
    pub beta1: Vector,
    /// length `q`
    pub beta2: Vector,
    /// Exposure model `X = a0 + A2ᵀW + ε` in the main study.
    pub a0: Vector,
    /// `q × p`
    pub a2: Matrix,
    /// `Σ_M = var(X | W)` in the main study.
    pub sigma_x: Matrix,
    pub c0: Vector,
    pub c1: Matrix,
    /// `q × p`
    pub c2: Matrix,
    pub sigma_e: Matrix,
    pub sigma_y: f64,
}

impl ScenarioSpec {
    /// Single exposure, single confounder, `n_M = 10000`, `n_V = 500`.
    pub fn scalar(transport: Transport, me_level: MeLevel) -> Self {
        let sigma_e = match me_level {
            MeLevel::Small => SCALAR_SIGMA_E_SMALL,
            MeLevel::Large => SCALAR_SIGMA_E_LARGE,
        };
        let one = |v: f64| Matrix::from_element(1, 1, v);
        ScenarioSpec {
            n_main: 10_000,
            n_validation: 500,
            transport,
            me_level,
            exposure_error: ErrorDistribution::Normal,
            beta0: DEFAULT_BETA0,
            beta1: Vector::from_element(1, 1.0),
            beta2: Vector::from_element(1, DEFAULT_BETA2),
            a0: Vector::from_element(1, 0.5),
            a2: one(0.5),
            sigma_x: one(1.0),
            c0: Vector::zeros(1),
            c1: one(1.0),
            c2: Matrix::zeros(1, 1),
            sigma_e: one(sigma_e),
            sigma_y: 1.0,
        }
    }

    /// Four correlated exposures (unit variances, correlation 0.3), identity
    /// `C1`, `Σe = σ²I` calibrated so the most affected exposure hits the
    /// small/large target.
    pub fn four_exposure(transport: Transport, me_level: MeLevel) -> Self {
        let p = 4;
        let mut sigma_x = Matrix::from_element(p, p, FOUR_EXPOSURE_CORRELATION);
        sigma_x.fill_diagonal(1.0);
        let beta1 = Vector::from_row_slice(&FOUR_EXPOSURE_BETA1);
        let c1 = Matrix::identity(p, p);
        let target = match me_level {
            MeLevel::Small => SMALL_ME_TARGET,
            MeLevel::Large => LARGE_ME_TARGET,
        };
        let s2 = calibrate_error_variance(&sigma_x, &c1, &beta1, target)
            .expect("default four-exposure calibration is well posed");
        ScenarioSpec {
            n_main: 10_000,
            n_validation: 500,
            transport,
            me_level,
            exposure_error: ErrorDistribution::Normal,
            beta0: DEFAULT_BETA0,
            beta1,
            beta2: Vector::from_element(1, DEFAULT_BETA2),
            a0: Vector::from_element(p, 0.5),
            a2: Matrix::from_element(1, p, 0.5),
            sigma_x,
            c0: Vector::zeros(p),
            c1,
            c2: Matrix::zeros(1, p),
            sigma_e: Matrix::from_diagonal_element(p, p, s2),
            sigma_y: 1.0,
        }
    }

    pub fn with_error_distribution(mut self, dist: ErrorDistribution) -> Self {
        self.exposure_error = dist;
        self
    }

    pub fn with_sizes(mut self, n_main: usize, n_validation: usize) -> Self {
        self.n_main = n_main;
        self.n_validation = n_validation;
        self
    }

    pub fn p(&self) -> usize {
        self.beta1.len()
    }
    pub fn q(&self) -> usize {
        self.beta2.len()
    }

    /// `(β0, β1ᵀ, β2ᵀ)ᵀ`.
    pub fn truth(&self) -> Vector {
        calibration::stack(self.beta0, &self.beta1, &self.beta2)
    }

    pub fn label(&self) -> String {
        format!(
            "{} {} ME, {} errors, p = {}, q = {}, n_M = {}, n_V = {}",
            self.transport.label(),
            self.me_level.label(),
            self.exposure_error.label(),
            self.p(),
            self.q(),
            self.n_main,
            self.n_validation
        )
    }

    /// `var(X | Z, W)` in the main study (diagonal).
    pub fn conditional_exposure_variance(&self) -> Result<Vector> {
        conditional_variance(&self.sigma_x, &self.c1, &self.sigma_e).map(|m| m.diagonal())
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        let q = self.q();
        let bad = |field: &str, msg: String| Err(Error::invalid_spec(field, msg));
        if p == 0 {
            return bad("beta1", "at least one exposure is required".into());
        }
        let shapes: [(&str, (usize, usize), (usize, usize)); 7] = [
            ("a0", (self.a0.len(), 1), (p, 1)),
            ("a2", self.a2.shape(), (q, p)),
            ("sigma_x", self.sigma_x.shape(), (p, p)),
            ("c0", (self.c0.len(), 1), (p, 1)),
            ("c1", self.c1.shape(), (p, p)),
            ("c2", self.c2.shape(), (q, p)),
            ("sigma_e", self.sigma_e.shape(), (p, p)),
        ];
        for (field, got, want) in shapes {
            if got != want {
                return bad(field, format!("expected shape {want:?}, got {got:?}"));
            }
        }
        let finite = self.beta0.is_finite()
            && self.sigma_y.is_finite()
            && [&self.beta1, &self.beta2, &self.a0, &self.c0]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()))
            && [&self.a2, &self.sigma_x, &self.c1, &self.c2, &self.sigma_e]
                .iter()
                .all(|m| m.iter().all(|x| x.is_finite()));
        if !finite {
            return bad("scenario", "all parameters must be finite".into());
        }
        let min_n = p + q + 1;
        if self.n_main <= min_n {
            return bad("n_main", format!("must exceed p + q + 1 = {min_n}"));
        }
        if self.n_validation <= min_n {
            return bad("n_validation", format!("must exceed p + q + 1 = {min_n}"));
        }
        if !(self.sigma_y >= 0.0) {
            return bad("sigma_y", "must be non-negative".into());
        }
        if !is_spd(&self.sigma_x) {
            return bad("sigma_x", "must be symmetric positive definite".into());
        }
        if !is_spd(&self.sigma_e) {
            return bad("sigma_e", "must be symmetric positive definite".into());
        }
        if Factorized::new(&self.c1, "scenario", "C1").is_err() {
            return bad("c1", "must be invertible".into());
        }
        // Small: every exposure below the threshold; large: at least one at
        // or above it.
        let cv = self.conditional_exposure_variance()?;
        let (worst, signal) = (0..p)
            .map(|j| (j, self.beta1[j].powi(2) * cv[j]))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        if (signal < SMALL_ME_THRESHOLD) != (self.me_level == MeLevel::Small) {
            return bad(
                "sigma_e",
                format!(
                    "max β1²·var(X|Z,W) = {signal:.4} (exposure {}) is inconsistent with me_level = {}",
                    worst + 1,
                    self.me_level.label()
                ),
            );
        }
        Ok(())
    }
}

fn is_spd(m: &Matrix) -> bool {
    let sym = (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max().max(1.0);
    sym && m.clone().cholesky().is_some()
}

/// `Σx − ΣxC1(C1ᵀΣxC1 + Σe)⁻¹C1ᵀΣx`.
fn conditional_variance(sigma_x: &Matrix, c1: &Matrix, sigma_e: &Matrix) -> Result<Matrix> {
    let var_z = c1.transpose() * sigma_x * c1 + sigma_e;
    let f = Factorized::new(&var_z, "scenario", "var(Z | W)")?;
    let cross = sigma_x * c1;
    Ok(sigma_x - &cross * f.solve(&cross.transpose()))
}

/// Population attenuation matrix `Γ1 = (C1ᵀΣxC1 + Σe)⁻¹C1ᵀΣx`.
fn population_gamma1(sigma_x: &Matrix, c1: &Matrix, sigma_e: &Matrix) -> Result<Matrix> {
    let var_z = c1.transpose() * sigma_x * c1 + sigma_e;
    let f = Factorized::new(&var_z, "scenario", "var(Z | W)")?;
    Ok(f.solve(&(c1.transpose() * sigma_x)))
}

/// Common error variance `σ²` (`Σe = σ²I`) at which the most affected
/// component reaches `max_j β1j²·var(Xj | Z, W) = target`.
///
/// Bisection on `log σ²`; every conditional variance is increasing in `σ²`.
pub fn calibrate_error_variance(sigma_x: &Matrix, c1: &Matrix, beta1: &Vector, target: f64) -> Result<f64> {
    let p = beta1.len();
    let signal = |log_s2: f64| -> Result<f64> {
        let cv = conditional_variance(sigma_x, c1, &Matrix::from_diagonal_element(p, p, log_s2.exp()))?;
        Ok((0..p).map(|j| beta1[j].powi(2) * cv[(j, j)]).fold(f64::NEG_INFINITY, f64::max))
    };
    let (mut lo, mut hi) = (-30.0_f64, 30.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if signal(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let log_s2 = 0.5 * (lo + hi);
    if (signal(log_s2)? - target).abs() > 1e-8 {
        return Err(Error::invalid_spec(
            "sigma_e",
            format!("cannot reach max β1²·var(X|Z,W) = {target}"),
        ));
    }
    Ok(log_s2.exp())
}

/// Population quantities implied by a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Attenuation {
    pub gamma1_main: Matrix,
    pub gamma1_validation: Matrix,
    /// Large-sample limit of the naive slope, `Γ1_M β1`.
    pub naive_beta1: Vector,
    /// Large-sample limit of original RC, `Γ1_V⁻¹ Γ1_M β1`.
    pub original_rc_beta1: Vector,
}

pub fn expected_attenuation(spec: &ScenarioSpec) -> Result<Attenuation> {
    let s = spec.transport.multiplier();
    let gamma1_main = population_gamma1(&spec.sigma_x, &spec.c1, &spec.sigma_e)?;
    let gamma1_validation = population_gamma1(&(&spec.sigma_x * s), &spec.c1, &spec.sigma_e)?;
    let naive_beta1 = &gamma1_main * &spec.beta1;
    let original_rc_beta1 =
        Factorized::new(&gamma1_validation, "scenario", "Γ1 (validation)")?.solve_vec(&naive_beta1);
    Ok(Attenuation {
        gamma1_main,
        gamma1_validation,
        naive_beta1,
        original_rc_beta1,
    })
}

struct StudyShape {
    scale: f64,
    /// Lower Cholesky factor of `scale·Σ_M`.
    chol: Matrix,
    sd: Vec<f64>,
    /// Per-component gamma shapes (= variances).
    shapes: Vec<f64>,
    gamma: Vec<Gamma<f64>>,
    gamma_cdf: Vec<GammaCdf>,
}

impl StudyShape {
    fn new(spec: &ScenarioSpec, scale: f64) -> Result<Self> {
        let sigma = &spec.sigma_x * scale;
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invalid_spec("sigma_x", "must be positive definite"))?
            .l();
        let shapes: Vec<f64> = sigma.diagonal().iter().copied().collect();
        let sd = shapes.iter().map(|v| v.sqrt()).collect();
        let (gamma, gamma_cdf) = if spec.exposure_error == ErrorDistribution::Gamma {
            let mut g = Vec::new();
            let mut c = Vec::new();
            for &k in &shapes {
                g.push(Gamma::new(k, 1.0).map_err(|e| Error::invalid_spec("sigma_x", e.to_string()))?);
                c.push(GammaCdf::new(k, 1.0).map_err(|e| Error::invalid_spec("sigma_x", e.to_string()))?);
            }
            (g, c)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(Self {
            scale,
            chol,
            sd,
            shapes,
            gamma,
            gamma_cdf,
        })
    }
}

/// Pre-factorised generator for one scenario; cheap to share across threads.
pub struct Generator {
    spec: ScenarioSpec,
    main: StudyShape,
    validation: StudyShape,
    chol_e: Matrix,
    w_dist: NormalDist<f64>,
    unit: Normal,
}

impl Generator {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let chol_e = spec
            .sigma_e
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invalid_spec("sigma_e", "must be positive definite"))?
            .l();
        Ok(Self {
            main: StudyShape::new(spec, 1.0)?,
            validation: StudyShape::new(spec, spec.transport.multiplier())?,
            spec: spec.clone(),
            chol_e,
            w_dist: NormalDist::new(1.0, 1.0).expect("valid normal"),
            unit: Normal::new(0.0, 1.0).expect("valid normal"),
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    /// Main and validation study for replication `replication`.
    pub fn generate(&self, seed: u64, replication: u64) -> Result<(MainStudyData, ValidationStudyData)> {
        let mut rng = replication_rng(seed, replication);
        let main = self.draw(&mut rng, &self.main, self.spec.n_main, true);
        let val = self.draw(&mut rng, &self.validation, self.spec.n_validation, false);
        let main = MainStudyData::new(main.y, main.z, main.w)?;
        let val = ValidationStudyData::new(val.x, val.z, val.w)?;
        Ok((main, val))
    }

    fn draw(&self, rng: &mut ChaCha8Rng, study: &StudyShape, n: usize, outcome: bool) -> Draw {
        let spec = &self.spec;
        let p = spec.p();
        let q = spec.q();
        let mut xs = vec![0.0; n * p];
        let mut zs = vec![0.0; n * p];
        let mut ws = vec![0.0; n * q];
        let mut ys = vec![0.0; if outcome { n } else { 0 }];
        let mut w = vec![0.0; q];
        let mut xi = vec![0.0; p];
        let mut x = vec![0.0; p];
        for i in 0..n {
            for wb in w.iter_mut() {
                *wb = self.w_dist.sample(rng);
            }
            self.exposure_error(rng, study, &mut xi, &mut x);
            for j in 0..p {
                let mut mean = spec.a0[j];
                for b in 0..q {
                    mean += spec.a2[(b, j)] * w[b];
                }
                x[j] += study.scale * mean;
            }
            for v in xi.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            for j in 0..p {
                let mut zj = spec.c0[j];
                for a in 0..p {
                    zj += spec.c1[(a, j)] * x[a];
                }
                for b in 0..q {
                    zj += spec.c2[(b, j)] * w[b];
                }
                for a in 0..=j {
                    zj += self.chol_e[(j, a)] * xi[a];
                }
                zs[i * p + j] = zj;
            }
            if outcome {
                let noise: f64 = StandardNormal.sample(rng);
                let mut y = spec.beta0 + spec.sigma_y * noise;
                for j in 0..p {
                    y += spec.beta1[j] * x[j];
                }
                for b in 0..q {
                    y += spec.beta2[b] * w[b];
                }
                ys[i] = y;
            }
            xs[i * p..(i + 1) * p].copy_from_slice(&x);
            ws[i * q..(i + 1) * q].copy_from_slice(&w);
        }
        Draw {
            x: Matrix::from_row_slice(n, p, &xs),
            z: Matrix::from_row_slice(n, p, &zs),
            w: Matrix::from_row_slice(n, q, &ws),
            y: Vector::from_vec(ys),
        }
    }

    /// Writes a mean-zero draw of `ε` into `out`; `xi` is scratch space.
    fn exposure_error(&self, rng: &mut ChaCha8Rng, study: &StudyShape, xi: &mut [f64], out: &mut [f64]) {
        let p = out.len();
        if self.spec.exposure_error == ErrorDistribution::Gamma && p == 1 {
            out[0] = study.gamma[0].sample(rng) - study.shapes[0];
            return;
        }
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        for j in 0..p {
            out[j] = (0..=j).map(|a| study.chol[(j, a)] * xi[a]).sum();
        }
        if self.spec.exposure_error == ErrorDistribution::Gamma {
            for j in 0..p {
                let u = self
                    .unit
                    .cdf(out[j] / study.sd[j])
                    .clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                out[j] = study.gamma_cdf[j].inverse_cdf(u) - study.shapes[j];
            }
        }
    }
}

struct Draw {
    x: Matrix,
    z: Matrix,
    w: Matrix,
    y: Vector,
}

/// Generator state for replication `replication` of a study seeded `seed`.
pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// One main/validation pair; identical to replication 0 of [`run_study`].
pub fn generate_pair(spec: &ScenarioSpec, seed: u64) -> Result<(MainStudyData, ValidationStudyData)> {
    Generator::new(spec)?.generate(seed, 0)
}

/// Per-coefficient Monte Carlo summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// `100·bias/truth`; absent when the truth is zero.
    pub relative_bias_pct: Option<f64>,
    pub mean_se: f64,
    /// Empirical SD across replications; absent with one replication.
    pub sd: Option<f64>,
    /// `sd / √R`, the Monte Carlo standard error of `mean`.
    pub mc_se: Option<f64>,
    pub coverage_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub succeeded: usize,
    pub failed: usize,
    pub coefficients: Vec<CoefficientSummary>,
}

impl MethodSummary {
    pub fn coefficient(&self, name: &str) -> Option<&CoefficientSummary> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    /// Summaries of the exposure coefficients `β1[1..p]`.
    pub fn exposures(&self) -> impl Iterator<Item = &CoefficientSummary> {
        self.coefficients.iter().filter(|c| c.name.starts_with("beta1"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub scenario: String,
    pub replications: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub rng: String,
    pub methods: Vec<MethodSummary>,
}

impl ReplicationSummary {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Fails if any estimator broke down in more than 1% of replications.
    pub fn check_failures(&self) -> Result<()> {
        for m in &self.methods {
            if m.failed * 100 > self.replications {
                return Err(Error::TooManyFailures {
                    method: m.method.to_string(),
                    failed: m.failed,
                    total: self.replications,
                });
            }
        }
        Ok(())
    }

    /// Aligned text table (method, coefficient, estimate, bias %, SE, SD, CP).
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{}\n{} replications, seed {}, {:.0}% intervals\n",
            self.scenario,
            self.replications,
            self.seed,
            self.ci_level * 100.0
        );
        out.push_str(&format!(
            "{:<17} {:<9} {:>9} {:>9} {:>8} {:>8} {:>8}\n",
            "Method", "Coef", "Estimate", "Bias(%)", "SE", "SD", "CP(%)"
        ));
        for m in &self.methods {
            if m.coefficients.is_empty() {
                out.push_str(&format!("{:<17} (no successful replications)\n", m.method.as_str()));
            }
            for c in &m.coefficients {
                let opt = |v: Option<f64>, prec: usize| {
                    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
                };
                out.push_str(&format!(
                    "{:<17} {:<9} {:>9.3} {:>9} {:>8.3} {:>8} {:>8.2}\n",
                    m.method.as_str(),
                    c.name,
                    c.mean,
                    opt(c.relative_bias_pct, 2),
                    c.mean_se,
                    opt(c.sd, 3),
                    c.coverage_pct
                ));
            }
            if m.failed > 0 {
                out.push_str(&format!("{:<17} {} failed replications\n", "", m.failed));
            }
        }
        out
    }
}

/// Names of `(β0, β1, β2)` entries: `beta0`, `beta1[1]`, …, `beta2[1]`, ….
pub fn coefficient_names(p: usize, q: usize) -> Vec<String> {
    let mut names = vec!["beta0".to_string()];
    names.extend((1..=p).map(|j| format!("beta1[{j}]")));
    names.extend((1..=q).map(|j| format!("beta2[{j}]")));
    names
}

#[derive(Debug, Clone)]
struct MethodDraw {
    coef: Vector,
    se: Vector,
}

const METHODS: [Method; 3] = [Method::Naive, Method::OriginalRc, Method::TransportableRc];

fn to_draw(est: Result<CorrectedEstimate>) -> Option<MethodDraw> {
    let est = est.ok()?;
    let se = est.standard_errors()?;
    let coef = est.coefficients();
    if coef.iter().chain(se.iter()).all(|v| v.is_finite()) {
        Some(MethodDraw { coef, se })
    } else {
        None
    }
}

/// Runs all three estimators on one generated pair.
fn replicate(generator: &Generator, seed: u64, replication: u64) -> [Option<MethodDraw>; 3] {
    let Ok((main, val)) = generator.generate(seed, replication) else {
        return [None, None, None];
    };
    match fit_transport_inputs(&main, &val) {
        Ok(theta) => [
            to_draw(Ok(naive_from_fit(theta.outcome.clone()))),
            to_draw(original_rc_from_fit(&theta.outcome, &val)),
            to_draw(calibration::transportable_from_theta(&theta)),
        ],
        Err(_) => [
            to_draw(calibration::naive(&main)),
            to_draw(calibration::original_rc(&main, &val)),
            None,
        ],
    }
}

/// Monte Carlo study with 95% intervals.
pub fn run_study(
    spec: &ScenarioSpec,
    replications: usize,
    seed: u64,
    parallelism: usize,
) -> Result<ReplicationSummary> {
    run_study_at_level(spec, replications, seed, parallelism, 0.95)
}

/// Monte Carlo study. Replications run on a dedicated pool of `parallelism`
/// threads; results are collected in replication order and reduced
/// sequentially, so the summary is bit-identical for any thread count.
///
/// Replications in which an estimator fails are counted per method rather
/// than aborting the study; see [`ReplicationSummary::check_failures`].
pub fn run_study_at_level(
    spec: &ScenarioSpec,
    replications: usize,
    seed: u64,
    parallelism: usize,
    ci_level: f64,
) -> Result<ReplicationSummary> {
    if replications == 0 {
        return Err(Error::invalid_spec("replications", "must be at least 1"));
    }
    let z = critical_value(ci_level)?;
    let generator = Generator::new(spec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::invalid_spec("parallelism", e.to_string()))?;
    let draws: Vec<[Option<MethodDraw>; 3]> = pool.install(|| {
        (0..replications as u64)
            .into_par_iter()
            .map(|r| replicate(&generator, seed, r))
            .collect()
    });

    let truth = spec.truth();
    let names = coefficient_names(spec.p(), spec.q());
    let methods = METHODS
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let ok: Vec<&MethodDraw> = draws.iter().filter_map(|d| d[m].as_ref()).collect();
            summarize(method, &ok, replications, &truth, &names, z)
        })
        .collect();
    Ok(ReplicationSummary {
        scenario: spec.label(),
        replications,
        seed,
        ci_level,
        rng: RNG_NAME.to_string(),
        methods,
    })
}

fn summarize(
    method: Method,
    ok: &[&MethodDraw],
    total: usize,
    truth: &Vector,
    names: &[String],
    z: f64,
) -> MethodSummary {
    let n = ok.len();
    let coefficients = if n == 0 {
        Vec::new()
    } else {
        (0..truth.len())
            .map(|i| {
                let t = truth[i];
                let mean = ok.iter().map(|d| d.coef[i]).sum::<f64>() / n as f64;
                let mean_se = ok.iter().map(|d| d.se[i]).sum::<f64>() / n as f64;
                let sd = (n > 1).then(|| {
                    let ss: f64 = ok.iter().map(|d| (d.coef[i] - mean).powi(2)).sum();
                    (ss / (n - 1) as f64).sqrt()
                });
                let hits = ok
                    .iter()
                    .filter(|d| (d.coef[i] - t).abs() <= z * d.se[i])
                    .count();
                let bias = mean - t;
                CoefficientSummary {
                    name: names[i].clone(),
                    truth: t,
                    mean,
                    bias,
                    relative_bias_pct: (t != 0.0).then(|| 100.0 * bias / t),
                    mean_se,
                    sd,
                    mc_se: sd.map(|s| s / (n as f64).sqrt()),
                    coverage_pct: 100.0 * hits as f64 / n as f64,
                }
            })
            .collect()
    };
    MethodSummary {
        method,
        succeeded: n,
        failed: total - n,
        coefficients,
    }
}
