//! Naive, original regression-calibration and transportable
//! regression-calibration estimators.
//!
//! Notation: the main study observes `(Y, Z, W)`, the validation study
//! `(X, Z, W)`; `p` exposures, `q` error-free confounders. The transportable
//! estimator combines the validation study's error model
//! `Z = c0 + C1ᵀX + C2ᵀW + e` (`var e = Σe`) with the main study's surrogate
//! margin `Z = b0 + B2ᵀW + e_z` (`var e_z = Σz`) to obtain the main-study
//! calibration equation
//!
//! ```text
//! γ0  = (Σe⁻¹C1ᵀ)⁻¹ (Σz⁻¹b0  − Σe⁻¹c0)
//! Γ1ᵀ = (Σe⁻¹C1ᵀ)⁻¹ (Σe⁻¹    − Σz⁻¹)
//! Γ2ᵀ = (Σe⁻¹C1ᵀ)⁻¹ (Σz⁻¹B2ᵀ − Σe⁻¹C2ᵀ)
//! ```

use serde::Serialize;

use crate::linalg::{
    design_with_intercept, eigen_range, fit_multi_ols, Factorized, Matrix, MultiOutputFit,
    Vector,
};
use crate::variance::{self, ThetaHat};
use crate::{Error, Result};

/// Relative tolerance for calling `Σe⁻¹ − Σz⁻¹` positive semidefinite.
const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MainStudyData {
    y: Vector,
    z: Matrix,
    w: Matrix,
}

impl MainStudyData {
    /// `w` may have zero columns.
    pub fn new(y: Vector, z: Matrix, w: Matrix) -> Result<Self> {
        let n = y.len();
        check_rows("main study", n, &[("z", &z), ("w", &w)])?;
        check_exposures("main study", z.ncols())?;
        let required = z.ncols() + w.ncols() + 1;
        if n <= required {
            return Err(Error::InsufficientSampleSize { n, required });
        }
        check_finite("main study y", y.iter())?;
        check_finite("main study z", z.iter())?;
        check_finite("main study w", w.iter())?;
        Ok(Self { y, z, w })
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }
    pub fn z(&self) -> &Matrix {
        &self.z
    }
    pub fn w(&self) -> &Matrix {
        &self.w
    }
    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn p(&self) -> usize {
        self.z.ncols()
    }
    pub fn q(&self) -> usize {
        self.w.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationStudyData {
    x: Matrix,
    z: Matrix,
    w: Matrix,
}

impl ValidationStudyData {
    pub fn new(x: Matrix, z: Matrix, w: Matrix) -> Result<Self> {
        let n = x.nrows();
        check_rows("validation study", n, &[("z", &z), ("w", &w)])?;
        check_exposures("validation study", x.ncols())?;
        if x.ncols() != z.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "validation study has {} true exposures but {} surrogates",
                x.ncols(),
                z.ncols()
            )));
        }
        let required = x.ncols() + w.ncols() + 1;
        if n <= required {
            return Err(Error::InsufficientSampleSize { n, required });
        }
        check_finite("validation study x", x.iter())?;
        check_finite("validation study z", z.iter())?;
        check_finite("validation study w", w.iter())?;
        Ok(Self { x, z, w })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }
    pub fn z(&self) -> &Matrix {
        &self.z
    }
    pub fn w(&self) -> &Matrix {
        &self.w
    }
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
    pub fn q(&self) -> usize {
        self.w.ncols()
    }
}

fn check_rows(study: &str, n: usize, parts: &[(&str, &Matrix)]) -> Result<()> {
    for (name, m) in parts {
        if m.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "{study}: {name} has {} rows, expected {n}",
                m.nrows()
            )));
        }
    }
    Ok(())
}

fn check_exposures(study: &str, p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::DimensionMismatch(format!("{study}: no exposures")));
    }
    Ok(())
}

fn check_finite<'a>(what: &str, mut it: impl Iterator<Item = &'a f64>) -> Result<()> {
    if it.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput { what: what.into() })
    }
}

/// Classical-like error model, fitted in the validation study.
///
/// `vcov_coeffs` is the covariance of `vec([c0ᵀ; C1; C2])`, i.e. column `j`
/// of the stacked coefficient matrix is the regression for surrogate `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementErrorModel {
    pub c0: Vector,
    /// `p × p`
    pub c1: Matrix,
    /// `q × p`
    pub c2: Matrix,
    pub sigma_e: Matrix,
    pub vcov_coeffs: Matrix,
    pub vcov_sigma_e: Matrix,
    pub n: usize,
}

/// Regression of the surrogates on the confounders in the main study.
/// `vcov_coeffs` covers `vec([b0ᵀ; B2])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateMarginModel {
    pub b0: Vector,
    /// `q × p`
    pub b2: Matrix,
    pub sigma_z: Matrix,
    pub vcov_coeffs: Matrix,
    pub vcov_sigma_z: Matrix,
    pub n: usize,
}

/// Naive outcome regression of `Y` on `(1, Z, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeSurrogateFit {
    pub beta0_star: f64,
    pub beta1_star: Vector,
    pub beta2_star: Vector,
    /// Covariance of `(β0*, β1*, β2*)`.
    pub vcov: Matrix,
    pub n: usize,
}

impl OutcomeSurrogateFit {
    pub fn p(&self) -> usize {
        self.beta1_star.len()
    }
    pub fn q(&self) -> usize {
        self.beta2_star.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationEquation {
    pub gamma0: Vector,
    /// `p × p`; `E(X | Z, W) = γ0 + Γ1ᵀZ + Γ2ᵀW`.
    pub gamma1: Matrix,
    /// `q × p`
    pub gamma2: Matrix,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Naive,
    OriginalRc,
    TransportableRc,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::OriginalRc => "original-rc",
            Method::TransportableRc => "transportable-rc",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Non-fatal diagnostics attached to results.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Warning {
    /// `Σe⁻¹ − Σz⁻¹` has a negative eigenvalue; the population version is PSD.
    InformationGapNotPsd { min_eigenvalue: f64 },
    /// A variance on the diagonal of an assembled covariance came out negative;
    /// its standard error is reported as 0.
    NegativeVariance { index: usize, value: f64 },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::InformationGapNotPsd { min_eigenvalue } => write!(
                f,
                "Σe⁻¹ − Σz⁻¹ is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})"
            ),
            Warning::NegativeVariance { index, value } => write!(
                f,
                "negative variance {value:.3e} for coefficient {index}; standard error floored at 0"
            ),
        }
    }
}

/// `(β0, β1, β2)` with optional covariance of the stacked vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedEstimate {
    pub method: Method,
    pub beta0: f64,
    pub beta1: Vector,
    pub beta2: Vector,
    pub vcov: Option<Matrix>,
    pub warnings: Vec<Warning>,
}

impl CorrectedEstimate {
    pub fn p(&self) -> usize {
        self.beta1.len()
    }
    pub fn q(&self) -> usize {
        self.beta2.len()
    }

    /// `(β0, β1ᵀ, β2ᵀ)ᵀ`, the ordering used by `vcov`.
    pub fn coefficients(&self) -> Vector {
        stack(self.beta0, &self.beta1, &self.beta2)
    }

    /// Square roots of the covariance diagonal, negative entries floored at 0.
    pub fn standard_errors(&self) -> Option<Vector> {
        self.vcov
            .as_ref()
            .map(|v| Vector::from_iterator(v.nrows(), v.diagonal().iter().map(|d| d.max(0.0).sqrt())))
    }

    /// Attach a covariance, flagging negative diagonal entries.
    pub(crate) fn with_vcov(mut self, vcov: Matrix) -> Self {
        for (i, d) in vcov.diagonal().iter().enumerate() {
            if *d < 0.0 {
                self.warnings.push(Warning::NegativeVariance { index: i, value: *d });
            }
        }
        self.vcov = Some(vcov);
        self
    }
}

pub(crate) fn stack(b0: f64, b1: &Vector, b2: &Vector) -> Vector {
    let mut v = Vector::zeros(1 + b1.len() + b2.len());
    v[0] = b0;
    v.rows_mut(1, b1.len()).copy_from(b1);
    v.rows_mut(1 + b1.len(), b2.len()).copy_from(b2);
    v
}

fn column_matrix(v: &Vector) -> Matrix {
    Matrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// OLS of `Y` on `(1, Z, W)` in the main study.
pub fn fit_naive(main: &MainStudyData) -> Result<OutcomeSurrogateFit> {
    let design = design_with_intercept(&[main.z(), main.w()]);
    let fit = fit_multi_ols(&design, &column_matrix(main.y()))?;
    let p = main.p();
    let q = main.q();
    let c = fit.coef.column(0);
    Ok(OutcomeSurrogateFit {
        beta0_star: c[0],
        beta1_star: c.rows(1, p).into_owned(),
        beta2_star: c.rows(1 + p, q).into_owned(),
        vcov: fit.coef_vcov,
        n: fit.n,
    })
}

/// Multi-output OLS of `Z` on `(1, X, W)` in the validation study.
pub fn fit_error_model(validation: &ValidationStudyData) -> Result<MeasurementErrorModel> {
    let design = design_with_intercept(&[validation.x(), validation.w()]);
    let fit = fit_multi_ols(&design, validation.z())?;
    let p = validation.p();
    let q = validation.q();
    let MultiOutputFit {
        coef,
        residual_cov,
        coef_vcov,
        residual_cov_vcov,
        n,
        ..
    } = fit;
    Ok(MeasurementErrorModel {
        c0: coef.row(0).transpose(),
        c1: coef.rows(1, p).into_owned(),
        c2: coef.rows(1 + p, q).into_owned(),
        sigma_e: residual_cov,
        vcov_coeffs: coef_vcov,
        vcov_sigma_e: residual_cov_vcov,
        n,
    })
}

/// Multi-output OLS of `Z` on `(1, W)` in the main study.
pub fn fit_surrogate_margin(main: &MainStudyData) -> Result<SurrogateMarginModel> {
    let design = design_with_intercept(&[main.w()]);
    let fit = fit_multi_ols(&design, main.z())?;
    let q = main.q();
    Ok(SurrogateMarginModel {
        b0: fit.coef.row(0).transpose(),
        b2: fit.coef.rows(1, q).into_owned(),
        sigma_z: fit.residual_cov,
        vcov_coeffs: fit.coef_vcov,
        vcov_sigma_z: fit.residual_cov_vcov,
        n: fit.n,
    })
}

const STAGE_TRANSPORT: &str = "transport";

/// Precision matrices shared by the transport formula and the closed-form
/// correction.
pub(crate) struct Precisions {
    pub se: Matrix,
    pub sz: Matrix,
    pub warnings: Vec<Warning>,
}

pub(crate) fn precisions(
    me: &MeasurementErrorModel,
    sm: &SurrogateMarginModel,
) -> Result<Precisions> {
    check_shapes(me, sm)?;
    let se = Factorized::new(&me.sigma_e, STAGE_TRANSPORT, "Σe")?.inverse();
    let sz = Factorized::new(&sm.sigma_z, STAGE_TRANSPORT, "Σz")?.inverse();
    let (min_ev, max_ev) = eigen_range(&(&se - &sz));
    let mut warnings = Vec::new();
    if min_ev < -PSD_TOLERANCE * max_ev.abs().max(min_ev.abs()) {
        warnings.push(Warning::InformationGapNotPsd {
            min_eigenvalue: min_ev,
        });
    }
    Ok(Precisions { se, sz, warnings })
}

fn check_shapes(me: &MeasurementErrorModel, sm: &SurrogateMarginModel) -> Result<()> {
    let p = me.c0.len();
    let q = me.c2.nrows();
    let ok = me.c1.shape() == (p, p)
        && me.c2.ncols() == p
        && me.sigma_e.shape() == (p, p)
        && sm.b0.len() == p
        && sm.b2.shape() == (q, p)
        && sm.sigma_z.shape() == (p, p);
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "error model (p = {p}, q = {q}) and surrogate margin (p = {}, q = {}) disagree",
            sm.b0.len(),
            sm.b2.nrows()
        )))
    }
}

/// Main-study calibration equation from the transported error model and the
/// main-study surrogate margin.
pub fn derive_calibration(
    me: &MeasurementErrorModel,
    sm: &SurrogateMarginModel,
) -> Result<CalibrationEquation> {
    let Precisions { se, sz, warnings } = precisions(me, sm)?;
    let lhs = Factorized::new(&(&se * me.c1.transpose()), STAGE_TRANSPORT, "Σe⁻¹C1ᵀ")?;
    let gamma0 = lhs.solve_vec(&(&sz * &sm.b0 - &se * &me.c0));
    let gamma1 = lhs.solve(&(&se - &sz)).transpose();
    let gamma2 = lhs
        .solve(&(&sz * sm.b2.transpose() - &se * me.c2.transpose()))
        .transpose();
    Ok(CalibrationEquation {
        gamma0,
        gamma1,
        gamma2,
        warnings,
    })
}

/// Row-wise `x̂ = γ0 + Γ1ᵀz + Γ2ᵀw`.
pub fn predict_true_exposures(cal: &CalibrationEquation, z: &Matrix, w: &Matrix) -> Result<Matrix> {
    let p = cal.gamma0.len();
    if z.ncols() != p || w.ncols() != cal.gamma2.nrows() || z.nrows() != w.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "calibration expects z with {p} and w with {} columns, got {}×{} and {}×{}",
            cal.gamma2.nrows(),
            z.nrows(),
            z.ncols(),
            w.nrows(),
            w.ncols()
        )));
    }
    let mut xhat = z * &cal.gamma1 + w * &cal.gamma2;
    for mut row in xhat.row_iter_mut() {
        row += cal.gamma0.transpose();
    }
    Ok(xhat)
}

pub fn naive(main: &MainStudyData) -> Result<CorrectedEstimate> {
    Ok(naive_from_fit(fit_naive(main)?))
}

pub fn naive_from_fit(fit: OutcomeSurrogateFit) -> CorrectedEstimate {
    CorrectedEstimate {
        method: Method::Naive,
        beta0: fit.beta0_star,
        beta1: fit.beta1_star,
        beta2: fit.beta2_star,
        vcov: None,
        warnings: Vec::new(),
    }
    .with_vcov(fit.vcov)
}

/// Fits of the three regressions the transportable estimator is built from.
pub fn fit_transport_inputs(
    main: &MainStudyData,
    validation: &ValidationStudyData,
) -> Result<ThetaHat> {
    if main.p() != validation.p() || main.q() != validation.q() {
        return Err(Error::DimensionMismatch(format!(
            "main study has (p, q) = ({}, {}), validation study ({}, {})",
            main.p(),
            main.q(),
            validation.p(),
            validation.q()
        )));
    }
    let error_model = fit_error_model(validation).map_err(|e| at_stage(e, "error model"))?;
    let margin = fit_surrogate_margin(main).map_err(|e| at_stage(e, "surrogate margin"))?;
    let outcome = fit_naive(main).map_err(|e| at_stage(e, "naive outcome fit"))?;
    Ok(ThetaHat {
        outcome,
        margin,
        error_model,
    })
}

fn at_stage(e: Error, stage: &str) -> Error {
    match e {
        Error::RankDeficientDesign { condition } => {
            Error::non_identifiable(stage, "regression design", condition)
        }
        other => other,
    }
}

/// Transportable RC, regression-calibration (prediction) form: predict `X̂`
/// in the main study and regress `Y` on `(1, X̂, W)`.
pub fn transportable_rc_carroll(
    main: &MainStudyData,
    validation: &ValidationStudyData,
) -> Result<CorrectedEstimate> {
    let theta = fit_transport_inputs(main, validation)?;
    let cal = derive_calibration(&theta.error_model, &theta.margin)?;
    let xhat = predict_true_exposures(&cal, main.z(), main.w())?;
    let design = design_with_intercept(&[&xhat, main.w()]);
    let fit = fit_multi_ols(&design, &column_matrix(main.y())).map_err(|e| match e {
        Error::RankDeficientDesign { condition } => {
            Error::non_identifiable("Carroll outcome fit", "design (1, X̂, W)", condition)
        }
        other => other,
    })?;
    let p = main.p();
    let c = fit.coef.column(0);
    let est = CorrectedEstimate {
        method: Method::TransportableRc,
        beta0: c[0],
        beta1: c.rows(1, p).into_owned(),
        beta2: c.rows(1 + p, main.q()).into_owned(),
        vcov: None,
        warnings: cal.warnings,
    };
    let (vcov, _) = variance::transportable_vcov(&theta)?;
    Ok(est.with_vcov(vcov))
}

/// Transportable RC, closed-form (rescaling) form:
/// `β1 = C1Σe⁻¹Bβ1*`, `β0 = β0* − CBβ1*`, `β2 = β2* − DBβ1*` with
/// `B = (Σe⁻¹ − Σz⁻¹)⁻¹`, `C = b0ᵀΣz⁻¹ − c0ᵀΣe⁻¹`, `D = B2Σz⁻¹ − C2Σe⁻¹`.
pub fn transportable_rc_rosner(
    main: &MainStudyData,
    validation: &ValidationStudyData,
) -> Result<CorrectedEstimate> {
    let theta = fit_transport_inputs(main, validation)?;
    transportable_from_theta(&theta)
}

/// Closed-form transportable estimate plus its delta-method covariance from
/// already fitted inputs.
pub fn transportable_from_theta(theta: &ThetaHat) -> Result<CorrectedEstimate> {
    let (beta0, beta1, beta2, warnings) = rosner_point(theta)?;
    let est = CorrectedEstimate {
        method: Method::TransportableRc,
        beta0,
        beta1,
        beta2,
        vcov: None,
        warnings,
    };
    let (vcov, _) = variance::transportable_vcov(theta)?;
    Ok(est.with_vcov(vcov))
}

/// Closed-form correction evaluated at arbitrary fitted parameters. Also the
/// map differentiated by the variance module.
pub fn rosner_point(theta: &ThetaHat) -> Result<(f64, Vector, Vector, Vec<Warning>)> {
    let me = &theta.error_model;
    let sm = &theta.margin;
    let out = &theta.outcome;
    let cal = derive_calibration(me, sm)?;
    Factorized::new(&cal.gamma1, "Rosner correction", "Γ1")?;
    let Precisions { se, sz, .. } = precisions(me, sm)?;
    let gap = Factorized::new(&(&se - &sz), "Rosner correction", "Σe⁻¹ − Σz⁻¹")?;
    let v = gap.solve_vec(&out.beta1_star);
    let beta1 = &me.c1 * (&se * &v);
    // Cᵀ = Σz⁻ᵀb0 − Σe⁻ᵀc0, written out so the map stays the one the
    // variance module differentiates even off the symmetric manifold.
    let c = sz.tr_mul(&sm.b0) - se.tr_mul(&me.c0);
    let d = &sm.b2 * &sz - &me.c2 * &se;
    let beta0 = out.beta0_star - c.dot(&v);
    let beta2 = &out.beta2_star - d * &v;
    Ok((beta0, beta1, beta2, cal.warnings))
}

/// Original regression calibration: regress `X` on `(1, Z, W)` in the
/// validation study and undo the attenuation, `β1 = Γ1⁻¹β1*`. Valid only
/// when `X | W` has the same distribution in both studies.
pub fn original_rc(
    main: &MainStudyData,
    validation: &ValidationStudyData,
) -> Result<CorrectedEstimate> {
    if main.p() != validation.p() || main.q() != validation.q() {
        return Err(Error::DimensionMismatch(
            "main and validation studies disagree on (p, q)".into(),
        ));
    }
    let outcome = fit_naive(main)?;
    original_rc_from_fit(&outcome, validation)
}

/// [`original_rc`] for an outcome fit that is already available.
pub fn original_rc_from_fit(
    outcome: &OutcomeSurrogateFit,
    validation: &ValidationStudyData,
) -> Result<CorrectedEstimate> {
    if outcome.p() != validation.p() || outcome.q() != validation.q() {
        return Err(Error::DimensionMismatch(
            "outcome fit and validation study disagree on (p, q)".into(),
        ));
    }
    let design = design_with_intercept(&[validation.z(), validation.w()]);
    let cal_fit = fit_multi_ols(&design, validation.x())
        .map_err(|e| at_stage(e, "original RC calibration"))?;
    let p = validation.p();
    let gamma0 = cal_fit.coef.row(0).transpose();
    let gamma1 = cal_fit.coef.rows(1, p).into_owned();
    let gamma2 = cal_fit.coef.rows(1 + p, validation.q()).into_owned();
    let g1 = Factorized::new(&gamma1, "original RC correction", "Γ1")?;
    let beta1 = g1.solve_vec(&outcome.beta1_star);
    let beta0 = outcome.beta0_star - gamma0.dot(&beta1);
    let beta2 = &outcome.beta2_star - &gamma2 * &beta1;
    let vcov = variance::original_rc_vcov(outcome, &cal_fit, &g1.inverse(), &beta1);
    Ok(CorrectedEstimate {
        method: Method::OriginalRc,
        beta0,
        beta1,
        beta2,
        vcov: None,
        warnings: Vec::new(),
    }
    .with_vcov(vcov))
}

/// Variance of the estimator obtained by combining the two sources of
/// information about the calibration equation through trial linear
/// operators `(L1, L2)`, minus its value at the optimum
/// `L1 = Γ1Σx⁻¹`, `L2 = Σz⁻¹`:
///
/// `f(L1, L2) = αᵀM⁻¹(L2ΣzL2ᵀ + L1ΣxL1ᵀ)M⁻ᵀα`, `M = L1Γ1ᵀ + L2`.
///
/// Non-negative for every invertible `M`; zero along the ray `l·(optimum)`.
pub fn optimal_operator_gap(
    gamma1: &Matrix,
    sigma_x: &Matrix,
    sigma_z: &Matrix,
    alpha: &Vector,
    trial_l1: &Matrix,
    trial_l2: &Matrix,
) -> Result<f64> {
    let p = alpha.len();
    for (name, m) in [
        ("Γ1", gamma1),
        ("Σx", sigma_x),
        ("Σz", sigma_z),
        ("L1", trial_l1),
        ("L2", trial_l2),
    ] {
        if m.shape() != (p, p) {
            return Err(Error::DimensionMismatch(format!(
                "{name} must be {p}×{p}, got {}×{}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    let l1_opt = gamma1 * Factorized::new(sigma_x, "operator optimum", "Σx")?.inverse();
    let l2_opt = Factorized::new(sigma_z, "operator optimum", "Σz")?.inverse();
    let trial = operator_objective(gamma1, sigma_x, sigma_z, alpha, trial_l1, trial_l2)?;
    let best = operator_objective(gamma1, sigma_x, sigma_z, alpha, &l1_opt, &l2_opt)?;
    Ok(trial - best)
}

/// `f(L1, L2)` from [`optimal_operator_gap`].
pub fn operator_objective(
    gamma1: &Matrix,
    sigma_x: &Matrix,
    sigma_z: &Matrix,
    alpha: &Vector,
    l1: &Matrix,
    l2: &Matrix,
) -> Result<f64> {
    let m = l1 * gamma1.transpose() + l2;
    let mt = Factorized::new(&m.transpose(), "operator", "L1Γ1ᵀ + L2")
        .map_err(|_| Error::SingularOperatorSum)?;
    let u = mt.solve_vec(alpha);
    let middle = l2 * sigma_z * l2.transpose() + l1 * sigma_x * l1.transpose();
    Ok(u.dot(&(middle * &u)))
}
