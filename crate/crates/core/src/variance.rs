//! Delta-method covariance of the transportable estimator.
//!
//! The closed form `h(θ) = (β0* − CBβ1*, ABβ1*, β2* − DBβ1*)` with
//! `A = C1Σe⁻¹`, `B = (Σe⁻¹ − Σz⁻¹)⁻¹`, `C = b0ᵀΣz⁻¹ − c0ᵀΣe⁻¹`,
//! `D = B2Σz⁻¹ − C2Σe⁻¹` is differentiated block by block. Derivatives use
//! the denominator layout: `∂y/∂x` has one row per element of `vec(x)` and
//! one column per element of `vec(y)`, so `var(y) ≈ ∂yᵀ/∂x var(x) ∂y/∂x`.
//! With `dY = P dX Q`, `∂vec(Y)/∂vec(X) = Q ⊗ Pᵀ`.
//!
//! Covariances of the inputs come straight from the three fits, so they are
//! already on the `1/n` scale; main- and validation-study estimates are
//! independent, coefficients are independent of residual covariances, and
//! `β̂*` is asymptotically uncorrelated with `(b̂0, B̂2, Σ̂z)`.

use std::ops::Range;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::calibration::{
    precisions, CorrectedEstimate, MeasurementErrorModel, OutcomeSurrogateFit, Precisions,
    SurrogateMarginModel,
};
use crate::linalg::{commutation_matrix, kron, symmetrize, Factorized, Matrix, MultiOutputFit, Vector};
use crate::{Error, Result};

const STAGE: &str = "variance";

/// Every fitted quantity the transportable estimator depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaHat {
    pub outcome: OutcomeSurrogateFit,
    pub margin: SurrogateMarginModel,
    pub error_model: MeasurementErrorModel,
}

/// Position of each parameter block inside the flattened `θ`:
/// `β0*, β1*, β2*, b0, vec(B2ᵀ), vec(Σz), c0, vec(C1ᵀ), vec(C2ᵀ), vec(Σe)`.
/// The first six blocks come from the main study, the rest from validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterLayout {
    pub p: usize,
    pub q: usize,
}

impl ParameterLayout {
    pub fn beta0_star(&self) -> Range<usize> {
        0..1
    }
    pub fn beta1_star(&self) -> Range<usize> {
        1..1 + self.p
    }
    pub fn beta2_star(&self) -> Range<usize> {
        let s = 1 + self.p;
        s..s + self.q
    }
    pub fn b0(&self) -> Range<usize> {
        let s = 1 + self.p + self.q;
        s..s + self.p
    }
    pub fn b2t(&self) -> Range<usize> {
        let s = self.b0().end;
        s..s + self.p * self.q
    }
    pub fn sigma_z(&self) -> Range<usize> {
        let s = self.b2t().end;
        s..s + self.p * self.p
    }
    pub fn c0(&self) -> Range<usize> {
        let s = self.sigma_z().end;
        s..s + self.p
    }
    pub fn c1t(&self) -> Range<usize> {
        let s = self.c0().end;
        s..s + self.p * self.p
    }
    pub fn c2t(&self) -> Range<usize> {
        let s = self.c1t().end;
        s..s + self.p * self.q
    }
    pub fn sigma_e(&self) -> Range<usize> {
        let s = self.c2t().end;
        s..s + self.p * self.p
    }
    /// Main-study parameters occupy `0..main_len()`.
    pub fn main_len(&self) -> usize {
        self.sigma_z().end
    }
    pub fn len(&self) -> usize {
        self.sigma_e().end
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Indices into `vec([b0ᵀ; B2])` for the `[b0; vec(B2ᵀ)]` ordering.
    fn margin_coef_order(&self) -> Vec<usize> {
        let (p, q) = (self.p, self.q);
        let rows = 1 + q;
        let mut idx: Vec<usize> = (0..p).map(|j| j * rows).collect();
        for b in 0..q {
            for j in 0..p {
                idx.push(1 + b + j * rows);
            }
        }
        idx
    }

    /// Indices into `vec([c0ᵀ; C1; C2])` for the `[c0; vec(C1ᵀ); vec(C2ᵀ)]` ordering.
    fn error_coef_order(&self) -> Vec<usize> {
        let (p, q) = (self.p, self.q);
        let rows = 1 + p + q;
        let mut idx: Vec<usize> = (0..p).map(|j| j * rows).collect();
        for a in 0..p {
            for j in 0..p {
                idx.push(1 + a + j * rows);
            }
        }
        for b in 0..q {
            for j in 0..p {
                idx.push(1 + p + b + j * rows);
            }
        }
        idx
    }
}

fn reorder(a: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

impl ThetaHat {
    pub fn p(&self) -> usize {
        self.outcome.p()
    }
    pub fn q(&self) -> usize {
        self.outcome.q()
    }
    pub fn n_main(&self) -> usize {
        self.outcome.n
    }
    pub fn n_validation(&self) -> usize {
        self.error_model.n
    }
    pub fn layout(&self) -> ParameterLayout {
        ParameterLayout {
            p: self.p(),
            q: self.q(),
        }
    }

    /// Flattened `θ` in [`ParameterLayout`] order.
    pub fn parameter_vector(&self) -> Vector {
        let l = self.layout();
        let mut t = Vector::zeros(l.len());
        let mut put = |r: Range<usize>, src: &[f64]| t.rows_mut(r.start, r.len()).copy_from_slice(src);
        put(l.beta0_star(), &[self.outcome.beta0_star]);
        put(l.beta1_star(), self.outcome.beta1_star.as_slice());
        put(l.beta2_star(), self.outcome.beta2_star.as_slice());
        put(l.b0(), self.margin.b0.as_slice());
        put(l.b2t(), self.margin.b2.transpose().as_slice());
        put(l.sigma_z(), self.margin.sigma_z.as_slice());
        put(l.c0(), self.error_model.c0.as_slice());
        put(l.c1t(), self.error_model.c1.transpose().as_slice());
        put(l.c2t(), self.error_model.c2.transpose().as_slice());
        put(l.sigma_e(), self.error_model.sigma_e.as_slice());
        t
    }

    /// Copy of `self` with point values replaced by `theta`; covariances kept.
    pub fn with_parameters(&self, theta: &Vector) -> ThetaHat {
        let l = self.layout();
        assert_eq!(theta.len(), l.len(), "parameter vector has the wrong length");
        let (p, q) = (l.p, l.q);
        let seg = |r: Range<usize>| theta.rows(r.start, r.len()).into_owned();
        let mat = |r: Range<usize>, rows, cols| Matrix::from_column_slice(rows, cols, seg(r).as_slice());
        let mut out = self.clone();
        out.outcome.beta0_star = theta[0];
        out.outcome.beta1_star = seg(l.beta1_star());
        out.outcome.beta2_star = seg(l.beta2_star());
        out.margin.b0 = seg(l.b0());
        out.margin.b2 = mat(l.b2t(), p, q).transpose();
        out.margin.sigma_z = mat(l.sigma_z(), p, p);
        out.error_model.c0 = seg(l.c0());
        out.error_model.c1 = mat(l.c1t(), p, p).transpose();
        out.error_model.c2 = mat(l.c2t(), p, q).transpose();
        out.error_model.sigma_e = mat(l.sigma_e(), p, p);
        out
    }

    /// Block-diagonal covariance of `θ̂` in [`ParameterLayout`] order.
    pub fn parameter_covariance(&self) -> Matrix {
        self.weighted_covariance(1.0, 1.0)
    }

    fn weighted_covariance(&self, main: f64, validation: f64) -> Matrix {
        let l = self.layout();
        let mut s = Matrix::zeros(l.len(), l.len());
        let mut put = |r: Range<usize>, block: Matrix| {
            s.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(&block);
        };
        put(0..1 + l.p + l.q, &self.outcome.vcov * main);
        put(
            l.b0().start..l.b2t().end,
            reorder(&self.margin.vcov_coeffs, &l.margin_coef_order()) * main,
        );
        put(l.sigma_z(), &self.margin.vcov_sigma_z * main);
        put(
            l.c0().start..l.c2t().end,
            reorder(&self.error_model.vcov_coeffs, &l.error_coef_order()) * validation,
        );
        put(l.sigma_e(), &self.error_model.vcov_sigma_e * validation);
        s
    }
}

/// Intermediates and every derivative block of the closed-form map.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBlocks {
    /// `C1Σe⁻¹`
    pub a: Matrix,
    /// `(Σe⁻¹ − Σz⁻¹)⁻¹`
    pub b: Matrix,
    /// `b0ᵀΣz⁻¹ − c0ᵀΣe⁻¹`, `1 × p`
    pub c: Matrix,
    /// `B2Σz⁻¹ − C2Σe⁻¹`, `q × p`
    pub d: Matrix,
    pub sigma_e_inv: Matrix,
    pub sigma_z_inv: Matrix,

    pub d_a_d_c1t: Matrix,
    pub d_a_d_sigma_e: Matrix,
    pub d_b_d_sigma_e: Matrix,
    pub d_b_d_sigma_z: Matrix,
    pub d_c_d_c0: Matrix,
    pub d_c_d_b0: Matrix,
    pub d_c_d_sigma_e: Matrix,
    pub d_c_d_sigma_z: Matrix,
    pub d_d_d_c2t: Matrix,
    pub d_d_d_b2t: Matrix,
    pub d_d_d_sigma_e: Matrix,
    pub d_d_d_sigma_z: Matrix,

    /// `p × p`
    pub d_beta1_d_beta1_star: Matrix,
    /// `p² × p`
    pub d_beta1_d_c1t: Matrix,
    pub d_beta1_d_sigma_e: Matrix,
    pub d_beta1_d_sigma_z: Matrix,

    /// Intercept path `u = CBβ1*` (scalar output, so `· × 1`).
    pub d_cb_d_beta1_star: Matrix,
    pub d_cb_d_c0: Matrix,
    pub d_cb_d_b0: Matrix,
    pub d_cb_d_sigma_e: Matrix,
    pub d_cb_d_sigma_z: Matrix,

    /// Confounder path `t = DBβ1*` (`· × q`).
    pub d_db_d_beta1_star: Matrix,
    pub d_db_d_c2t: Matrix,
    pub d_db_d_b2t: Matrix,
    pub d_db_d_sigma_e: Matrix,
    pub d_db_d_sigma_z: Matrix,
}

fn col(v: &Vector) -> Matrix {
    Matrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// All derivative blocks of the closed-form correction at `theta`.
pub fn derivative_blocks(theta: &ThetaHat) -> Result<DerivativeBlocks> {
    let me = &theta.error_model;
    let sm = &theta.margin;
    let beta1_star = col(&theta.outcome.beta1_star);
    let p = theta.p();
    let q = theta.q();
    let Precisions { se, sz, .. } = precisions(me, sm)?;
    Factorized::new(&(&se * me.c1.transpose()), STAGE, "Σe⁻¹C1ᵀ")?;
    let b = Factorized::new(&(&se - &sz), STAGE, "Σe⁻¹ − Σz⁻¹")?.inverse();
    let a = &me.c1 * &se;
    let c = col(&sm.b0).transpose() * &sz - col(&me.c0).transpose() * &se;
    let d = &sm.b2 * &sz - &me.c2 * &se;

    let ip = Matrix::identity(p, p);
    let iq = Matrix::identity(q, q);
    let kpp = commutation_matrix(p, p);
    let kqp = commutation_matrix(q, p);
    let v = &b * &beta1_star; // Bβ1*, p × 1

    let d_a_d_c1t = &kpp * kron(&se, &ip);
    let d_a_d_sigma_e = -kron(&se, &(&se * me.c1.transpose()));
    let d_b_d_sigma_e = kron(&(&se * &b), &(&se * b.transpose()));
    let d_b_d_sigma_z = -kron(&(&sz * &b), &(&sz * b.transpose()));
    let d_c_d_c0 = -se.clone();
    let d_c_d_b0 = sz.clone();
    let d_c_d_sigma_e = kron(&se, &(&se * col(&me.c0)));
    let d_c_d_sigma_z = -kron(&sz, &(&sz * col(&sm.b0)));
    let d_d_d_c2t = -(&kqp * kron(&se, &iq));
    let d_d_d_b2t = &kqp * kron(&sz, &iq);
    let d_d_d_sigma_e = kron(&se, &(&se * me.c2.transpose()));
    let d_d_d_sigma_z = -kron(&sz, &(&sz * sm.b2.transpose()));

    // Outer derivatives with respect to the intermediates.
    let d_beta1_d_a = kron(&v, &ip);
    let d_beta1_d_b = kron(&beta1_star, &a.transpose());
    let d_cb_d_c = v.clone();
    let d_cb_d_b = kron(&beta1_star, &c.transpose());
    let d_db_d_d = kron(&v, &iq);
    let d_db_d_b = kron(&beta1_star, &d.transpose());

    Ok(DerivativeBlocks {
        d_beta1_d_beta1_star: b.transpose() * a.transpose(),
        d_beta1_d_c1t: &d_a_d_c1t * &d_beta1_d_a,
        d_beta1_d_sigma_e: &d_a_d_sigma_e * &d_beta1_d_a + &d_b_d_sigma_e * &d_beta1_d_b,
        d_beta1_d_sigma_z: &d_b_d_sigma_z * &d_beta1_d_b,

        d_cb_d_beta1_star: b.transpose() * c.transpose(),
        d_cb_d_c0: &d_c_d_c0 * &d_cb_d_c,
        d_cb_d_b0: &d_c_d_b0 * &d_cb_d_c,
        d_cb_d_sigma_e: &d_c_d_sigma_e * &d_cb_d_c + &d_b_d_sigma_e * &d_cb_d_b,
        d_cb_d_sigma_z: &d_c_d_sigma_z * &d_cb_d_c + &d_b_d_sigma_z * &d_cb_d_b,

        d_db_d_beta1_star: b.transpose() * d.transpose(),
        d_db_d_c2t: &d_d_d_c2t * &d_db_d_d,
        d_db_d_b2t: &d_d_d_b2t * &d_db_d_d,
        d_db_d_sigma_e: &d_d_d_sigma_e * &d_db_d_d + &d_b_d_sigma_e * &d_db_d_b,
        d_db_d_sigma_z: &d_d_d_sigma_z * &d_db_d_d + &d_b_d_sigma_z * &d_db_d_b,

        a,
        b,
        c,
        d,
        sigma_e_inv: se,
        sigma_z_inv: sz,
        d_a_d_c1t,
        d_a_d_sigma_e,
        d_b_d_sigma_e,
        d_b_d_sigma_z,
        d_c_d_c0,
        d_c_d_b0,
        d_c_d_sigma_e,
        d_c_d_sigma_z,
        d_d_d_c2t,
        d_d_d_b2t,
        d_d_d_sigma_e,
        d_d_d_sigma_z,
    })
}

impl DerivativeBlocks {
    pub fn p(&self) -> usize {
        self.a.nrows()
    }
    pub fn q(&self) -> usize {
        self.d.nrows()
    }

    /// Full `∂h/∂θ` (`len(θ) × (1+p+q)`) in [`ParameterLayout`] order.
    pub fn jacobian(&self) -> Matrix {
        let l = ParameterLayout {
            p: self.p(),
            q: self.q(),
        };
        let (p, q) = (l.p, l.q);
        let mut j = Matrix::zeros(l.len(), 1 + p + q);
        let mut put = |rows: Range<usize>, cols: Range<usize>, block: &Matrix| {
            j.view_mut((rows.start, cols.start), (rows.len(), cols.len())).copy_from(block);
        };
        let b0c = 0..1;
        let b1c = 1..1 + p;
        let b2c = 1 + p..1 + p + q;
        put(l.beta0_star(), b0c.clone(), &Matrix::identity(1, 1));
        put(l.beta2_star(), b2c.clone(), &Matrix::identity(q, q));

        put(l.beta1_star(), b0c.clone(), &-&self.d_cb_d_beta1_star);
        put(l.c0(), b0c.clone(), &-&self.d_cb_d_c0);
        put(l.b0(), b0c.clone(), &-&self.d_cb_d_b0);
        put(l.sigma_e(), b0c.clone(), &-&self.d_cb_d_sigma_e);
        put(l.sigma_z(), b0c, &-&self.d_cb_d_sigma_z);

        put(l.beta1_star(), b1c.clone(), &self.d_beta1_d_beta1_star);
        put(l.c1t(), b1c.clone(), &self.d_beta1_d_c1t);
        put(l.sigma_e(), b1c.clone(), &self.d_beta1_d_sigma_e);
        put(l.sigma_z(), b1c, &self.d_beta1_d_sigma_z);

        put(l.beta1_star(), b2c.clone(), &-&self.d_db_d_beta1_star);
        put(l.c2t(), b2c.clone(), &-&self.d_db_d_c2t);
        put(l.b2t(), b2c.clone(), &-&self.d_db_d_b2t);
        put(l.sigma_e(), b2c.clone(), &-&self.d_db_d_sigma_e);
        put(l.sigma_z(), b2c, &-&self.d_db_d_sigma_z);
        j
    }
}

/// `aᵀ v b`
fn quad(a: &Matrix, v: &Matrix, b: &Matrix) -> Matrix {
    a.transpose() * v * b
}

fn block(s: &Matrix, r: Range<usize>, c: Range<usize>) -> Matrix {
    s.view((r.start, c.start), (r.len(), c.len())).into_owned()
}

/// Covariance of `(β̂0, β̂1, β̂2)` assembled term by term from the
/// derivative blocks and the fitted covariances.
pub fn assemble_vcov(theta: &ThetaHat, blocks: &DerivativeBlocks) -> Result<Matrix> {
    assemble_weighted(theta, blocks, 1.0, 1.0)
}

/// The two additive pieces of [`assemble_vcov`]: what comes from main-study
/// sampling variability and what comes from the validation study.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceParts {
    pub main: Matrix,
    pub validation: Matrix,
}

pub fn assemble_vcov_parts(theta: &ThetaHat, blocks: &DerivativeBlocks) -> Result<VarianceParts> {
    Ok(VarianceParts {
        main: assemble_weighted(theta, blocks, 1.0, 0.0)?,
        validation: assemble_weighted(theta, blocks, 0.0, 1.0)?,
    })
}

fn assemble_weighted(
    theta: &ThetaHat,
    k: &DerivativeBlocks,
    main: f64,
    validation: f64,
) -> Result<Matrix> {
    let l = theta.layout();
    if k.p() != l.p || k.q() != l.q {
        return Err(Error::DimensionMismatch(
            "derivative blocks were computed for different (p, q)".into(),
        ));
    }
    let s = theta.weighted_covariance(main, validation);
    let v = |r: Range<usize>, c: Range<usize>| block(&s, r, c);

    let v00 = v(l.beta0_star(), l.beta0_star());
    let v01 = v(l.beta0_star(), l.beta1_star());
    let v02 = v(l.beta0_star(), l.beta2_star());
    let v11 = v(l.beta1_star(), l.beta1_star());
    let v12 = v(l.beta1_star(), l.beta2_star());
    let v22 = v(l.beta2_star(), l.beta2_star());
    let v_b0 = v(l.b0(), l.b0());
    let v_b2 = v(l.b2t(), l.b2t());
    let v_b0b2 = v(l.b0(), l.b2t());
    let v_sz = v(l.sigma_z(), l.sigma_z());
    let v_c0 = v(l.c0(), l.c0());
    let v_c1 = v(l.c1t(), l.c1t());
    let v_c2 = v(l.c2t(), l.c2t());
    let v_c0c1 = v(l.c0(), l.c1t());
    let v_c0c2 = v(l.c0(), l.c2t());
    let v_c1c2 = v(l.c1t(), l.c2t());
    let v_se = v(l.sigma_e(), l.sigma_e());

    let g = &k.d_cb_d_beta1_star;
    let h = &k.d_db_d_beta1_star;
    let gs = &k.d_beta1_d_beta1_star;

    let var0 = &v00 - (&v01 * g) * 2.0
        + quad(g, &v11, g)
        + quad(&k.d_cb_d_c0, &v_c0, &k.d_cb_d_c0)
        + quad(&k.d_cb_d_sigma_e, &v_se, &k.d_cb_d_sigma_e)
        + quad(&k.d_cb_d_sigma_z, &v_sz, &k.d_cb_d_sigma_z)
        + quad(&k.d_cb_d_b0, &v_b0, &k.d_cb_d_b0);

    let var1 = quad(gs, &v11, gs)
        + quad(&k.d_beta1_d_c1t, &v_c1, &k.d_beta1_d_c1t)
        + quad(&k.d_beta1_d_sigma_e, &v_se, &k.d_beta1_d_sigma_e)
        + quad(&k.d_beta1_d_sigma_z, &v_sz, &k.d_beta1_d_sigma_z);

    let cross2 = h.transpose() * &v12;
    let var2 = &v22 - &cross2 - cross2.transpose()
        + quad(h, &v11, h)
        + quad(&k.d_db_d_c2t, &v_c2, &k.d_db_d_c2t)
        + quad(&k.d_db_d_sigma_e, &v_se, &k.d_db_d_sigma_e)
        + quad(&k.d_db_d_sigma_z, &v_sz, &k.d_db_d_sigma_z)
        + quad(&k.d_db_d_b2t, &v_b2, &k.d_db_d_b2t);

    let cov01 = &v01 * gs
        - quad(g, &v11, gs)
        - quad(&k.d_cb_d_c0, &v_c0c1, &k.d_beta1_d_c1t)
        - quad(&k.d_cb_d_sigma_e, &v_se, &k.d_beta1_d_sigma_e)
        - quad(&k.d_cb_d_sigma_z, &v_sz, &k.d_beta1_d_sigma_z);

    let cov02 = &v02 - g.transpose() * &v12 - &v01 * h
        + quad(g, &v11, h)
        + quad(&k.d_cb_d_c0, &v_c0c2, &k.d_db_d_c2t)
        + quad(&k.d_cb_d_b0, &v_b0b2, &k.d_db_d_b2t)
        + quad(&k.d_cb_d_sigma_e, &v_se, &k.d_db_d_sigma_e)
        + quad(&k.d_cb_d_sigma_z, &v_sz, &k.d_db_d_sigma_z);

    let cov12 = gs.transpose() * &v12
        - quad(gs, &v11, h)
        - quad(&k.d_beta1_d_c1t, &v_c1c2, &k.d_db_d_c2t)
        - quad(&k.d_beta1_d_sigma_e, &v_se, &k.d_db_d_sigma_e)
        - quad(&k.d_beta1_d_sigma_z, &v_sz, &k.d_db_d_sigma_z);

    let (p, q) = (l.p, l.q);
    let mut out = Matrix::zeros(1 + p + q, 1 + p + q);
    out[(0, 0)] = var0[(0, 0)];
    out.view_mut((1, 1), (p, p)).copy_from(&var1);
    out.view_mut((1 + p, 1 + p), (q, q)).copy_from(&var2);
    out.view_mut((0, 1), (1, p)).copy_from(&cov01);
    out.view_mut((1, 0), (p, 1)).copy_from(&cov01.transpose());
    out.view_mut((0, 1 + p), (1, q)).copy_from(&cov02);
    out.view_mut((1 + p, 0), (q, 1)).copy_from(&cov02.transpose());
    out.view_mut((1, 1 + p), (p, q)).copy_from(&cov12);
    out.view_mut((1 + p, 1), (q, p)).copy_from(&cov12.transpose());
    Ok(symmetrize(&out))
}

/// Derivative blocks plus assembled covariance in one call.
pub fn transportable_vcov(theta: &ThetaHat) -> Result<(Matrix, DerivativeBlocks)> {
    let blocks = derivative_blocks(theta)?;
    let vcov = assemble_vcov(theta, &blocks)?;
    Ok((vcov, blocks))
}

/// Classical delta-method covariance for `β1 = Γ1⁻¹β1*`,
/// `β0 = β0* − γ0ᵀβ1`, `β2 = β2* − Γ2β1`, with `Γ` from the validation-study
/// regression of `X` on `(1, Z, W)` (independent of the outcome fit).
pub fn original_rc_vcov(
    outcome: &OutcomeSurrogateFit,
    calibration_fit: &MultiOutputFit,
    gamma1_inv: &Matrix,
    beta1: &Vector,
) -> Matrix {
    let p = outcome.p();
    let q = outcome.q();
    let r = 1 + p + q;
    let coef = &calibration_fit.coef;
    let gamma0 = coef.row(0).transpose();
    let gamma2 = coef.rows(1 + p, q).into_owned();
    let n_out = 1 + p + q;
    let n_cal = r * p;
    // Numerator layout here: rows are outputs, columns are parameters.
    let mut jac = Matrix::zeros(n_out, n_out + n_cal);
    jac[(0, 0)] = 1.0;
    for b in 0..q {
        jac[(1 + p + b, 1 + p + b)] = 1.0;
    }
    for i in 0..p {
        let gi = gamma1_inv.column(i);
        let col = 1 + i;
        jac.view_mut((1, col), (p, 1)).copy_from(&gi);
        jac[(0, col)] = -gamma0.dot(&gi);
        jac.view_mut((1 + p, col), (q, 1)).copy_from(&(-&gamma2 * gi));
    }
    for j in 0..p {
        let sj = beta1[j];
        // γ0_j
        jac[(0, n_out + j * r)] = -sj;
        for a in 0..p {
            let c = n_out + 1 + a + j * r;
            let ga = gamma1_inv.column(a) * sj;
            jac.view_mut((1, c), (p, 1)).copy_from(&(-&ga));
            jac[(0, c)] = gamma0.dot(&ga);
            jac.view_mut((1 + p, c), (q, 1)).copy_from(&(&gamma2 * &ga));
        }
        for b in 0..q {
            jac[(1 + p + b, n_out + 1 + p + b + j * r)] = -sj;
        }
    }
    let mut sigma = Matrix::zeros(n_out + n_cal, n_out + n_cal);
    sigma.view_mut((0, 0), (n_out, n_out)).copy_from(&outcome.vcov);
    sigma
        .view_mut((n_out, n_out), (n_cal, n_cal))
        .copy_from(&calibration_fit.coef_vcov);
    symmetrize(&(&jac * sigma * jac.transpose()))
}

/// Normal-theory interval for one coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is valid")
}

/// Two-sided critical value `z_{(1+level)/2}`.
pub fn critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    Ok(standard_normal().inverse_cdf((1.0 + level) / 2.0))
}

/// `estimate ± z·SE` for every coefficient in `(β0, β1, β2)` order.
pub fn confidence_intervals(estimate: &CorrectedEstimate, level: f64) -> Result<Vec<Interval>> {
    let z = critical_value(level)?;
    let se = estimate.standard_errors().ok_or(Error::MissingVariance)?;
    Ok(estimate
        .coefficients()
        .iter()
        .zip(se.iter())
        .map(|(&b, &s)| Interval {
            estimate: b,
            se: s,
            lower: b - z * s,
            upper: b + z * s,
        })
        .collect())
}

/// Two-sided Wald p-values against a standard normal reference.
pub fn p_values(estimate: &CorrectedEstimate) -> Result<Vector> {
    let se = estimate.standard_errors().ok_or(Error::MissingVariance)?;
    let n = standard_normal();
    Ok(estimate.coefficients().zip_map(&se, |b, s| {
        if s > 0.0 {
            2.0 * n.sf((b / s).abs())
        } else if b == 0.0 {
            1.0
        } else {
            0.0
        }
    }))
}
