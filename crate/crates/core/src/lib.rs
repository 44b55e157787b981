//! Transportable regression calibration.
//!
//! Corrects linear-regression coefficients for error in measured exposures
//! when the error model is estimated in an external validation study whose
//! exposure distribution may differ from the main study's. Only the
//! classical-like error model `Z = c0 + C1ᵀX + C2ᵀW + e` has to carry over
//! between studies; the calibration equation `E(X | Z, W)` is rebuilt for the
//! main study from its own surrogate margin.
//!
//! Module map:
//! - [`linalg`]: Kronecker/vec utilities and multi-output least squares.
//! - [`calibration`]: naive, original RC and transportable RC estimators.
//! - [`variance`]: closed-form delta-method covariance for the transportable
//!   estimator (and the classical one for original RC).
//! - [`simulation`]: scenario generators and the Monte Carlo engine.
//! - [`cli`]: config files, CSV ingestion, JSON/table reports.

pub mod calibration;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod simulation;
pub mod variance;

pub use error::{Error, Result};
