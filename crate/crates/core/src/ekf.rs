//! EKF correction step and Mahalanobis gating.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::state::FilterState;

/// Upper quantile of the chi-square distribution with `dof` degrees of
/// freedom at the given confidence.
pub fn chi2_threshold(dof: usize, confidence: f64) -> f64 {
    ChiSquared::new(dof.max(1) as f64)
        .map(|d| d.inverse_cdf(confidence))
        .unwrap_or(f64::INFINITY)
}

/// `H P H^T + sigma^2 I`.
pub fn innovation_covariance(cov: &DMatrix<f64>, h: &DMatrix<f64>, meas_var: f64) -> DMatrix<f64> {
    let mut s = h * cov * h.transpose();
    for i in 0..s.nrows() {
        s[(i, i)] += meas_var;
    }
    s
}

/// Squared Mahalanobis norm of `r` under `s`.
pub fn mahalanobis2(r: &DVector<f64>, s: &DMatrix<f64>) -> Result<f64> {
    let chol = s.clone().cholesky().ok_or(Error::SingularInnovation)?;
    Ok(r.dot(&chol.solve(r)))
}

/// Applies `z - h(x) = r ~ H dx + n`, `n ~ N(0, meas_var I)`, and injects the
/// correction. Returns the applied error-state correction.
pub fn ekf_update(
    state: &mut FilterState,
    h: &DMatrix<f64>,
    r: &DVector<f64>,
    meas_var: f64,
) -> Result<DVector<f64>> {
    let n = state.dim();
    if h.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: h.ncols(),
        });
    }
    if h.nrows() == 0 {
        return Ok(DVector::zeros(n));
    }
    let pht = &state.cov * h.transpose();
    let mut s = h * &pht;
    for i in 0..s.nrows() {
        s[(i, i)] += meas_var;
    }
    let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
    // K^T = S^{-1} (P H^T)^T
    let kt = chol.solve(&pht.transpose());
    let dx = kt.transpose() * r;
    state.cov -= kt.transpose() * pht.transpose();
    state.condition_covariance();
    state.inject(&dx)?;
    Ok(dx)
}
