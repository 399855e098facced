//! Classical estimators used as references for the learned fixed point.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::solver::{solve_with, EstimatorOutput};
use super::LinearStage;
use crate::error::{invalid, Result};
use crate::linalg::{inverse_gram, CMat, CVec};
use crate::measurement::MeasurementSpec;

/// Condition-number limit for `A·Aᴴ` in the least-squares estimator.
pub const LS_CONDITION_LIMIT: f64 = 1e12;

/// Minimum-norm least squares `Aᴴ(AAᴴ)⁻¹y`.
pub fn estimate_ls(spec: &MeasurementSpec, y: &CVec) -> Result<CVec> {
    if y.len() != spec.m() {
        return Err(invalid(format!(
            "observation has length {}, expected {}",
            y.len(),
            spec.m()
        )));
    }
    let a = spec.effective_sensing();
    let gram = &a * a.adjoint();
    let inv = inverse_gram(&gram, LS_CONDITION_LIMIT)?;
    Ok(a.ad_mul(&(inv * y)))
}

/// Elementwise complex soft threshold `r·max(1 − λ/|r|, 0)`.
pub fn nle_soft_threshold(r: &CVec, lambda: f64) -> CVec {
    r.map(|z| {
        let mag = z.norm();
        if mag <= lambda || mag == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            z * (1.0 - lambda / mag)
        }
    })
}

/// Unitary DFT matrix `F[k, n] = e^{-j2πkn/N}/√N`, the angular-domain basis
/// of a half-wavelength ULA.
pub fn dft_basis(n: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |k, i| {
        Complex64::from_polar(scale, -2.0 * PI * (k * i % n) as f64 / n as f64)
    })
}

/// Iterative soft thresholding in the angular domain with the same linear
/// stage as the learned estimator: `x ↦ Fᴴ·soft(F·LE(x), λ)`.
#[derive(Debug, Clone)]
pub struct SoftThresholdOamp {
    pub lambda: f64,
    pub gamma: f64,
    basis: CMat,
}

impl SoftThresholdOamp {
    pub fn new(n: usize, lambda: f64, gamma: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(invalid(format!(
                "threshold must be non-negative, got {lambda}"
            )));
        }
        Ok(Self {
            lambda,
            gamma,
            basis: dft_basis(n),
        })
    }

    pub fn estimate(
        &self,
        spec: &MeasurementSpec,
        y: &CVec,
        tol: f64,
        max_iter: usize,
    ) -> Result<EstimatorOutput> {
        if spec.n() != self.basis.nrows() || y.len() != spec.m() {
            return Err(invalid(
                "dimension mismatch between baseline, sensing matrix and observation",
            ));
        }
        let le = LinearStage::new(spec, self.gamma)?;
        let map = |x: &CVec| {
            let coeffs = &self.basis * le.apply(y, x);
            Ok(self.basis.ad_mul(&nle_soft_threshold(&coeffs, self.lambda)))
        };
        solve_with(map, &CVec::zeros(spec.n()), tol, max_iter)
    }
}

/// Convenience wrapper around [`SoftThresholdOamp`].
pub fn oamp_soft(
    spec: &MeasurementSpec,
    y: &CVec,
    lambda: f64,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<EstimatorOutput> {
    SoftThresholdOamp::new(spec.n(), lambda, gamma)?.estimate(spec, y, tol, max_iter)
}
