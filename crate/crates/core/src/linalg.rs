//! Small dense helpers shared by the estimators and beamformers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;
pub type RVec = DVector<f64>;
pub type RMat = DMatrix<f64>;

/// Complex vector as `[Re; Im]`.
pub fn stack(v: &CVec) -> RVec {
    let n = v.len();
    RVec::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Inverse of [`stack`].
pub fn unstack(v: &RVec) -> CVec {
    let n = v.len() / 2;
    CVec::from_fn(n, |i, _| Complex64::new(v[i], v[i + n]))
}

/// Circularly-symmetric complex normal sample with unit total variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Largest singular value, computed exactly.
pub fn sigma_max(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Eigenvalue-ratio condition number of a Hermitian positive semidefinite matrix.
pub fn hermitian_condition(g: &CMat) -> f64 {
    let eig = g.clone().symmetric_eigenvalues();
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverts a Hermitian positive definite Gram matrix after a condition check.
pub fn inverse_gram(g: &CMat, limit: f64) -> Result<CMat> {
    let condition = hermitian_condition(g);
    if !condition.is_finite() || condition > limit {
        return Err(Error::IllConditioned { condition, limit });
    }
    g.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::IllConditioned {
            condition: f64::INFINITY,
            limit,
        })
}

pub fn norm_sq(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}
