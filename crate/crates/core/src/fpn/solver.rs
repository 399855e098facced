use super::{diverged, iteration_map, FpnModel, LinearStage};
use crate::error::{invalid, Result};
use crate::gauge::BufferGauge;
use crate::linalg::CVec;
use crate::measurement::MeasurementSpec;

/// Denominator floor for relative residuals.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointTrace {
    /// `‖x_{t+1} − x_t‖ / max(‖x_t‖, ε)` for every iteration taken.
    pub residuals: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutput {
    pub h_hat: CVec,
    pub trace: FixedPointTrace,
}

/// Plain fixed-point iteration of `map` from `x0`. Only the current and next
/// iterate are alive at any time.
pub fn solve_with<F>(map: F, x0: &CVec, tol: f64, max_iter: usize) -> Result<EstimatorOutput>
where
    F: FnMut(&CVec) -> Result<CVec>,
{
    solve_gauged(map, x0, tol, max_iter, &BufferGauge::new())
}

pub(crate) fn solve_gauged<F>(
    mut map: F,
    x0: &CVec,
    tol: f64,
    max_iter: usize,
    gauge: &BufferGauge,
) -> Result<EstimatorOutput>
where
    F: FnMut(&CVec) -> Result<CVec>,
{
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(invalid("max_iter must be at least 1"));
    }
    let mut residuals = Vec::with_capacity(max_iter.min(1024));
    let mut current = gauge.hold(x0.clone());
    let mut converged = false;
    for t in 0..max_iter {
        let next = gauge.hold(map(&current)?);
        if next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(diverged(t + 1));
        }
        let step = (&*next - &*current).norm();
        let r = step / current.norm().max(RESIDUAL_FLOOR);
        residuals.push(r);
        current = next;
        if r < tol {
            converged = true;
            break;
        }
    }
    Ok(EstimatorOutput {
        h_hat: current.into_inner(),
        trace: FixedPointTrace {
            iterations_used: residuals.len(),
            residuals,
            converged,
        },
    })
}

/// Runs the FPN iteration to its fixed point.
pub fn solve_fixed_point(
    model: &FpnModel,
    spec: &MeasurementSpec,
    y: &CVec,
    x0: &CVec,
    tol: f64,
    max_iter: usize,
) -> Result<EstimatorOutput> {
    model.check_dims(spec)?;
    if y.len() != spec.m() || x0.len() != spec.n() {
        return Err(invalid(
            "observation or initial iterate length does not match the sensing matrix",
        ));
    }
    let le = LinearStage::new(spec, model.gamma)?;
    solve_with(iteration_map(model, &le, y), x0, tol, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use num_complex::Complex64;

    #[test]
    fn affine_contraction() {
        let c = CVec::from_vec(vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.25)]);
        let out = solve_with(
            |x| Ok(x * Complex64::new(0.5, 0.0) + &c),
            &CVec::zeros(2),
            1e-10,
            200,
        )
        .unwrap();
        assert!(out.trace.converged);
        assert!((&out.h_hat - &c * Complex64::new(2.0, 0.0)).norm() < 1e-9);
        // absolute steps halve; relative residuals shrink at least as fast once ‖x‖ grows
        for w in out.trace.residuals.windows(2).skip(1) {
            assert!(w[1] <= 0.5 * w[0] + 1e-15);
        }
    }

    #[test]
    fn single_iteration_budget() {
        let out = solve_with(
            |x| Ok(x * Complex64::new(0.5, 0.0)),
            &CVec::from_element(3, Complex64::new(1.0, 0.0)),
            1e-12,
            1,
        )
        .unwrap();
        assert_eq!(out.trace.iterations_used, 1);
        assert_eq!(out.trace.residuals.len(), 1);
        assert!(!out.trace.converged);
    }

    #[test]
    fn divergence_reported() {
        let err = solve_with(
            |x| Ok(x * Complex64::new(1e200, 0.0)),
            &CVec::from_element(1, Complex64::new(1e200, 0.0)),
            1e-6,
            10,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NumericDivergence { iteration: 1 }));
    }

    #[test]
    fn argument_checks() {
        let id = |x: &CVec| Ok(x.clone());
        assert!(solve_with(id, &CVec::zeros(1), 0.0, 5).is_err());
        assert!(solve_with(id, &CVec::zeros(1), 1e-3, 0).is_err());
    }
}
