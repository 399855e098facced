//! Fixed-point-network channel estimation.
//!
//! One iteration is `x ↦ D(LE(x))`: the linear estimator
//! `LE(x) = x + γ·Aᴴ(y − A·x)` enforces consistency with the pilots and `D`
//! is a damped-residual MLP acting on `[Re; Im]`. With `γ ≤ 2/σ_max(A)²` the LE
//! is non-expansive, and `D` is kept `lip_budget`-Lipschitz by projecting its
//! weights after every optimizer step, so the composite is a contraction
//! with a unique fixed point. Training differentiates through the fixed point
//! only (Neumann-series implicit gradients) and retains no iterates.

mod baseline;
mod implicit;
mod io;
mod solver;
mod train;
mod unfolded;

pub use baseline::{dft_basis, estimate_ls, nle_soft_threshold, oamp_soft, SoftThresholdOamp};
pub use implicit::{implicit_backward, neumann_series};
pub use io::{read_fpn, write_fpn};
pub use solver::{solve_fixed_point, solve_with, EstimatorOutput, FixedPointTrace, RESIDUAL_FLOOR};
pub use train::{
    fpn_train_step, train_fpn, train_fpn_from, FpnSample, FpnTrainConfig, FpnTrainReport,
    StepOutcome,
};
pub use unfolded::unfolded_train_step;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::linalg::{sigma_max, stack, unstack, CMat, CVec, RVec};
use crate::measurement::MeasurementSpec;
use crate::nn::{lipschitz_bound, project_lipschitz_in_place, Mlp};

pub const DEFAULT_LIP_BUDGET: f64 = 0.9;
pub const DEFAULT_DAMPING: f64 = 0.5;
pub const DEFAULT_SLOPE: f64 = 0.1;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 64;
pub const DEFAULT_NEUMANN_K: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FpnModel {
    pub denoiser: Mlp,
    pub gamma: f64,
    pub lip_budget: f64,
    pub n: usize,
    pub m: usize,
}

impl FpnModel {
    /// Fresh model with a `2N → hidden… → 2N` denoiser, already projected onto
    /// the contraction budget.
    pub fn init(
        n: usize,
        m: usize,
        hidden: &[usize],
        gamma: f64,
        lip_budget: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::init_with(
            n,
            m,
            hidden,
            gamma,
            lip_budget,
            DEFAULT_DAMPING,
            DEFAULT_SLOPE,
            seed,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn init_with(
        n: usize,
        m: usize,
        hidden: &[usize],
        gamma: f64,
        lip_budget: f64,
        damping: f64,
        slope: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut dims = vec![2 * n];
        dims.extend_from_slice(hidden);
        dims.push(2 * n);
        let denoiser = Mlp::init(&dims, slope, damping, seed)?;
        Self::from_parts(denoiser, gamma, lip_budget, n, m)
    }

    /// Wraps an existing denoiser, projecting it onto the budget.
    pub fn from_parts(
        mut denoiser: Mlp,
        gamma: f64,
        lip_budget: f64,
        n: usize,
        m: usize,
    ) -> Result<Self> {
        if denoiser.input_dim() != 2 * n || denoiser.output_dim() != 2 * n {
            return Err(invalid(format!("denoiser must map {0} → {0} reals", 2 * n)));
        }
        if !(lip_budget > 0.0 && lip_budget < 1.0) {
            return Err(invalid(format!("lip_budget {lip_budget} outside (0, 1)")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("step size must be positive, got {gamma}")));
        }
        let budget = weight_budget(&denoiser, lip_budget)?;
        project_lipschitz_in_place(&mut denoiser, budget)?;
        Ok(Self {
            denoiser,
            gamma,
            lip_budget,
            n,
            m,
        })
    }

    /// Certified Lipschitz constant of the denoiser, `β + (1-β)·Π σ_i`.
    pub fn nle_lipschitz(&self) -> f64 {
        lipschitz_bound(&self.denoiser)
    }

    /// Re-projects the denoiser weights so the certificate holds.
    pub fn enforce_certificate(&mut self) -> Result<()> {
        let budget = weight_budget(&self.denoiser, self.lip_budget)?;
        project_lipschitz_in_place(&mut self.denoiser, budget)
    }

    fn check_dims(&self, spec: &MeasurementSpec) -> Result<()> {
        if spec.n() != self.n || spec.m() != self.m {
            return Err(invalid(format!(
                "model expects {}x{} sensing, got {}x{}",
                self.m,
                self.n,
                spec.m(),
                spec.n()
            )));
        }
        Ok(())
    }
}

/// Budget on the product of weight spectral norms that makes the damped
/// residual network `lip_budget`-Lipschitz.
fn weight_budget(net: &Mlp, lip_budget: f64) -> Result<f64> {
    let beta = net.damping();
    if lip_budget <= beta {
        return Err(invalid(format!(
            "lip_budget {lip_budget} must exceed the residual damping {beta}"
        )));
    }
    Ok((lip_budget - beta) / (1.0 - beta))
}

/// `1/σ_max(A_eff)²`, the default LE step size.
pub fn default_gamma(spec: &MeasurementSpec) -> f64 {
    let s = sigma_max(&spec.effective_sensing());
    1.0 / (s * s)
}

/// Linear estimator bound to one measurement matrix, with the step size
/// validated once.
#[derive(Debug, Clone)]
pub struct LinearStage {
    a: CMat,
    gamma: f64,
}

impl LinearStage {
    pub fn new(spec: &MeasurementSpec, gamma: f64) -> Result<Self> {
        let a = spec.effective_sensing();
        let s = sigma_max(&a);
        let limit = 2.0 / (s * s);
        if !(gamma > 0.0 && gamma < limit) {
            return Err(invalid(format!(
                "step size {gamma} outside (0, {limit:.6}) for this sensing matrix"
            )));
        }
        Ok(Self { a, gamma })
    }

    pub(crate) fn unchecked(spec: &MeasurementSpec, gamma: f64) -> Self {
        Self {
            a: spec.effective_sensing(),
            gamma,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn apply(&self, y: &CVec, x: &CVec) -> CVec {
        let resid = y - &self.a * x;
        x + self.a.ad_mul(&resid) * Complex64::new(self.gamma, 0.0)
    }

    /// `(I - γAᴴA)·u`, the LE Jacobian acting on a complex vector. The matrix is
    /// Hermitian, so this is also its transpose in stacked real coordinates.
    pub fn jacobian_apply(&self, u: &CVec) -> CVec {
        u - self.a.ad_mul(&(&self.a * u)) * Complex64::new(self.gamma, 0.0)
    }

    pub fn jacobian_t_stacked(&self, u: &RVec) -> RVec {
        stack(&self.jacobian_apply(&unstack(u)))
    }
}

/// `x + γ·Aᴴ(y − A·x)`, using the Bussgang-scaled matrix for one-bit specs.
pub fn le_step(spec: &MeasurementSpec, y: &CVec, x: &CVec, gamma: f64) -> Result<CVec> {
    if y.len() != spec.m() || x.len() != spec.n() {
        return Err(invalid(
            "observation or iterate length does not match the sensing matrix",
        ));
    }
    Ok(LinearStage::new(spec, gamma)?.apply(y, x))
}

/// Denoiser applied to a complex vector through its stacked-real form.
pub fn apply_denoiser(net: &Mlp, r: &CVec) -> Result<CVec> {
    Ok(unstack(&net.forward(&stack(r))?))
}

/// One fixed-point iteration `D(LE(x))`.
pub fn fpn_iteration(model: &FpnModel, spec: &MeasurementSpec, y: &CVec, x: &CVec) -> Result<CVec> {
    model.check_dims(spec)?;
    let r = le_step(spec, y, x, model.gamma)?;
    apply_denoiser(&model.denoiser, &r)
}

pub(crate) fn iteration_map<'a>(
    model: &'a FpnModel,
    le: &'a LinearStage,
    y: &'a CVec,
) -> impl FnMut(&CVec) -> Result<CVec> + 'a {
    move |x| apply_denoiser(&model.denoiser, &le.apply(y, x))
}

const NMSE_FLOOR_DB: f64 = -300.0;

/// `10·log10(‖ĥ − h‖² / ‖h‖²)`, floored at -300 dB.
pub fn nmse(h_hat: &CVec, h_true: &CVec) -> Result<f64> {
    if h_hat.len() != h_true.len() {
        return Err(invalid("estimate and truth lengths differ"));
    }
    let denom = h_true.norm_squared();
    if denom == 0.0 {
        return Err(invalid("NMSE undefined for an all-zero reference"));
    }
    let ratio = (h_hat - h_true).norm_squared() / denom;
    Ok((10.0 * ratio.log10()).max(NMSE_FLOOR_DB))
}

/// Linear NMSE ratio, no dB conversion.
pub fn nmse_ratio(h_hat: &CVec, h_true: &CVec) -> f64 {
    (h_hat - h_true).norm_squared() / h_true.norm_squared()
}

pub(crate) fn diverged(iteration: usize) -> Error {
    Error::NumericDivergence { iteration }
}
