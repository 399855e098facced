//! Implicit differentiation at the fixed point.
//!
//! For `x* = f(x*, θ)` the loss gradient is `(∂f/∂θ)ᵀ (I − Jᵀ)⁻¹ g` with
//! `J = ∂f/∂x` at `x*`. The inverse is replaced by the truncated Neumann
//! series `Σ_{k=0..K} (Jᵀ)^k g`, evaluated with VJPs only. `K = 0` is the
//! Jacobian-free one-step gradient.

use super::{EstimatorOutput, FpnModel, LinearStage};
use crate::error::{invalid, Error, Result};
use crate::gauge::BufferGauge;
use crate::linalg::{stack, CVec, RVec};
use crate::measurement::MeasurementSpec;
use crate::nn::GradBundle;

/// `Σ_{k=0..terms} (Jᵀ)^k g` where `jt` applies `Jᵀ`.
pub fn neumann_series<F>(jt: F, g: &RVec, terms: usize) -> Result<RVec>
where
    F: FnMut(&RVec) -> Result<RVec>,
{
    neumann_gauged(jt, g, terms, &BufferGauge::new())
}

fn neumann_gauged<F>(mut jt: F, g: &RVec, terms: usize, gauge: &BufferGauge) -> Result<RVec>
where
    F: FnMut(&RVec) -> Result<RVec>,
{
    let mut sum = gauge.hold(g.clone());
    let mut term = gauge.hold(g.clone());
    for _ in 0..terms {
        let next = jt(&term)?;
        *term = next;
        *sum += &*term;
    }
    Ok(sum.into_inner())
}

/// Parameter gradients of a loss evaluated at the fixed point `fixed.h_hat`.
/// `loss_grad` is the loss gradient with respect to the stacked `[Re; Im]`
/// fixed point. The returned `input` field holds the gradient at the
/// denoiser input.
pub fn implicit_backward(
    model: &FpnModel,
    spec: &MeasurementSpec,
    y: &CVec,
    fixed: &EstimatorOutput,
    loss_grad: &RVec,
    neumann_k: usize,
) -> Result<GradBundle> {
    if !fixed.trace.converged {
        return Err(Error::InvalidState(
            "implicit gradients need a converged fixed point".into(),
        ));
    }
    model.check_dims(spec)?;
    if loss_grad.len() != 2 * model.n {
        return Err(invalid(format!(
            "loss gradient must have {} entries",
            2 * model.n
        )));
    }
    let le = LinearStage::new(spec, model.gamma)?;
    implicit_grads(
        model,
        &le,
        y,
        &fixed.h_hat,
        loss_grad,
        neumann_k,
        &BufferGauge::new(),
    )
}

pub(crate) fn implicit_grads(
    model: &FpnModel,
    le: &LinearStage,
    y: &CVec,
    x_star: &CVec,
    loss_grad: &RVec,
    neumann_k: usize,
    gauge: &BufferGauge,
) -> Result<GradBundle> {
    let r_star = stack(&le.apply(y, x_star));
    let lin = model.denoiser.linearize(&r_star)?;
    // Jᵀ = J_LEᵀ · J_Dᵀ
    let adjoint = neumann_gauged(
        |u| Ok(le.jacobian_t_stacked(&lin.vjp(u)?)),
        loss_grad,
        neumann_k,
        gauge,
    )?;
    lin.backward(&adjoint)
}
