//! Stored-state comparator: the same iteration map unrolled for a fixed
//! depth and differentiated by backpropagating through every stored iterate,
//! as a deep-unfolded network would be trained.

use super::train::{FpnSample, StepOutcome};
use super::{apply_denoiser, FpnModel, LinearStage};
use crate::error::{invalid, Result};
use crate::gauge::BufferGauge;
use crate::linalg::{stack, CVec};
use crate::nn::GradBundle;

pub fn unfolded_train_step(
    model: &FpnModel,
    sample: &FpnSample,
    depth: usize,
) -> Result<StepOutcome> {
    if depth == 0 {
        return Err(invalid("unrolled depth must be at least 1"));
    }
    model.check_dims(&sample.spec)?;
    let le = LinearStage::unchecked(&sample.spec, model.gamma);
    let gauge = BufferGauge::new();

    // forward: keep every LE output, the iterates are needed only transiently
    let mut le_outputs = Vec::with_capacity(depth);
    let mut x = gauge.hold(CVec::zeros(model.n));
    for _ in 0..depth {
        let r = gauge.hold(le.apply(&sample.y, &x));
        x = gauge.hold(apply_denoiser(&model.denoiser, &r)?);
        le_outputs.push(r);
    }
    let energy = sample.h.norm_squared();
    let err = &*x - &sample.h;
    let loss = err.norm_squared() / energy;

    // backward through time
    let mut upstream = stack(&err) * (2.0 / energy);
    let mut grads = GradBundle::zeros_like(&model.denoiser);
    for r in le_outputs.iter().rev() {
        let step = model.denoiser.backward(&stack(r), &upstream)?;
        grads.accumulate(&step);
        upstream = le.jacobian_t_stacked(&step.input);
    }
    grads.input = upstream;
    Ok(StepOutcome {
        loss,
        grads,
        iterations: depth,
        converged: false,
        retained_buffers: gauge.peak(),
    })
}
