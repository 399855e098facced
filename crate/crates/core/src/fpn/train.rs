use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::implicit::implicit_grads;
use super::solver::solve_gauged;
use super::{default_gamma, iteration_map, FpnModel, LinearStage};
use crate::error::{invalid, Error, Result};
use crate::gauge::BufferGauge;
use crate::linalg::{stack, CVec};
use crate::measurement::MeasurementSpec;
use crate::nn::{adam_step, AdamConfig, AdamState, GradBundle};
use crate::rng;

/// One training example: the observation model, the pilots it produced and
/// the true channel.
#[derive(Debug, Clone)]
pub struct FpnSample {
    pub spec: Arc<MeasurementSpec>,
    pub y: CVec,
    pub h: CVec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpnTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub neumann_k: usize,
    pub lip_budget: f64,
    pub hidden: Vec<usize>,
    pub damping: f64,
    pub slope: f64,
    pub seed: u64,
    /// LE step size; `None` uses `1/σ_max(A)²` of the widest sensing matrix.
    pub gamma: Option<f64>,
}

impl Default for FpnTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            lr: 1e-3,
            tol: super::DEFAULT_TOL,
            max_iter: super::DEFAULT_MAX_ITER,
            neumann_k: super::DEFAULT_NEUMANN_K,
            lip_budget: super::DEFAULT_LIP_BUDGET,
            hidden: vec![256],
            damping: super::DEFAULT_DAMPING,
            slope: super::DEFAULT_SLOPE,
            seed: 0,
            gamma: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FpnTrainReport {
    pub model: FpnModel,
    /// Mean fixed-point NMSE (linear) per epoch.
    pub loss_history: Vec<f64>,
    /// Certified denoiser Lipschitz bound after each epoch.
    pub lipschitz_history: Vec<f64>,
    /// Largest number of iterate-sized buffers alive during any step.
    pub peak_buffers: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub loss: f64,
    pub grads: GradBundle,
    pub iterations: usize,
    pub converged: bool,
    pub retained_buffers: usize,
}

/// Solve to the fixed point, then take implicit gradients of the normalized
/// squared error there. Nothing but the current iterate survives the solve.
pub fn fpn_train_step(
    model: &FpnModel,
    sample: &FpnSample,
    tol: f64,
    max_iter: usize,
    neumann_k: usize,
) -> Result<StepOutcome> {
    model.check_dims(&sample.spec)?;
    let le = LinearStage::unchecked(&sample.spec, model.gamma);
    let gauge = BufferGauge::new();
    let zero = CVec::zeros(model.n);
    let out = solve_gauged(
        iteration_map(model, &le, &sample.y),
        &zero,
        tol,
        max_iter,
        &gauge,
    )?;
    let fixed = gauge.hold(out.h_hat);
    let energy = sample.h.norm_squared();
    let err = &*fixed - &sample.h;
    let loss = err.norm_squared() / energy;
    let loss_grad = stack(&err) * (2.0 / energy);
    let grads = implicit_grads(model, &le, &sample.y, &fixed, &loss_grad, neumann_k, &gauge)?;
    Ok(StepOutcome {
        loss,
        grads,
        iterations: out.trace.iterations_used,
        converged: out.trace.converged,
        retained_buffers: gauge.peak(),
    })
}

fn check_dataset(dataset: &[FpnSample]) -> Result<(usize, usize)> {
    let first = dataset
        .first()
        .ok_or_else(|| invalid("training set is empty"))?;
    let (m, n) = (first.spec.m(), first.spec.n());
    for (i, s) in dataset.iter().enumerate() {
        if s.spec.m() != m || s.spec.n() != n || s.y.len() != m || s.h.len() != n {
            return Err(invalid(format!(
                "sample {i} dimensions differ from sample 0"
            )));
        }
        if s.h.norm_squared() == 0.0 {
            return Err(invalid(format!("sample {i} has an all-zero channel")));
        }
    }
    Ok((m, n))
}

fn distinct_specs(dataset: &[FpnSample]) -> Vec<&MeasurementSpec> {
    let mut seen: Vec<&MeasurementSpec> = Vec::new();
    for s in dataset {
        if !seen.iter().any(|&p| std::ptr::eq(p, &*s.spec)) {
            seen.push(&s.spec);
        }
    }
    seen
}

/// Step size shared by every sample: `1/max σ_max(A)²` over the distinct
/// sensing matrices in the set.
fn dataset_gamma(dataset: &[FpnSample]) -> f64 {
    distinct_specs(dataset)
        .into_iter()
        .map(default_gamma)
        .fold(f64::INFINITY, f64::min)
}

pub fn train_fpn(dataset: &[FpnSample], cfg: &FpnTrainConfig) -> Result<FpnTrainReport> {
    let (m, n) = check_dataset(dataset)?;
    let gamma = cfg.gamma.unwrap_or_else(|| dataset_gamma(dataset));
    let model = FpnModel::init_with(
        n,
        m,
        &cfg.hidden,
        gamma,
        cfg.lip_budget,
        cfg.damping,
        cfg.slope,
        cfg.seed,
    )?;
    train_fpn_from(model, dataset, cfg)
}

/// Continues training an existing model.
pub fn train_fpn_from(
    mut model: FpnModel,
    dataset: &[FpnSample],
    cfg: &FpnTrainConfig,
) -> Result<FpnTrainReport> {
    check_dataset(dataset)?;
    if cfg.batch_size == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    for spec in distinct_specs(dataset) {
        LinearStage::new(spec, model.gamma)?;
    }

    let mut adam = AdamState::new(
        &model.denoiser,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let mut lipschitz_history = Vec::with_capacity(cfg.epochs);
    let mut peak_buffers = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(cfg.seed, 1 + epoch as u64));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let outcomes: Vec<Result<StepOutcome>> = batch
                .par_iter()
                .map(|&i| fpn_train_step(&model, &dataset[i], cfg.tol, cfg.max_iter, cfg.neumann_k))
                .collect();
            let mut total = GradBundle::zeros_like(&model.denoiser);
            for outcome in outcomes {
                let step = outcome.map_err(|e| Error::TrainingFailure {
                    epoch,
                    reason: e.to_string(),
                })?;
                if !step.loss.is_finite() || !step.grads.is_finite() {
                    return Err(Error::TrainingFailure {
                        epoch,
                        reason: "non-finite loss or gradient".into(),
                    });
                }
                epoch_loss += step.loss;
                peak_buffers = peak_buffers.max(step.retained_buffers);
                total.accumulate(&step.grads);
            }
            total.scale(1.0 / batch.len() as f64);
            adam_step(&mut model.denoiser, &total, &mut adam)?;
            model.enforce_certificate()?;
        }
        loss_history.push(epoch_loss / dataset.len() as f64);
        lipschitz_history.push(model.nle_lipschitz());
    }
    Ok(FpnTrainReport {
        model,
        loss_history,
        lipschitz_history,
        peak_buffers,
    })
}
