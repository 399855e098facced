//! Neural calibration over a zero-forcing basis.
//!
//! A single MLP is applied to every user's channel row (stacked `[Re; Im]`)
//! with shared weights, and the basis beamformer is computed from the
//! calibrated rows. Row-wise application makes the beamformer permutation
//! equivariant in the users and independent of K. Training maximizes the sum
//! rate measured on the true channel, differentiating through the basis.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{mrt_beamformer, zf_beamformer, Beamformer, MultiUserChannel, ZF_CONDITION_LIMIT};
use crate::error::{invalid, Error, Result};
use crate::linalg::{inverse_gram, stack, unstack, CMat, CVec};
use crate::nn::{adam_step, read_mlp, write_mlp, AdamConfig, AdamState, GradBundle, Mlp};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Zf,
    Mrt,
}

impl BasisKind {
    fn tag(self) -> u8 {
        match self {
            BasisKind::Zf => 0,
            BasisKind::Mrt => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(BasisKind::Zf),
            1 => Ok(BasisKind::Mrt),
            t => Err(Error::Format(format!("unknown basis tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcModel {
    pub calib: Mlp,
    pub basis: BasisKind,
}

impl NcModel {
    pub fn new(calib: Mlp, basis: BasisKind) -> Result<Self> {
        if calib.input_dim() != calib.output_dim() || !calib.input_dim().is_multiple_of(2) {
            return Err(invalid("calibration network must map 2N reals to 2N reals"));
        }
        Ok(Self { calib, basis })
    }

    /// Calibration that leaves every row unchanged.
    pub fn identity(n: usize, basis: BasisKind) -> Result<Self> {
        let mut net = Mlp::init(&[2 * n, 2 * n], 0.1, 1.0, 0)?;
        for l in net.layers_mut() {
            l.weight.fill(0.0);
        }
        Self::new(net, basis)
    }

    /// Near-identity start: heavy residual damping and a zero output layer,
    /// so the untrained beamformer equals the basis beamformer.
    pub fn init(
        n: usize,
        hidden: &[usize],
        damping: f64,
        slope: f64,
        basis: BasisKind,
        seed: u64,
    ) -> Result<Self> {
        let mut dims = vec![2 * n];
        dims.extend_from_slice(hidden);
        dims.push(2 * n);
        let mut net = Mlp::init(&dims, slope, damping, seed)?;
        if let Some(last) = net.layers_mut().last_mut() {
            last.weight.fill(0.0);
        }
        Self::new(net, basis)
    }

    pub fn antennas(&self) -> usize {
        self.calib.input_dim() / 2
    }
}

fn row(h: &CMat, k: usize) -> CVec {
    h.row(k).transpose()
}

/// Applies the shared calibration network to each user's channel row.
pub fn nc_calibrate(model: &NcModel, ch: &MultiUserChannel) -> Result<MultiUserChannel> {
    if ch.antennas() != model.antennas() {
        return Err(invalid(format!(
            "model calibrates {} antennas, channel has {}",
            model.antennas(),
            ch.antennas()
        )));
    }
    let mut h = CMat::zeros(ch.users(), ch.antennas());
    for k in 0..ch.users() {
        let out = unstack(&model.calib.forward(&stack(&row(&ch.h, k)))?);
        h.set_row(k, &out.transpose());
    }
    Ok(MultiUserChannel { h, ..ch.clone() })
}

/// Basis beamformer of the calibrated channel, at the original power budget.
pub fn nc_beamformer(model: &NcModel, ch: &MultiUserChannel) -> Result<Beamformer> {
    let calibrated = nc_calibrate(model, ch)?;
    match model.basis {
        BasisKind::Zf => zf_beamformer(&calibrated),
        BasisKind::Mrt => mrt_beamformer(&calibrated),
    }
}

/// Sum rate of `W(H̃)` on the true channel `h_true`, and its gradient with
/// respect to the calibrated channel `hc` (as `∂R/∂Re + j·∂R/∂Im`), for the
/// power-normalized zero-forcing map `W = √P·W₀/‖W₀‖`, `W₀ = H̃ᴴ(H̃H̃ᴴ)⁻¹`.
pub fn zf_rate_gradient(
    h_true: &CMat,
    hc: &CMat,
    noise_power: f64,
    power: f64,
) -> Result<(f64, CMat)> {
    let gram = hc * hc.adjoint();
    let ginv = inverse_gram(&gram, ZF_CONDITION_LIMIT)?;
    let w0 = hc.adjoint() * &ginv;
    let s = w0.norm_squared();
    let alpha = (power / s).sqrt();
    let w = &w0 * Complex64::new(alpha, 0.0);

    let (rate, g_w) = rate_gradient(h_true, &w, noise_power);

    // W = α·W₀ with α = √P·s^{-1/2}
    let tau = g_w.zip_map(&w0, |g, x| (g.conj() * x).re).sum();
    let g_w0 = &g_w * Complex64::new(alpha, 0.0)
        - &w0 * Complex64::new(tau * power.sqrt() * s.powf(-1.5), 0.0);
    // W₀ = H̃ᴴ·G⁻¹
    let mut g_hc = &ginv * g_w0.adjoint();
    let g_ginv = hc * &g_w0;
    // G⁻¹ = inv(G)
    let g_gram = -(ginv.adjoint() * g_ginv * ginv.adjoint());
    // G = H̃·H̃ᴴ
    g_hc += (&g_gram + g_gram.adjoint()) * hc;
    Ok((rate, g_hc))
}

/// Sum rate and its gradient with respect to `W`.
fn rate_gradient(h: &CMat, w: &CMat, noise_power: f64) -> (f64, CMat) {
    let a = h * w;
    let k = a.nrows();
    let mut coeff = CMat::zeros(k, a.ncols());
    let mut rate = 0.0;
    let ln2 = std::f64::consts::LN_2;
    for user in 0..k {
        let total: f64 = (0..a.ncols()).map(|j| a[(user, j)].norm_sqr()).sum::<f64>() + noise_power;
        let interference = total - a[(user, user)].norm_sqr();
        rate += (total / interference).log2();
        for j in 0..a.ncols() {
            let c = 1.0 / total - if j == user { 0.0 } else { 1.0 / interference };
            coeff[(user, j)] = a[(user, j)] * (2.0 * c / ln2);
        }
    }
    (rate, h.adjoint() * coeff)
}

/// Same as [`zf_rate_gradient`] for the equal-power MRT basis.
fn mrt_rate_gradient(
    h_true: &CMat,
    hc: &CMat,
    noise_power: f64,
    power: f64,
) -> Result<(f64, CMat)> {
    let k = hc.nrows();
    let c = (power / k as f64).sqrt();
    let mut w = CMat::zeros(hc.ncols(), k);
    for u in 0..k {
        let v = hc.row(u).adjoint();
        let norm = v.norm();
        if norm == 0.0 {
            return Err(invalid(format!(
                "user {u} calibrated to an all-zero channel"
            )));
        }
        w.set_column(u, &(v * Complex64::new(c / norm, 0.0)));
    }
    let (rate, g_w) = rate_gradient(h_true, &w, noise_power);
    let mut g_hc = CMat::zeros(k, hc.ncols());
    for u in 0..k {
        let v = hc.row(u).adjoint();
        let norm = v.norm();
        let gw = g_w.column(u);
        let proj = gw.dotc(&v).re;
        let g_v =
            gw * Complex64::new(c / norm, 0.0) - &v * Complex64::new(c * proj / norm.powi(3), 0.0);
        g_hc.set_row(u, &g_v.map(|z| z.conj()).transpose());
    }
    Ok((rate, g_hc))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub damping: f64,
    pub slope: f64,
    pub basis: BasisKind,
    pub seed: u64,
}

impl Default for NcTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            lr: 1e-3,
            hidden: vec![256],
            damping: 0.9,
            slope: 0.1,
            basis: BasisKind::Zf,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NcTrainReport {
    pub model: NcModel,
    /// Mean training sum rate per epoch.
    pub objective_history: Vec<f64>,
}

/// Sum rate of one channel and the gradient of the negated rate with respect
/// to every calibration parameter.
fn sample_gradient(model: &NcModel, ch: &MultiUserChannel) -> Result<(f64, GradBundle)> {
    let rows: Vec<_> = (0..ch.users()).map(|k| stack(&row(&ch.h, k))).collect();
    let lins = rows
        .iter()
        .map(|x| model.calib.linearize(x))
        .collect::<Result<Vec<_>>>()?;
    let mut hc = CMat::zeros(ch.users(), ch.antennas());
    for (k, lin) in lins.iter().enumerate() {
        hc.set_row(k, &unstack(lin.output()).transpose());
    }
    let (rate, g_hc) = match model.basis {
        BasisKind::Zf => zf_rate_gradient(&ch.h, &hc, ch.noise_power, ch.power_budget)?,
        BasisKind::Mrt => mrt_rate_gradient(&ch.h, &hc, ch.noise_power, ch.power_budget)?,
    };
    let mut grads = GradBundle::zeros_like(&model.calib);
    for (k, lin) in lins.iter().enumerate() {
        let upstream = -stack(&row(&g_hc, k));
        grads.accumulate(&lin.backward(&upstream)?);
    }
    Ok((rate, grads))
}

pub fn train_nc(dataset: &[MultiUserChannel], cfg: &NcTrainConfig) -> Result<NcTrainReport> {
    let first = dataset
        .first()
        .ok_or_else(|| invalid("training set is empty"))?;
    let n = first.antennas();
    if dataset.iter().any(|c| c.antennas() != n) {
        return Err(invalid(
            "all training channels must share the antenna count",
        ));
    }
    if cfg.batch_size == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    let mut model = NcModel::init(n, &cfg.hidden, cfg.damping, cfg.slope, cfg.basis, cfg.seed)?;
    let mut adam = AdamState::new(
        &model.calib,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(cfg.seed, 1 + epoch as u64));
        let mut total_rate = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, GradBundle)>> = batch
                .par_iter()
                .map(|&i| sample_gradient(&model, &dataset[i]))
                .collect();
            let mut grads = GradBundle::zeros_like(&model.calib);
            for r in results {
                let (rate, g) = r.map_err(|e| Error::TrainingFailure {
                    epoch,
                    reason: e.to_string(),
                })?;
                if !rate.is_finite() || !g.is_finite() {
                    return Err(Error::TrainingFailure {
                        epoch,
                        reason: "non-finite sum rate or gradient".into(),
                    });
                }
                total_rate += rate;
                grads.accumulate(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut model.calib, &grads, &mut adam)?;
        }
        history.push(total_rate / dataset.len() as f64);
    }
    Ok(NcTrainReport {
        model,
        objective_history: history,
    })
}

/// NC model file: N u32 and basis tag u8, then the `NFNN` network body.
pub fn write_nc<W: Write>(mut w: W, model: &NcModel) -> Result<()> {
    w.write_u32::<LE>(model.antennas() as u32)?;
    w.write_u8(model.basis.tag())?;
    write_mlp(w, &model.calib)
}

pub fn read_nc<R: Read>(mut r: R) -> Result<NcModel> {
    let n = r.read_u32::<LE>()? as usize;
    let basis = BasisKind::from_tag(r.read_u8()?)?;
    let calib = read_mlp(r)?;
    if calib.input_dim() != 2 * n {
        return Err(Error::Format(format!(
            "calibration network does not match N = {n}"
        )));
    }
    NcModel::new(calib, basis)
}
