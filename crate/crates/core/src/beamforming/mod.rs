//! Downlink multi-user beam focusing: linear baselines, WMMSE and the
//! neural-calibration beamformer.

mod nc;
mod wmmse;

pub use nc::{
    nc_beamformer, nc_calibrate, read_nc, train_nc, write_nc, zf_rate_gradient, BasisKind, NcModel,
    NcTrainConfig, NcTrainReport,
};
pub use wmmse::{wmmse, WmmseOutcome};

use std::cmp::Ordering;

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::linalg::{inverse_gram, CMat};

/// Condition-number limit for `H·Hᴴ` in zero forcing.
pub const ZF_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiUserChannel {
    /// K×N, row k is user k's downlink channel.
    pub h: CMat,
    pub noise_power: f64,
    pub power_budget: f64,
}

impl MultiUserChannel {
    pub fn new(h: CMat, noise_power: f64, power_budget: f64) -> Result<Self> {
        if h.nrows() == 0 || h.ncols() == 0 {
            return Err(invalid("channel needs at least one user and one antenna"));
        }
        if !(noise_power > 0.0) || !(power_budget > 0.0) {
            return Err(invalid("noise power and power budget must be positive"));
        }
        Ok(Self {
            h,
            noise_power,
            power_budget,
        })
    }

    pub fn users(&self) -> usize {
        self.h.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.h.ncols()
    }

    /// Channel with users reordered so that new row `i` is old row `perm[i]`.
    pub fn permute_users(&self, perm: &[usize]) -> Self {
        Self {
            h: CMat::from_fn(self.users(), self.antennas(), |r, c| self.h[(perm[r], c)]),
            ..self.clone()
        }
    }

    /// The first `k` users.
    pub fn first_users(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.users() {
            return Err(invalid(format!(
                "cannot take {k} of {} users",
                self.users()
            )));
        }
        Ok(Self {
            h: self.h.rows(0, k).into_owned(),
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    /// N×K, column k serves user k.
    pub w: CMat,
}

impl Beamformer {
    pub fn power(&self) -> f64 {
        self.w.norm_squared()
    }
}

/// Row order that depends only on row contents, so routines computed in it
/// commute exactly with user permutations.
pub(crate) fn canonical_order(h: &CMat) -> Vec<usize> {
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| {
        for c in 0..h.ncols() {
            let (x, y) = (h[(a, c)], h[(b, c)]);
            let ord = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
            if ord != Ordering::Equal {
                return ord;
            }
        }
        a.cmp(&b)
    });
    order
}

fn zf_unnormalized(h: &CMat) -> Result<CMat> {
    let gram = h * h.adjoint();
    let inv = inverse_gram(&gram, ZF_CONDITION_LIMIT)?;
    Ok(h.adjoint() * inv)
}

/// Zero-forcing `Hᴴ(HHᴴ)⁻¹` scaled to the full power budget.
pub fn zf_beamformer(ch: &MultiUserChannel) -> Result<Beamformer> {
    if ch.users() > ch.antennas() {
        return Err(invalid(format!(
            "zero forcing needs K <= N, got K = {} and N = {}",
            ch.users(),
            ch.antennas()
        )));
    }
    let order = canonical_order(&ch.h);
    let sorted = ch.permute_users(&order);
    let w0 = zf_unnormalized(&sorted.h)?;
    let w_sorted = &w0 * Complex64::new((ch.power_budget / w0.norm_squared()).sqrt(), 0.0);
    let mut w = CMat::zeros(ch.antennas(), ch.users());
    for (pos, &user) in order.iter().enumerate() {
        w.set_column(user, &w_sorted.column(pos));
    }
    Ok(Beamformer { w })
}

/// Maximum-ratio transmission with equal per-user power.
pub fn mrt_beamformer(ch: &MultiUserChannel) -> Result<Beamformer> {
    let k = ch.users();
    let per_user = (ch.power_budget / k as f64).sqrt();
    let mut w = CMat::zeros(ch.antennas(), k);
    for u in 0..k {
        let row = ch.h.row(u);
        let norm = row.norm();
        if norm == 0.0 {
            return Err(invalid(format!("user {u} has an all-zero channel")));
        }
        w.set_column(u, &(row.adjoint() * Complex64::new(per_user / norm, 0.0)));
    }
    Ok(Beamformer { w })
}

/// Per-user rates `log2(1 + SINR_k)`.
pub fn user_rates(ch: &MultiUserChannel, bf: &Beamformer) -> Vec<f64> {
    let a = &ch.h * &bf.w;
    (0..ch.users())
        .map(|k| {
            let signal = a[(k, k)].norm_sqr();
            let interference: f64 = (0..a.ncols())
                .filter(|&j| j != k)
                .map(|j| a[(k, j)].norm_sqr())
                .sum();
            (1.0 + signal / (interference + ch.noise_power)).log2()
        })
        .collect()
}

/// `Σ_k log2(1 + SINR_k)` in bits/s/Hz.
pub fn sum_rate(ch: &MultiUserChannel, bf: &Beamformer) -> f64 {
    user_rates(ch, bf).iter().sum()
}
