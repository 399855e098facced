//! Weighted-MMSE sum-rate maximization for the MISO downlink.
//!
//! Block-coordinate updates of the receive scalars `u_k`, MSE weights
//! `λ_k = 1/e_k` and transmit beams. The transmit update
//! `w_k = (Σ_j λ_j|u_j|² h_jᴴh_j + μI)⁻¹ λ_k u_k h_kᴴ` is evaluated through the
//! push-through identity `(HᴴDH + μI)⁻¹Hᴴ = Hᴴ(DHHᴴ + μI)⁻¹`, so only K×K
//! systems are solved; `μ` is found by bisection on the power constraint.

use num_complex::Complex64;

use super::{mrt_beamformer, sum_rate, zf_beamformer, Beamformer, MultiUserChannel};
use crate::error::{invalid, Error, Result};
use crate::linalg::{CMat, CVec};

const MAX_BRACKET_DOUBLINGS: usize = 200;
const MAX_BISECTIONS: usize = 300;

#[derive(Debug, Clone)]
pub struct WmmseOutcome {
    pub beamformer: Beamformer,
    /// `rates[0]` is the initializer's sum rate, `rates[t]` the rate after `t`
    /// iterations.
    pub rates: Vec<f64>,
}

pub fn wmmse(ch: &MultiUserChannel, iters: usize, bisect_tol: f64) -> Result<WmmseOutcome> {
    if iters == 0 {
        return Err(invalid("WMMSE needs at least one iteration"));
    }
    if !(bisect_tol > 0.0) {
        return Err(invalid("bisection tolerance must be positive"));
    }
    let mut bf = zf_beamformer(ch).or_else(|_| mrt_beamformer(ch))?;
    let mut rates = Vec::with_capacity(iters + 1);
    rates.push(sum_rate(ch, &bf));
    let k = ch.users();
    let gram = &ch.h * ch.h.adjoint();
    for _ in 0..iters {
        let a = &ch.h * &bf.w;
        let mut d = vec![0.0; k];
        let mut c = CVec::zeros(k);
        for user in 0..k {
            let total: f64 = (0..k).map(|j| a[(user, j)].norm_sqr()).sum::<f64>() + ch.noise_power;
            let u = a[(user, user)] / total;
            let e = 1.0 - a[(user, user)].norm_sqr() / total;
            let lambda = 1.0 / e;
            d[user] = lambda * u.norm_sqr();
            c[user] = u * lambda;
        }
        bf = transmit_update(ch, &gram, &d, &c, bisect_tol)?;
        rates.push(sum_rate(ch, &bf));
    }
    Ok(WmmseOutcome {
        beamformer: bf,
        rates,
    })
}

/// `X(μ) = (D·G + μI)⁻¹·diag(c)`; `W = Hᴴ·X`, `‖W‖² = tr(Xᴴ G X)`.
fn solve_weights(gram: &CMat, d: &[f64], c: &CVec, mu: f64) -> Option<(CMat, f64)> {
    let k = d.len();
    let mut m = CMat::from_fn(k, k, |r, col| gram[(r, col)] * d[r]);
    for i in 0..k {
        m[(i, i)] += Complex64::new(mu, 0.0);
    }
    let rhs = CMat::from_diagonal(c);
    let x = m.lu().solve(&rhs)?;
    let power = (x.adjoint() * gram * &x).trace().re;
    if power.is_finite() && x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Some((x, power))
    } else {
        None
    }
}

fn transmit_update(
    ch: &MultiUserChannel,
    gram: &CMat,
    d: &[f64],
    c: &CVec,
    tol: f64,
) -> Result<Beamformer> {
    let budget = ch.power_budget;
    let finish = |x: CMat| Beamformer {
        w: ch.h.adjoint() * x,
    };
    if d.iter().all(|&v| v > 0.0) {
        if let Some((x, p)) = solve_weights(gram, d, c, 0.0) {
            if p <= budget {
                return Ok(finish(x));
            }
        }
    }
    let scale = gram.diagonal().iter().map(|z| z.re).fold(0.0, f64::max)
        * d.iter().copied().fold(0.0, f64::max);
    let mut hi = scale.max(f64::MIN_POSITIVE) * 1e-6;
    let mut upper = None;
    for _ in 0..MAX_BRACKET_DOUBLINGS {
        match solve_weights(gram, d, c, hi) {
            Some((x, p)) if p <= budget => {
                upper = Some((x, p));
                break;
            }
            _ => hi *= 2.0,
        }
    }
    let (mut best, mut best_power) = upper
        .ok_or_else(|| Error::Numeric("WMMSE could not bracket the power multiplier".into()))?;
    let mut lo = 0.0;
    for _ in 0..MAX_BISECTIONS {
        if budget - best_power <= tol * budget {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match solve_weights(gram, d, c, mid) {
            Some((x, p)) if p <= budget => {
                hi = mid;
                best = x;
                best_power = p;
            }
            _ => lo = mid,
        }
    }
    Ok(finish(best))
}
