use rand::Rng;

use super::Mlp;
use crate::error::{invalid, Result};
use crate::linalg::{RMat, RVec};
use crate::rng;

pub const DEFAULT_POWER_ITERS: usize = 20;

/// Power-iteration estimate of the largest singular value.
pub fn spectral_norm(w: &RMat, iters: usize, seed: u64) -> Result<f64> {
    if w.is_empty() {
        return Err(invalid("spectral norm of an empty matrix"));
    }
    if iters == 0 {
        return Err(invalid("power iteration needs at least one step"));
    }
    let mut r = rng::stream(seed, 0);
    let mut v = RVec::from_fn(w.ncols(), |_, _| r.random_range(-1.0..1.0));
    let mut sigma = 0.0;
    for _ in 0..iters {
        let n = v.norm();
        if n == 0.0 {
            return Ok(0.0);
        }
        v /= n;
        let u = w * &v;
        sigma = u.norm();
        if sigma == 0.0 {
            return Ok(0.0);
        }
        v = w.tr_mul(&u);
    }
    Ok(sigma)
}

/// Largest singular value from a full SVD. Power iteration approaches σ_max
/// from below, which is the wrong side for a certificate.
pub fn spectral_norm_exact(w: &RMat) -> f64 {
    if w.is_empty() {
        return 0.0;
    }
    w.clone().svd(false, false).singular_values.max()
}

/// Product of per-layer spectral norms.
pub fn spectral_norm_product(net: &Mlp) -> f64 {
    net.layers()
        .iter()
        .map(|l| spectral_norm_exact(&l.weight))
        .product()
}

/// Certified Lipschitz bound `β + (1-β)·Π σ_i` of the whole forward map.
pub fn lipschitz_bound(net: &Mlp) -> f64 {
    let beta = net.damping();
    beta + (1.0 - beta) * spectral_norm_product(net)
}

/// Rescales every weight matrix by `(budget / Π σ_i)^{1/L}` when the product of
/// spectral norms exceeds `budget`. Biases are untouched.
pub fn project_lipschitz(net: &Mlp, budget: f64) -> Result<Mlp> {
    let mut out = net.clone();
    project_lipschitz_in_place(&mut out, budget)?;
    Ok(out)
}

pub fn project_lipschitz_in_place(net: &mut Mlp, budget: f64) -> Result<()> {
    if !(budget > 0.0) {
        return Err(invalid(format!(
            "Lipschitz budget must be positive, got {budget}"
        )));
    }
    let product = spectral_norm_product(net);
    if product > budget {
        let factor = (budget / product).powf(1.0 / net.layers().len() as f64);
        for l in net.layers_mut() {
            l.weight *= factor;
        }
    }
    Ok(())
}
