use super::{Dense, GradBundle, Mlp};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Dense>,
    second: Vec<Dense>,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        let zeros = GradBundle::zeros_like(net).layers;
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

fn update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, c: &AdamConfig, bc1: f64, bc2: f64) {
    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
}

/// One bias-corrected Adam descent step on every parameter of `net`.
pub fn adam_step(net: &mut Mlp, grads: &GradBundle, state: &mut AdamState) -> Result<()> {
    let shapes_match = net.layers().len() == grads.layers.len()
        && state.first.len() == grads.layers.len()
        && net
            .layers()
            .iter()
            .zip(&grads.layers)
            .zip(&state.first)
            .all(|((p, g), m)| {
                p.weight.shape() == g.weight.shape()
                    && p.bias.len() == g.bias.len()
                    && m.weight.shape() == p.weight.shape()
            });
    if !shapes_match {
        return Err(invalid(
            "gradient and optimizer shapes do not mirror the network",
        ));
    }
    state.step += 1;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powi(state.step as i32);
    let bc2 = 1.0 - c.beta2.powi(state.step as i32);
    for (((p, g), m), v) in net
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for (((pw, gw), mw), vw) in p
            .weight
            .iter_mut()
            .zip(g.weight.iter())
            .zip(m.weight.iter_mut())
            .zip(v.weight.iter_mut())
        {
            update(pw, *gw, mw, vw, &c, bc1, bc2);
        }
        for (((pb, gb), mb), vb) in p
            .bias
            .iter_mut()
            .zip(g.bias.iter())
            .zip(m.bias.iter_mut())
            .zip(v.bias.iter_mut())
        {
            update(pb, *gb, mb, vb, &c, bc1, bc2);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut net = Mlp::init(&[3, 4, 3], 0.1, 0.5, 1).unwrap();
        let before = net.clone();
        let mut st = AdamState::new(&net, AdamConfig::default());
        let zero = GradBundle::zeros_like(&net);
        adam_step(&mut net, &zero, &mut st).unwrap();
        assert_eq!(net, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut net = Mlp::init(&[2, 2], 0.1, 0.0, 1).unwrap();
        let before = net.clone();
        let mut st = AdamState::new(&net, AdamConfig::default());
        let mut g = GradBundle::zeros_like(&net);
        g.layers[0].weight.fill(0.37);
        g.layers[0].bias.fill(-5.0);
        adam_step(&mut net, &g, &mut st).unwrap();
        // step 1: m̂ = g, v̂ = g², update = lr·g/(|g|+ε)
        let lr = 1e-3;
        for (a, b) in net.layers()[0]
            .weight
            .iter()
            .zip(before.layers()[0].weight.iter())
        {
            assert!((b - a - lr * 0.37 / (0.37 + 1e-8)).abs() < 1e-15);
        }
        for (a, b) in net.layers()[0]
            .bias
            .iter()
            .zip(before.layers()[0].bias.iter())
        {
            assert!((a - b - lr * 5.0 / (5.0 + 1e-8)).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_runs() {
        let run = || {
            let mut net = Mlp::init(&[3, 5, 3], 0.1, 0.5, 4).unwrap();
            let mut st = AdamState::new(&net, AdamConfig::default());
            for i in 0..5 {
                let x = crate::linalg::RVec::from_element(3, i as f64 * 0.1);
                let g = net
                    .backward(&x, &crate::linalg::RVec::from_element(3, 1.0))
                    .unwrap();
                adam_step(&mut net, &g, &mut st).unwrap();
            }
            net
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut net = Mlp::init(&[3, 4, 3], 0.1, 0.5, 1).unwrap();
        let other = Mlp::init(&[3, 3], 0.1, 0.5, 1).unwrap();
        let mut st = AdamState::new(&net, AdamConfig::default());
        assert!(adam_step(&mut net, &GradBundle::zeros_like(&other), &mut st).is_err());
    }
}
