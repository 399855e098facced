//! A small real-valued neural-network engine: a damped-residual MLP with
//! hand-derived reverse-mode gradients, spectral-norm control and Adam.
//!
//! The network computes `y = β·x + (1-β)·g(x)` where `g` is a chain of affine
//! layers with leaky-ReLU between them and no activation after the last one.
//! Leaky-ReLU is 1-Lipschitz, so `Lip(y) <= β + (1-β)·Π‖W_i‖₂`.

mod adam;
mod io;
mod spectral;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use io::{read_mlp, write_mlp, MAGIC as MODEL_MAGIC};
pub use spectral::{
    lipschitz_bound, project_lipschitz, project_lipschitz_in_place, spectral_norm,
    spectral_norm_exact, spectral_norm_product, DEFAULT_POWER_ITERS,
};

use rand::Rng;

use crate::error::{invalid, Result};
use crate::linalg::{RMat, RVec};
use crate::rng;

/// One affine layer, `W·x + b` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: RMat,
    pub bias: RVec,
}

impl Dense {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            weight: RMat::zeros(rows, cols),
            bias: RVec::zeros(rows),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    slope: f64,
    damping: f64,
}

/// Parameter gradients mirroring an [`Mlp`], plus the input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub layers: Vec<Dense>,
    pub input: RVec,
}

impl GradBundle {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
            input: RVec::zeros(net.input_dim()),
        }
    }

    pub fn accumulate(&mut self, other: &GradBundle) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
        self.input += &other.input;
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight *= s;
            l.bias *= s;
        }
        self.input *= s;
    }

    /// Euclidean norm over all parameter gradients (input gradient excluded).
    pub fn param_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.norm_squared() + l.bias.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
            && self.input.iter().all(|v| v.is_finite())
    }
}

struct Tape {
    /// Input to each layer.
    inputs: Vec<RVec>,
    /// Pre-activation of each hidden layer.
    pre: Vec<RVec>,
    output: RVec,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>, slope: f64, damping: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("network needs at least one layer"));
        }
        if !(slope > 0.0 && slope <= 1.0) {
            return Err(invalid(format!("leaky-ReLU slope {slope} outside (0, 1]")));
        }
        if !(0.0..1.0).contains(&damping) && damping != 1.0 {
            return Err(invalid(format!(
                "residual damping {damping} outside [0, 1]"
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.nrows() {
                return Err(invalid(format!(
                    "layer {i}: bias length does not match weight rows"
                )));
            }
            if i > 0 && layers[i - 1].weight.nrows() != l.weight.ncols() {
                return Err(invalid(format!("layer {i}: input width does not chain")));
            }
        }
        let net = Self {
            layers,
            slope,
            damping,
        };
        if damping > 0.0 && net.input_dim() != net.output_dim() {
            return Err(invalid(
                "residual damping requires equal input and output widths",
            ));
        }
        Ok(net)
    }

    /// Glorot-uniform weights and zero biases for the widths in `dims`
    /// (`dims[0]` in, `dims.last()` out).
    pub fn init(dims: &[usize], slope: f64, damping: f64, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(invalid(format!("bad layer widths {dims:?}")));
        }
        let mut rng = rng::stream(seed, 0);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    weight: RMat::from_fn(fan_out, fan_in, |_, _| rng.random_range(-bound..bound)),
                    bias: RVec::zeros(fan_out),
                }
            })
            .collect();
        Self::new(layers, slope, damping)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &RVec) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(invalid(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn leaky(&self, v: f64) -> f64 {
        if v >= 0.0 {
            v
        } else {
            self.slope * v
        }
    }

    fn leaky_grad(&self, v: f64) -> f64 {
        if v >= 0.0 {
            1.0
        } else {
            self.slope
        }
    }

    fn run(&self, x: &RVec, keep: bool) -> Tape {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::new();
        let mut pre = Vec::new();
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let mut a = &l.weight * &h;
            a += &l.bias;
            if keep {
                inputs.push(h);
            }
            if i == last {
                h = a;
            } else {
                let act = a.map(|v| self.leaky(v));
                if keep {
                    pre.push(a);
                }
                h = act;
            }
        }
        let output = if self.damping > 0.0 {
            x * self.damping + h * (1.0 - self.damping)
        } else {
            h
        };
        Tape {
            inputs,
            pre,
            output,
        }
    }

    pub fn forward(&self, x: &RVec) -> Result<RVec> {
        self.check_input(x)?;
        Ok(self.run(x, false).output)
    }

    /// Gradients of `⟨upstream, forward(x)⟩` with respect to every parameter
    /// and to `x`.
    pub fn backward(&self, x: &RVec, upstream: &RVec) -> Result<GradBundle> {
        self.linearize(x)?.backward(upstream)
    }

    /// Vector–Jacobian product with respect to the input only.
    pub fn input_vjp(&self, x: &RVec, upstream: &RVec) -> Result<RVec> {
        self.linearize(x)?.vjp(upstream)
    }

    /// Runs the forward pass once and keeps the activations so that several
    /// VJPs at the same point can reuse them.
    pub fn linearize(&self, x: &RVec) -> Result<Linearized<'_>> {
        self.check_input(x)?;
        Ok(Linearized {
            net: self,
            tape: self.run(x, true),
        })
    }
}

/// An [`Mlp`] evaluated at a fixed input, ready for repeated reverse passes.
pub struct Linearized<'a> {
    net: &'a Mlp,
    tape: Tape,
}

impl Linearized<'_> {
    pub fn output(&self) -> &RVec {
        &self.tape.output
    }

    pub fn vjp(&self, upstream: &RVec) -> Result<RVec> {
        Ok(self.backprop(upstream, false)?.input)
    }

    pub fn backward(&self, upstream: &RVec) -> Result<GradBundle> {
        self.backprop(upstream, true)
    }

    fn backprop(&self, upstream: &RVec, params: bool) -> Result<GradBundle> {
        let net = self.net;
        let tape = &self.tape;
        if upstream.len() != net.output_dim() {
            return Err(invalid(format!(
                "upstream has length {}, network output is {}",
                upstream.len(),
                net.output_dim()
            )));
        }
        let depth = net.layers.len();
        let mut grads: Vec<Dense> = Vec::with_capacity(if params { depth } else { 0 });
        let mut delta = upstream * (1.0 - net.damping);
        for i in (0..depth).rev() {
            if i < depth - 1 {
                for (d, &a) in delta.iter_mut().zip(tape.pre[i].iter()) {
                    *d *= net.leaky_grad(a);
                }
            }
            if params {
                grads.push(Dense {
                    weight: &delta * tape.inputs[i].transpose(),
                    bias: delta.clone(),
                });
            }
            delta = net.layers[i].weight.tr_mul(&delta);
        }
        grads.reverse();
        if net.damping > 0.0 {
            delta += upstream * net.damping;
        }
        Ok(GradBundle {
            layers: grads,
            input: delta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rvec(v: &[f64]) -> RVec {
        RVec::from_column_slice(v)
    }

    #[test]
    fn zero_net_with_damping_halves_input() {
        let layers = vec![Dense::zeros(3, 3), Dense::zeros(3, 3)];
        let net = Mlp::new(layers, 0.1, 0.5).unwrap();
        let y = net.forward(&rvec(&[1.0, -2.0, 4.0])).unwrap();
        assert_eq!(y, rvec(&[0.5, -1.0, 2.0]));
    }

    #[test]
    fn identity_single_layer() {
        let net = Mlp::new(
            vec![Dense {
                weight: RMat::identity(4, 4),
                bias: RVec::zeros(4),
            }],
            0.1,
            0.0,
        )
        .unwrap();
        let x = rvec(&[0.3, -1.0, 2.5, 0.0]);
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn two_layer_chain_by_hand() {
        let w1 = RMat::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 0.25, -1.0, 3.0]);
        let b1 = rvec(&[0.1, -0.2, 0.3]);
        let w2 = RMat::from_row_slice(2, 3, &[0.7, -0.4, 1.1, 0.2, 0.9, -0.6]);
        let b2 = rvec(&[-0.05, 0.15]);
        let net = Mlp::new(
            vec![
                Dense {
                    weight: w1,
                    bias: b1,
                },
                Dense {
                    weight: w2,
                    bias: b2,
                },
            ],
            0.1,
            0.3,
        )
        .unwrap();
        let (x0, x1) = (0.8, -0.6);
        let leaky = |v: f64| if v >= 0.0 { v } else { 0.1 * v };
        let h0 = leaky(1.0 * x0 - 2.0 * x1 + 0.1);
        let h1 = leaky(0.5 * x0 + 0.25 * x1 - 0.2);
        let h2 = leaky(-x0 + 3.0 * x1 + 0.3);
        let o0 = 0.7 * h0 - 0.4 * h1 + 1.1 * h2 - 0.05;
        let o1 = 0.2 * h0 + 0.9 * h1 - 0.6 * h2 + 0.15;
        let expected = [0.3 * x0 + 0.7 * o0, 0.3 * x1 + 0.7 * o1];
        let y = net.forward(&rvec(&[x0, x1])).unwrap();
        assert!((y[0] - expected[0]).abs() < 1e-12);
        assert!((y[1] - expected[1]).abs() < 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Mlp::init(&[4, 6, 4], 0.1, 0.5, 3).unwrap();
        let g = net
            .backward(&rvec(&[1.0, 2.0, 3.0, 4.0]), &RVec::zeros(4))
            .unwrap();
        assert_eq!(g.param_norm(), 0.0);
        assert_eq!(g.input.norm(), 0.0);
    }

    #[test]
    fn pure_identity_limit() {
        let net = Mlp::init(&[3, 5, 3], 0.1, 1.0, 3).unwrap();
        let u = rvec(&[0.4, -1.0, 2.0]);
        let g = net.backward(&rvec(&[1.0, 0.0, -1.0]), &u).unwrap();
        assert_eq!(g.input, u);
        assert_eq!(g.param_norm(), 0.0);
    }

    #[test]
    fn dimension_errors() {
        let net = Mlp::init(&[4, 8, 4], 0.1, 0.5, 1).unwrap();
        assert!(net.forward(&RVec::zeros(3)).is_err());
        assert!(net.backward(&RVec::zeros(4), &RVec::zeros(5)).is_err());
        assert!(Mlp::init(&[4, 8, 3], 0.1, 0.5, 1).is_err());
        assert!(Mlp::init(&[4, 8, 3], 0.1, 0.0, 1).is_ok());
        assert!(Mlp::init(&[4, 8, 4], 0.0, 0.5, 1).is_err());
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let net = Mlp::init(&[10, 30], 0.1, 0.0, 9).unwrap();
        let bound = (6.0f64 / 40.0).sqrt();
        assert!(net.layers()[0].weight.iter().all(|w| w.abs() <= bound));
        assert!(net.layers()[0].bias.iter().all(|&b| b == 0.0));
    }
}
