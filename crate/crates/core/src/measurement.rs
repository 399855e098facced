//! Pilot observation model: an effective M×N combining matrix, AWGN and an
//! optional one-bit quantizer on the combined output.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::geometry::ArrayGeometry;
use crate::linalg::{complex_normal, CMat, CVec};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantizer {
    None,
    OneBit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensingKind {
    /// i.i.d. CN(0, 1/N) entries.
    Gaussian,
    /// Phase-shifter combiner, entries `e^{jφ}/√N`.
    UnitModulus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSpec {
    pub sensing: CMat,
    pub noise_var: f64,
    pub quantizer: Quantizer,
}

impl MeasurementSpec {
    pub fn new(sensing: CMat, noise_var: f64, quantizer: Quantizer) -> Result<Self> {
        let (m, n) = sensing.shape();
        if m == 0 || m > n {
            return Err(invalid(format!(
                "sensing matrix must satisfy 1 <= M <= N, got {m}x{n}"
            )));
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(invalid(format!(
                "noise variance must be non-negative, got {noise_var}"
            )));
        }
        Ok(Self {
            sensing,
            noise_var,
            quantizer,
        })
    }

    pub fn m(&self) -> usize {
        self.sensing.nrows()
    }

    pub fn n(&self) -> usize {
        self.sensing.ncols()
    }

    pub fn compression_ratio(&self) -> f64 {
        self.m() as f64 / self.n() as f64
    }

    pub fn with_noise_var(mut self, noise_var: f64) -> Self {
        self.noise_var = noise_var;
        self
    }

    pub fn with_quantizer(mut self, quantizer: Quantizer) -> Self {
        self.quantizer = quantizer;
        self
    }

    /// Per-measurement power of `A·h` for channels with unit average power per
    /// antenna.
    pub fn signal_power(&self) -> f64 {
        self.sensing.norm_squared() / self.m() as f64
    }

    /// The matrix the linear estimator should use: `A` itself, or `ρ·A` with
    /// the Bussgang gain when the output is one-bit quantized.
    pub fn effective_sensing(&self) -> CMat {
        match self.quantizer {
            Quantizer::None => self.sensing.clone(),
            Quantizer::OneBit => {
                let rho = bussgang_gain(self, self.signal_power()).expect("one-bit quantizer");
                &self.sensing * Complex64::new(rho, 0.0)
            }
        }
    }
}

/// Builds a sensing matrix with no noise and no quantizer.
pub fn build_sensing(
    g: &ArrayGeometry,
    m: usize,
    kind: SensingKind,
    seed: u64,
) -> Result<MeasurementSpec> {
    let n = g.len();
    if m == 0 || m > n {
        return Err(invalid(format!("measurement count {m} outside [1, {n}]")));
    }
    let mut rng = rng::stream(seed, 0);
    let scale = 1.0 / (n as f64).sqrt();
    let sensing = match kind {
        SensingKind::Gaussian => CMat::from_fn(m, n, |_, _| complex_normal(&mut rng) * scale),
        SensingKind::UnitModulus => CMat::from_fn(m, n, |_, _| {
            Complex64::from_polar(scale, rng.random_range(0.0..2.0 * PI))
        }),
    };
    MeasurementSpec::new(sensing, 0.0, Quantizer::None)
}

fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `A·h + n`, optionally one-bit quantized per real dimension.
pub fn observe(spec: &MeasurementSpec, h: &CVec, seed: u64) -> Result<CVec> {
    if h.len() != spec.n() {
        return Err(invalid(format!(
            "channel has length {}, sensing expects {}",
            h.len(),
            spec.n()
        )));
    }
    let mut z = &spec.sensing * h;
    if spec.noise_var > 0.0 {
        let mut rng = rng::stream(seed, 1);
        let sd = spec.noise_var.sqrt();
        for v in z.iter_mut() {
            *v += complex_normal(&mut rng) * sd;
        }
    }
    if spec.quantizer == Quantizer::OneBit {
        for v in z.iter_mut() {
            *v = Complex64::new(sign(v.re), sign(v.im)) * FRAC_1_SQRT_2;
        }
    }
    Ok(z)
}

pub fn snr_to_noise_var(snr_db: f64, signal_power: f64) -> f64 {
    signal_power / 10f64.powf(snr_db / 10.0)
}

/// Bussgang gain of the one-bit quantizer for a complex Gaussian input with
/// total variance `signal_var + noise_var`.
pub fn bussgang_gain(spec: &MeasurementSpec, signal_var: f64) -> Result<f64> {
    if spec.quantizer != Quantizer::OneBit {
        return Err(Error::InvalidState(
            "Bussgang gain requires a one-bit quantizer".into(),
        ));
    }
    let total = signal_var + spec.noise_var;
    if !(total > 0.0) {
        return Err(invalid("input variance must be positive"));
    }
    Ok((2.0 / PI).sqrt() / total.sqrt())
}
