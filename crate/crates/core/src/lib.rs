//! Near-field XL-MIMO transceiver algorithms.
//!
//! - [`geometry`]: arrays, spherical/planar steering vectors and hybrid-field
//!   multipath channels with optional visible regions.
//! - [`dictionary`]: far-field and polar-domain dictionaries, OMP.
//! - [`measurement`]: pilot observation model with optional one-bit ADCs.
//! - [`nn`]: damped-residual MLP, gradients, Lipschitz projection, Adam.
//! - [`fpn`]: fixed-point-network channel estimator with implicit training,
//!   plus LS and soft-threshold baselines.
//! - [`beamforming`]: ZF, MRT, WMMSE and the neural-calibration beamformer.

pub mod beamforming;
pub mod dictionary;
pub mod error;
pub mod fpn;
pub mod gauge;
pub mod geometry;
pub mod linalg;
pub mod measurement;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, RMat, RVec};
pub use num_complex::Complex64;
