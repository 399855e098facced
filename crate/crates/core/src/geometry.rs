//! Array geometry, near/far-field steering vectors and hybrid-field channel
//! generation.
//!
//! Direction convention: `direction(az, el) = (sin az·cos el, cos az·cos el, sin el)`
//! is the propagation direction of the incoming wave. Linear arrays lie on the
//! x axis and planar arrays in the x–z plane, so azimuth 0 / elevation 0 is
//! broadside. A near-field source at range `r` sits at `-r·direction`; with the
//! phase referenced to the array centroid, the spherical steering vector tends
//! to the planar one as `r` grows.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::linalg::{complex_normal, CMat, CVec};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayKind {
    Ula,
    Upa,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    positions: Vec<[f64; 3]>,
    wavelength: f64,
    kind: ArrayKind,
    aperture: f64,
}

impl ArrayGeometry {
    /// Geometry from explicit element positions (meters).
    pub fn from_positions(
        positions: Vec<[f64; 3]>,
        wavelength: f64,
        kind: ArrayKind,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid("array needs at least one element"));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(invalid(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(invalid("element coordinates must be finite"));
        }
        let aperture = max_pairwise_distance(&positions);
        Ok(Self {
            positions,
            wavelength,
            kind,
            aperture,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn kind(&self) -> ArrayKind {
        self.kind
    }

    /// Largest distance between any two elements.
    pub fn aperture(&self) -> f64 {
        self.aperture
    }
}

fn max_pairwise_distance(p: &[[f64; 3]]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in p.iter().enumerate() {
        for b in &p[i + 1..] {
            best = best.max(dist(a, b));
        }
    }
    best
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn check_spacing(spacing: f64, wavelength: f64) -> Result<()> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(invalid(format!("spacing must be positive, got {spacing}")));
    }
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(invalid(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    Ok(())
}

fn centered(i: usize, n: usize, spacing: f64) -> f64 {
    (2.0 * i as f64 - n as f64 + 1.0) / 2.0 * spacing
}

/// Uniform linear array on the x axis, centroid at the origin.
pub fn build_ula(n: usize, spacing: f64, wavelength: f64) -> Result<ArrayGeometry> {
    check_spacing(spacing, wavelength)?;
    if n == 0 {
        return Err(invalid("array needs at least one element"));
    }
    let positions = (0..n)
        .map(|i| [centered(i, n, spacing), 0.0, 0.0])
        .collect();
    ArrayGeometry::from_positions(positions, wavelength, ArrayKind::Ula)
}

/// Uniform planar array in the x–z plane; element index is row-major with x
/// varying fastest.
pub fn build_upa(nx: usize, ny: usize, spacing: f64, wavelength: f64) -> Result<ArrayGeometry> {
    check_spacing(spacing, wavelength)?;
    if nx == 0 || ny == 0 {
        return Err(invalid("array needs at least one element per axis"));
    }
    let mut positions = Vec::with_capacity(nx * ny);
    for row in 0..ny {
        for col in 0..nx {
            positions.push([centered(col, nx, spacing), 0.0, centered(row, ny, spacing)]);
        }
    }
    ArrayGeometry::from_positions(positions, wavelength, ArrayKind::Upa)
}

/// Fraunhofer distance `2·D²/λ`.
pub fn rayleigh_distance(g: &ArrayGeometry) -> f64 {
    2.0 * g.aperture * g.aperture / g.wavelength
}

/// Unit propagation direction for the given angles.
pub fn direction(azimuth: f64, elevation: f64) -> [f64; 3] {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    [sa * ce, ca * ce, se]
}

/// Planar-wavefront steering vector, unit norm.
pub fn steer_far(g: &ArrayGeometry, azimuth: f64, elevation: f64) -> CVec {
    let u = direction(azimuth, elevation);
    let k = 2.0 * PI / g.wavelength;
    let scale = 1.0 / (g.len() as f64).sqrt();
    CVec::from_iterator(
        g.len(),
        g.positions.iter().map(|p| {
            let proj = p[0] * u[0] + p[1] * u[1] + p[2] * u[2];
            Complex64::from_polar(scale, -k * proj)
        }),
    )
}

/// Spherical-wavefront steering vector for a source at `distance` meters,
/// phase referenced to the array centroid. Unit norm.
pub fn steer_near(g: &ArrayGeometry, azimuth: f64, elevation: f64, distance: f64) -> Result<CVec> {
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(invalid(format!(
            "distance must be positive and finite, got {distance}"
        )));
    }
    let u = direction(azimuth, elevation);
    let source = [-distance * u[0], -distance * u[1], -distance * u[2]];
    let k = 2.0 * PI / g.wavelength;
    let scale = 1.0 / (g.len() as f64).sqrt();
    Ok(CVec::from_iterator(
        g.len(),
        g.positions.iter().map(|p| {
            let r = dist(&source, p);
            Complex64::from_polar(scale, -k * (r - distance))
        }),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    Far,
    Near { distance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathComponent {
    pub regime: Regime,
    pub azimuth: f64,
    pub elevation: f64,
    pub gain: Complex64,
    pub visible_mask: Option<Vec<bool>>,
}

impl PathComponent {
    pub fn is_near(&self) -> bool {
        matches!(self.regime, Regime::Near { .. })
    }

    pub fn distance(&self) -> Option<f64> {
        match self.regime {
            Regime::Near { distance } => Some(distance),
            Regime::Far => None,
        }
    }

    /// Unit-norm array response of this path: the steering vector, zeroed
    /// outside the visible region and rescaled back to unit norm.
    pub fn steering(&self, g: &ArrayGeometry) -> Result<CVec> {
        let mut a = match self.regime {
            Regime::Far => steer_far(g, self.azimuth, self.elevation),
            Regime::Near { distance } => steer_near(g, self.azimuth, self.elevation, distance)?,
        };
        if let Some(mask) = &self.visible_mask {
            if mask.len() != g.len() {
                return Err(invalid(format!(
                    "visible mask has {} entries, array has {}",
                    mask.len(),
                    g.len()
                )));
            }
            let visible = mask.iter().filter(|&&m| m).count();
            if visible == 0 {
                return Err(invalid("visible mask hides every element"));
            }
            let rescale = (g.len() as f64 / visible as f64).sqrt();
            for (z, &m) in a.iter_mut().zip(mask) {
                *z = if m {
                    *z * rescale
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
        }
        Ok(a)
    }

    /// Gain-weighted response.
    pub fn response(&self, g: &ArrayGeometry) -> Result<CVec> {
        Ok(self.steering(g)? * self.gain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainModel {
    Unit,
    ComplexGaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub n_users: usize,
    pub paths_per_user: usize,
    pub near_fraction: f64,
    pub distance_range: (f64, f64),
    pub gain_model: GainModel,
    pub non_stationary: bool,
    pub visible_region_len: usize,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            n_users: 1,
            paths_per_user: 3,
            near_fraction: 0.5,
            distance_range: (3.0, 20.0),
            gain_model: GainModel::ComplexGaussian,
            non_stationary: false,
            visible_region_len: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let (r_min, r_max) = self.distance_range;
        if self.n_users == 0 {
            return Err(invalid("n_users must be at least 1"));
        }
        if self.paths_per_user == 0 {
            return Err(invalid("paths_per_user must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.near_fraction) {
            return Err(invalid(format!(
                "near_fraction {} outside [0, 1]",
                self.near_fraction
            )));
        }
        if !(r_min > 0.0 && r_min.is_finite()) {
            return Err(invalid(format!(
                "distance_range lower bound must be positive, got {r_min}"
            )));
        }
        if !(r_max >= r_min && r_max.is_finite()) {
            return Err(invalid(format!(
                "distance_range [{r_min}, {r_max}] is empty"
            )));
        }
        if self.non_stationary && self.visible_region_len == 0 {
            return Err(invalid(
                "visible_region_len must be positive for non-stationary channels",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// N×K, column k is user k's channel.
    pub matrix: CMat,
    pub paths: Vec<Vec<PathComponent>>,
    pub config_echo: ChannelConfig,
}

impl ChannelRealization {
    pub fn user(&self, k: usize) -> CVec {
        self.matrix.column(k).into_owned()
    }
}

/// Draws a hybrid-field multipath channel for every user. User `k` draws from
/// its own stream `(seed, k)`.
pub fn sample_channel(
    g: &ArrayGeometry,
    cfg: &ChannelConfig,
    seed: u64,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    let n = g.len();
    if cfg.non_stationary && cfg.visible_region_len > n {
        return Err(invalid(format!(
            "visible_region_len {} exceeds element count {n}",
            cfg.visible_region_len
        )));
    }
    let mut matrix = CMat::zeros(n, cfg.n_users);
    let mut paths = Vec::with_capacity(cfg.n_users);
    for k in 0..cfg.n_users {
        let user_paths = sample_user_paths(g, cfg, &mut rng::stream(seed, k as u64));
        let mut h = DVector::zeros(n);
        for p in &user_paths {
            h += p.response(g)?;
        }
        matrix.set_column(k, &h);
        paths.push(user_paths);
    }
    Ok(ChannelRealization {
        matrix,
        paths,
        config_echo: cfg.clone(),
    })
}

fn sample_user_paths<R: Rng>(
    g: &ArrayGeometry,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Vec<PathComponent> {
    let n = g.len();
    let amplitude = (n as f64 / cfg.paths_per_user as f64).sqrt();
    let (r_min, r_max) = cfg.distance_range;
    (0..cfg.paths_per_user)
        .map(|_| {
            let near = rng.random::<f64>() < cfg.near_fraction;
            let azimuth = rng.random_range(-1.0..1.0f64).asin();
            let elevation = match g.kind() {
                ArrayKind::Ula => 0.0,
                ArrayKind::Upa => rng.random_range(-1.0..1.0f64).asin(),
            };
            let regime = if near {
                Regime::Near {
                    distance: if r_max > r_min {
                        rng.random_range(r_min..r_max)
                    } else {
                        r_min
                    },
                }
            } else {
                Regime::Far
            };
            let gain = match cfg.gain_model {
                GainModel::Unit => {
                    Complex64::from_polar(amplitude, rng.random_range(0.0..2.0 * PI))
                }
                GainModel::ComplexGaussian => complex_normal(rng) * amplitude,
            };
            let visible_mask = cfg.non_stationary.then(|| {
                let len = cfg.visible_region_len;
                let start = rng.random_range(0..=n - len);
                (0..n).map(|i| i >= start && i < start + len).collect()
            });
            PathComponent {
                regime,
                azimuth,
                elevation,
                gain,
                visible_mask,
            }
        })
        .collect()
}
