//! Far-field and polar-domain dictionaries and orthogonal matching pursuit.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::geometry::{rayleigh_distance, steer_far, steer_near, ArrayGeometry};
use crate::linalg::{CMat, CVec};

/// Grid coordinates of one atom. `distance` is `None` for planar-wave atoms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomLabel {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PolarDictionary {
    pub atoms: CMat,
    pub labels: Vec<AtomLabel>,
    pub geometry_echo: ArrayGeometry,
}

impl PolarDictionary {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Distinct near-field ring distances, in emission order.
    pub fn ring_distances(&self) -> Vec<f64> {
        let mut rings = Vec::new();
        for l in &self.labels {
            match l.distance {
                Some(d) if !rings.contains(&d) => rings.push(d),
                _ => {}
            }
        }
        rings
    }
}

/// Angles uniform in sine over [-1, 1), spaced 2/n and always containing
/// broadside.
fn sine_grid(n_angles: usize) -> impl Iterator<Item = f64> {
    let half = (n_angles / 2) as f64;
    (0..n_angles).map(move |i| (2.0 * (i as f64 - half) / n_angles as f64).asin())
}

pub fn build_far_dictionary(g: &ArrayGeometry, n_angles: usize) -> Result<PolarDictionary> {
    build_polar_dictionary(g, n_angles, 0, f64::MIN_POSITIVE)
}

/// Ring distances: the outermost ring sits at half the Rayleigh distance and
/// the rest are spaced uniformly in inverse distance down towards `rho_min`,
/// `1/r_s = 1/r_1 + (s-1)·(1/rho_min - 1/r_1)/n_rings`.
pub fn ring_distances(g: &ArrayGeometry, n_rings: usize, rho_min: f64) -> Result<Vec<f64>> {
    if n_rings == 0 {
        return Ok(Vec::new());
    }
    let outer = 0.5 * rayleigh_distance(g);
    if rho_min >= outer {
        return Err(invalid(format!(
            "rho_min {rho_min} m must lie inside the first ring at {outer} m"
        )));
    }
    let step = (1.0 / rho_min - 1.0 / outer) / n_rings as f64;
    Ok((0..n_rings)
        .map(|s| 1.0 / (1.0 / outer + s as f64 * step))
        .collect())
}

/// Angle × distance dictionary: for each angle, one planar atom followed by
/// `n_rings` spherical atoms.
pub fn build_polar_dictionary(
    g: &ArrayGeometry,
    n_angles: usize,
    n_rings: usize,
    rho_min: f64,
) -> Result<PolarDictionary> {
    if n_angles == 0 {
        return Err(invalid("n_angles must be at least 1"));
    }
    if !(rho_min > 0.0) {
        return Err(invalid(format!("rho_min must be positive, got {rho_min}")));
    }
    let rings = ring_distances(g, n_rings, rho_min)?;
    let q = n_angles * (n_rings + 1);
    let mut atoms = CMat::zeros(g.len(), q);
    let mut labels = Vec::with_capacity(q);
    for az in sine_grid(n_angles) {
        atoms.set_column(labels.len(), &steer_far(g, az, 0.0));
        labels.push(AtomLabel {
            azimuth: az,
            elevation: 0.0,
            distance: None,
        });
        for &r in &rings {
            atoms.set_column(labels.len(), &steer_near(g, az, 0.0, r)?);
            labels.push(AtomLabel {
                azimuth: az,
                elevation: 0.0,
                distance: Some(r),
            });
        }
    }
    Ok(PolarDictionary {
        atoms,
        labels,
        geometry_echo: g.clone(),
    })
}

/// Largest absolute inner product between two distinct atoms.
pub fn mutual_coherence(d: &PolarDictionary) -> Result<f64> {
    let q = d.atoms.ncols();
    if q < 2 {
        return Err(invalid("coherence needs at least two atoms"));
    }
    let gram = d.atoms.adjoint() * &d.atoms;
    let mut best = 0.0f64;
    for j in 0..q {
        for i in 0..j {
            best = best.max(gram[(i, j)].norm());
        }
    }
    Ok(best.min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub support: Vec<usize>,
    pub coefficients: Vec<Complex64>,
}

impl SparseCode {
    pub fn synthesize(&self, d: &PolarDictionary) -> CVec {
        let mut x = CVec::zeros(d.atoms.nrows());
        for (&i, &c) in self.support.iter().zip(&self.coefficients) {
            x += d.atoms.column(i) * c;
        }
        x
    }
}

const OMP_STOP: f64 = 1e-10;

/// Orthogonal matching pursuit. Ties go to the lowest column index.
pub fn omp(y: &CVec, d: &PolarDictionary, sparsity: usize) -> Result<SparseCode> {
    let (n, q) = d.atoms.shape();
    if y.len() != n {
        return Err(invalid(format!(
            "observation has length {}, atoms have {n}",
            y.len()
        )));
    }
    if sparsity == 0 || sparsity > n.min(q) {
        return Err(invalid(format!(
            "sparsity {sparsity} outside [1, {}]",
            n.min(q)
        )));
    }
    let mut support: Vec<usize> = Vec::with_capacity(sparsity);
    let mut coefficients: Vec<Complex64> = Vec::new();
    let mut residual = y.clone();
    while support.len() < sparsity && residual.norm() >= OMP_STOP {
        let corr = d.atoms.adjoint() * &residual;
        let mut pick = None;
        let mut best = -1.0;
        for (i, c) in corr.iter().enumerate() {
            if support.contains(&i) {
                continue;
            }
            let v = c.norm();
            if v > best {
                best = v;
                pick = Some(i);
            }
        }
        let Some(pick) = pick else { break };
        support.push(pick);

        let sub = CMat::from_fn(n, support.len(), |r, c| d.atoms[(r, support[c])]);
        let gram = sub.adjoint() * &sub;
        let rhs = sub.adjoint() * y;
        let coef = gram
            .cholesky()
            .ok_or_else(|| Error::Numeric("selected atoms are linearly dependent".into()))?
            .solve(&rhs);
        residual = y - &sub * &coef;
        coefficients = coef.iter().copied().collect();
    }
    Ok(SparseCode {
        support,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_ula;

    fn half_wave_ula(n: usize) -> ArrayGeometry {
        build_ula(n, 0.005, 0.01).unwrap()
    }

    #[test]
    fn far_dictionary_is_unitary_at_half_wavelength() {
        let d = build_far_dictionary(&half_wave_ula(16), 16).unwrap();
        let gram = d.atoms.adjoint() * &d.atoms;
        assert!((gram - CMat::identity(16, 16)).norm() < 1e-12);
        assert!((d.atoms.determinant().norm() - 1.0).abs() < 1e-10);
        assert!(mutual_coherence(&d).unwrap() <= 1e-10);
    }

    #[test]
    fn single_angle_is_broadside() {
        let g = half_wave_ula(8);
        let d = build_far_dictionary(&g, 1).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.labels[0].azimuth, 0.0);
        assert!((d.atoms.column(0) - steer_far(&g, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn unit_norm_columns_and_labels() {
        let d = build_polar_dictionary(&half_wave_ula(32), 20, 3, 0.05).unwrap();
        assert_eq!(d.labels.len(), d.atoms.ncols());
        for c in d.atoms.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rings_matches_far() {
        let g = half_wave_ula(16);
        let a = build_polar_dictionary(&g, 12, 0, 0.01).unwrap();
        let b = build_far_dictionary(&g, 12).unwrap();
        assert_eq!(a.atoms, b.atoms);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn polar_size_and_rings() {
        let g = half_wave_ula(64);
        let d = build_polar_dictionary(&g, 64, 3, 0.05).unwrap();
        assert_eq!(d.len(), 256);
        assert_eq!(d.len(), 4 * build_far_dictionary(&g, 64).unwrap().len());
        let rings = d.ring_distances();
        assert_eq!(rings.len(), 3);
        assert!(rings.windows(2).all(|w| w[1] < w[0]));
        assert!(rings[2] > 0.05);
    }

    #[test]
    fn rho_min_outside_first_ring_rejected() {
        let g = half_wave_ula(16);
        let rd = rayleigh_distance(&g);
        assert!(build_polar_dictionary(&g, 8, 2, rd).is_err());
        assert!(build_polar_dictionary(&g, 8, 2, 0.0).is_err());
    }

    #[test]
    fn coherence_edge_cases() {
        let g = half_wave_ula(16);
        let mut d = build_far_dictionary(&g, 16).unwrap();
        let single = build_far_dictionary(&g, 1).unwrap();
        assert!(mutual_coherence(&single).is_err());
        let col = d.atoms.column(3).into_owned();
        d.atoms.set_column(5, &col);
        assert!((mutual_coherence(&d).unwrap() - 1.0).abs() < 1e-12);

        let far = build_far_dictionary(&g, 16).unwrap();
        let polar = build_polar_dictionary(&g, 16, 2, 0.01).unwrap();
        assert!(mutual_coherence(&polar).unwrap() >= mutual_coherence(&far).unwrap());
    }

    #[test]
    fn omp_exact_one_sparse() {
        let d = build_polar_dictionary(&half_wave_ula(32), 32, 2, 0.02).unwrap();
        let y = d.atoms.column(7) * Complex64::new(3.0, 0.0);
        let code = omp(&y, &d, 1).unwrap();
        assert_eq!(code.support, vec![7]);
        assert!((code.coefficients[0] - Complex64::new(3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn omp_zero_input_stops_early() {
        let d = build_far_dictionary(&half_wave_ula(8), 8).unwrap();
        let code = omp(&CVec::zeros(8), &d, 3).unwrap();
        assert!(code.support.is_empty());
    }

    #[test]
    fn omp_two_atoms_unitary() {
        let d = build_far_dictionary(&half_wave_ula(16), 16).unwrap();
        let a = Complex64::new(1.5, -0.5);
        let b = Complex64::new(-0.7, 2.0);
        let y = d.atoms.column(2) * a + d.atoms.column(11) * b;
        let code = omp(&y, &d, 2).unwrap();
        let mut pairs: Vec<_> = code
            .support
            .iter()
            .copied()
            .zip(code.coefficients.iter().copied())
            .collect();
        pairs.sort_by_key(|p| p.0);
        assert_eq!(pairs[0].0, 2);
        assert_eq!(pairs[1].0, 11);
        assert!((pairs[0].1 - a).norm() < 1e-10);
        assert!((pairs[1].1 - b).norm() < 1e-10);
    }

    #[test]
    fn omp_argument_checks() {
        let d = build_far_dictionary(&half_wave_ula(8), 8).unwrap();
        assert!(omp(&CVec::zeros(7), &d, 1).is_err());
        assert!(omp(&CVec::zeros(8), &d, 0).is_err());
        assert!(omp(&CVec::zeros(8), &d, 9).is_err());
    }

    #[test]
    fn omp_tie_breaks_low_index() {
        let d = build_far_dictionary(&half_wave_ula(8), 8).unwrap();
        let y = d.atoms.column(1) + d.atoms.column(4);
        let code = omp(&y, &d, 1).unwrap();
        assert_eq!(code.support, vec![1]);
    }
}
