use proptest::prelude::*;
use xlmimo_core::dictionary::*;
use xlmimo_core::geometry::*;
use xlmimo_core::{CMat, CVec, Complex64};

fn ula(n: usize) -> ArrayGeometry {
    build_ula(n, 0.005, 0.01).unwrap()
}

#[test]
fn far_dictionary_is_unitary() {
    let d = build_far_dictionary(&ula(16), 16).unwrap();
    let gram = d.atoms.adjoint() * &d.atoms;
    assert!((gram - CMat::identity(16, 16)).norm() < 1e-10);
    assert!(mutual_coherence(&d).unwrap() <= 1e-10);
}

#[test]
fn polar_dictionary_shape_and_norms() {
    let g = ula(64);
    let d = build_polar_dictionary(&g, 64, 3, 1.0).unwrap();
    assert_eq!(d.len(), 256);
    assert_eq!(d.atoms.ncols(), d.labels.len());
    for col in d.atoms.column_iter() {
        assert!((col.norm() - 1.0).abs() < 1e-12);
    }
    let rings = d.ring_distances();
    assert!(rings.windows(2).all(|w| w[1] < w[0]));
    let far = build_far_dictionary(&g, 64).unwrap();
    assert!(mutual_coherence(&d).unwrap() >= mutual_coherence(&far).unwrap());
}

#[test]
fn zero_rings_matches_far_dictionary() {
    let g = ula(12);
    let a = build_polar_dictionary(&g, 20, 0, 0.5).unwrap();
    let b = build_far_dictionary(&g, 20).unwrap();
    assert_eq!(a.atoms, b.atoms);
    assert_eq!(a.labels, b.labels);
}

#[test]
fn omp_recovers_far_pair_exactly() {
    let d = build_far_dictionary(&ula(16), 16).unwrap();
    let (c3, c11) = (Complex64::new(1.5, -0.5), Complex64::new(-0.25, 2.0));
    let y: CVec = d.atoms.column(3) * c3 + d.atoms.column(11) * c11;
    let code = omp(&y, &d, 2).unwrap();
    let mut pairs: Vec<_> = code
        .support
        .iter()
        .copied()
        .zip(code.coefficients.iter().copied())
        .collect();
    pairs.sort_by_key(|p| p.0);
    assert_eq!(pairs[0].0, 3);
    assert_eq!(pairs[1].0, 11);
    assert!((pairs[0].1 - c3).norm() < 1e-10 && (pairs[1].1 - c11).norm() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn omp_exact_support_on_incoherent_atoms(
        picks in proptest::collection::btree_set(0usize..20, 1..=3),
        mags in proptest::collection::vec(0.5f64..2.0, 3),
        phases in proptest::collection::vec(-3.1f64..3.1, 3),
    ) {
        // 20 angles on 32 elements keeps every atom pair below 0.2 coherence
        let d = build_far_dictionary(&ula(32), 20).unwrap();
        prop_assert!(mutual_coherence(&d).unwrap() < 0.5);
        let support: Vec<usize> = picks.into_iter().collect();
        let mut y = CVec::zeros(32);
        for (i, &s) in support.iter().enumerate() {
            y += d.atoms.column(s) * Complex64::from_polar(mags[i], phases[i]);
        }
        let code = omp(&y, &d, support.len()).unwrap();
        let mut found = code.support.clone();
        found.sort_unstable();
        prop_assert_eq!(found, support);
        prop_assert!((code.synthesize(&d) - &y).norm() < 1e-9);
    }
}
