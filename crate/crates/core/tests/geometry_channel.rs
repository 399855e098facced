use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlmimo_core::geometry::*;
use xlmimo_core::{CVec, Complex64};

fn random_geometry(rng: &mut ChaCha8Rng) -> ArrayGeometry {
    let lambda = rng.random_range(0.005..0.1);
    let spacing = lambda * rng.random_range(0.3..1.0);
    if rng.random_bool(0.5) {
        build_ula(rng.random_range(2..128), spacing, lambda).unwrap()
    } else {
        build_upa(
            rng.random_range(2..12),
            rng.random_range(1..12),
            spacing,
            lambda,
        )
        .unwrap()
    }
}

#[test]
fn far_field_limit_and_near_field_curvature() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut curved = 0;
    for _ in 0..100 {
        let g = random_geometry(&mut rng);
        let az = rng.random_range(-1.4..1.4);
        let el = if g.kind() == ArrayKind::Upa {
            rng.random_range(-0.8..0.8)
        } else {
            0.0
        };
        let r = rayleigh_distance(&g);
        let far = steer_far(&g, az, el);
        let limit = steer_near(&g, az, el, 1e6 * r).unwrap();
        assert!(
            (&limit - &far).norm() <= 1e-3,
            "far-field limit off by {}",
            (&limit - &far).norm()
        );
        let close = steer_near(&g, az, el, 0.05 * r).unwrap();
        if (&close - &far).norm() >= 1e-2 {
            curved += 1;
        }
    }
    assert!(curved > 0);
}

#[test]
fn rayleigh_distance_examples() {
    assert_eq!(rayleigh_distance(&build_ula(1, 0.005, 0.01).unwrap()), 0.0);
    let r = rayleigh_distance(&build_ula(101, 0.005, 0.01).unwrap());
    assert!((r - 50.0).abs() < 1e-9);
    let doubled = rayleigh_distance(&build_ula(201, 0.005, 0.01).unwrap());
    assert!((doubled / r - 4.0).abs() < 1e-9);
}

#[test]
fn steer_far_two_element_endfire() {
    let lambda = 0.01;
    let g = build_ula(2, lambda / 2.0, lambda).unwrap();
    let a = steer_far(&g, std::f64::consts::FRAC_PI_2, 0.0);
    let s = 1.0 / 2f64.sqrt();
    let expect = [
        Complex64::from_polar(s, std::f64::consts::FRAC_PI_2),
        Complex64::from_polar(s, -std::f64::consts::FRAC_PI_2),
    ];
    for (z, e) in a.iter().zip(expect) {
        assert!((z - e).norm() < 1e-12);
    }
}

#[test]
fn reconstruction_from_paths() {
    let lambda = 0.0107;
    let g = build_ula(64, lambda / 2.0, lambda).unwrap();
    for non_stationary in [false, true] {
        let cfg = ChannelConfig {
            n_users: 4,
            paths_per_user: 4,
            non_stationary,
            visible_region_len: if non_stationary { 24 } else { 0 },
            ..Default::default()
        };
        let ch = sample_channel(&g, &cfg, 5).unwrap();
        for k in 0..cfg.n_users {
            let mut sum = CVec::zeros(64);
            for p in &ch.paths[k] {
                sum += p.steering(&g).unwrap() * p.gain;
            }
            let h = ch.user(k);
            assert!((&h - &sum).norm() <= 1e-12 * h.norm());
        }
    }
}

#[test]
fn gaussian_gains_normalize_power() {
    let lambda = 0.0107;
    let g = build_ula(32, lambda / 2.0, lambda).unwrap();
    let cfg = ChannelConfig {
        n_users: 1,
        ..Default::default()
    };
    let draws = 10_000;
    let mean: f64 = (0..draws)
        .map(|s| sample_channel(&g, &cfg, s).unwrap().user(0).norm_squared() / 32.0)
        .sum::<f64>()
        / draws as f64;
    assert!((0.9..=1.1).contains(&mean), "mean power {mean}");
}

#[test]
fn single_far_path_is_scaled_steering() {
    let lambda = 0.01;
    let g = build_ula(16, lambda / 2.0, lambda).unwrap();
    let cfg = ChannelConfig {
        n_users: 3,
        paths_per_user: 1,
        near_fraction: 0.0,
        gain_model: GainModel::Unit,
        ..Default::default()
    };
    let ch = sample_channel(&g, &cfg, 9).unwrap();
    for k in 0..3 {
        let p = &ch.paths[k][0];
        assert!(!p.is_near());
        assert!((p.gain.norm() - 4.0).abs() < 1e-12);
        let a = steer_far(&g, p.azimuth, p.elevation) * (p.gain / 4.0) * Complex64::new(4.0, 0.0);
        assert!((&ch.user(k) - &a).norm() < 1e-12);
    }
}

#[test]
fn near_paths_inside_rayleigh_distance() {
    let lambda = 0.0107;
    let g = build_ula(64, lambda / 2.0, lambda).unwrap();
    let cfg = ChannelConfig {
        n_users: 2,
        near_fraction: 1.0,
        distance_range: (2.0, 0.9 * rayleigh_distance(&g)),
        ..Default::default()
    };
    let ch = sample_channel(&g, &cfg, 1).unwrap();
    for p in ch.paths.iter().flatten() {
        let d = p.distance().unwrap();
        assert!(d.is_finite() && (2.0..=cfg.distance_range.1).contains(&d));
    }
    assert_eq!(ch, sample_channel(&g, &cfg, 1).unwrap());
}

#[test]
fn visible_region_longer_than_array_rejected() {
    let g = build_ula(8, 0.005, 0.01).unwrap();
    let cfg = ChannelConfig {
        non_stationary: true,
        visible_region_len: 9,
        ..Default::default()
    };
    assert!(sample_channel(&g, &cfg, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn element_permutation_permutes_steering(
        n in 2usize..24,
        az in -1.5f64..1.5,
        el in -0.7f64..0.7,
        dist in 0.2f64..30.0,
        seed in any::<u64>(),
    ) {
        let lambda = 0.01;
        let g = build_upa(n, 2, lambda / 2.0, lambda).unwrap();
        let mut perm: Vec<usize> = (0..g.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let shuffled: Vec<[f64; 3]> = perm.iter().map(|&i| g.positions()[i]).collect();
        let gp = ArrayGeometry::from_positions(shuffled, lambda, ArrayKind::Upa).unwrap();
        let (far, farp) = (steer_far(&g, az, el), steer_far(&gp, az, el));
        let (near, nearp) = (steer_near(&g, az, el, dist).unwrap(), steer_near(&gp, az, el, dist).unwrap());
        for (j, &i) in perm.iter().enumerate() {
            prop_assert!((farp[j] - far[i]).norm() < 1e-12);
            prop_assert!((nearp[j] - near[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn steering_vectors_unit_norm(n in 1usize..64, az in -1.5f64..1.5, dist in 0.1f64..100.0) {
        let g = build_ula(n, 0.005, 0.01).unwrap();
        let a = steer_near(&g, az, 0.0, dist).unwrap();
        prop_assert!((a.norm() - 1.0).abs() < 1e-12);
        for z in a.iter() {
            prop_assert!((z.norm() - 1.0 / (n as f64).sqrt()).abs() < 1e-12);
        }
    }
}
