use xlmimo_core::beamforming::*;
use xlmimo_core::geometry::*;
use xlmimo_core::linalg::complex_normal;
use xlmimo_core::nn::Mlp;
use xlmimo_core::{rng, CMat, Complex64};

fn channels(n: usize, k: usize, count: usize, offset: u64) -> Vec<MultiUserChannel> {
    let lambda = 3e8 / 28e9;
    let g = build_ula(n, lambda / 2.0, lambda).unwrap();
    let cfg = ChannelConfig { n_users: k, distance_range: (2.0, 20.0), ..Default::default() };
    (0..count as u64)
        .map(|i| {
            let h = sample_channel(&g, &cfg, offset + i).unwrap().matrix.transpose();
            MultiUserChannel::new(h, 0.1, 1.0).unwrap()
        })
        .collect()
}

fn random_channel(k: usize, n: usize, seed: u64) -> MultiUserChannel {
    let mut r = rng::stream(seed, 3);
    MultiUserChannel::new(CMat::from_fn(k, n, |_, _| complex_normal(&mut r)), 0.5, 2.0).unwrap()
}

fn leakage(ch: &MultiUserChannel, bf: &Beamformer) -> f64 {
    let a = &ch.h * &bf.w;
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if i != j {
                worst = worst.max(a[(i, j)].norm() / a[(i, i)].norm());
            }
        }
    }
    worst
}

#[test]
fn zero_forcing_nulls_interference() {
    for seed in 0..5 {
        let ch = random_channel(4, 16, seed);
        let bf = zf_beamformer(&ch).unwrap();
        assert!(leakage(&ch, &bf) <= 1e-10);
        assert!((bf.power() / 2.0 - 1.0).abs() < 1e-12);
        let a = &ch.h * &bf.w;
        let direct: f64 = (0..4).map(|k| (1.0 + a[(k, k)].norm_sqr() / 0.5).log2()).sum();
        assert!((sum_rate(&ch, &bf) - direct).abs() < 1e-9);
    }
    let eye = MultiUserChannel::new(CMat::identity(2, 2), 1.0, 2.0).unwrap();
    assert!((zf_beamformer(&eye).unwrap().w - CMat::identity(2, 2)).norm() < 1e-12);

    let mut dup = random_channel(3, 8, 9);
    let first = dup.h.row(0).into_owned();
    dup.h.set_row(1, &first);
    assert!(matches!(zf_beamformer(&dup), Err(xlmimo_core::Error::IllConditioned { .. })));
    assert!(zf_beamformer(&random_channel(5, 4, 1)).is_err());
}

#[test]
fn mrt_on_orthogonal_users_matches_zf() {
    let mut h = CMat::zeros(3, 6);
    for k in 0..3 {
        h[(k, 2 * k)] = Complex64::new(0.0, 1.5 + k as f64);
        h[(k, 2 * k + 1)] = Complex64::new(0.7, -0.2);
    }
    let ch = MultiUserChannel::new(h, 0.3, 3.0).unwrap();
    let (mrt, zf) = (mrt_beamformer(&ch).unwrap(), zf_beamformer(&ch).unwrap());
    assert!(leakage(&ch, &mrt) < 1e-12);
    assert!((mrt.power() - 3.0).abs() < 1e-12);
    for k in 0..3 {
        let c = mrt.w.column(k).dotc(&zf.w.column(k));
        assert!((c.norm() - mrt.w.column(k).norm() * zf.w.column(k).norm()).abs() < 1e-9);
    }
    let zero = MultiUserChannel::new(CMat::zeros(2, 4), 1.0, 1.0).unwrap();
    assert!(mrt_beamformer(&zero).is_err());
}

#[test]
fn sum_rate_reference_points() {
    let h = CMat::from_element(1, 1, Complex64::new(2.0, 0.0));
    let ch = MultiUserChannel::new(h, 4.0, 1.0).unwrap();
    let bf = Beamformer { w: CMat::from_element(1, 1, Complex64::new(0.0, 1.0)) };
    assert!((sum_rate(&ch, &bf) - 1.0).abs() < 1e-15);
    assert_eq!(sum_rate(&ch, &Beamformer { w: CMat::zeros(1, 1) }), 0.0);
}

#[test]
fn wmmse_is_monotone_and_beats_linear_baselines() {
    for ch in channels(64, 8, 20, 500) {
        let out = wmmse(&ch, 30, 1e-10).unwrap();
        for w in out.rates.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "rate fell from {} to {}", w[0], w[1]);
        }
        let zf = sum_rate(&ch, &zf_beamformer(&ch).unwrap());
        let mrt = sum_rate(&ch, &mrt_beamformer(&ch).unwrap());
        let last = *out.rates.last().unwrap();
        assert!(last >= zf.max(mrt) - 1e-9);
        assert!(out.beamformer.power() <= ch.power_budget * (1.0 + 1e-9));
        assert!((sum_rate(&ch, &out.beamformer) - last).abs() < 1e-9);
    }
}

#[test]
fn wmmse_single_user_is_mrt() {
    let ch = random_channel(1, 12, 4);
    let out = wmmse(&ch, 20, 1e-12).unwrap();
    let mrt = mrt_beamformer(&ch).unwrap();
    let align = out.beamformer.w.column(0).dotc(&mrt.w.column(0)).norm() / ch.power_budget;
    assert!((align - 1.0).abs() < 1e-6);
    assert!((out.beamformer.power() / ch.power_budget - 1.0).abs() < 1e-6);
}

fn random_model(n: usize, seed: u64) -> NcModel {
    let mut net = Mlp::init(&[2 * n, 3 * n, 2 * n], 0.1, 0.7, seed).unwrap();
    let mut r = rng::stream(seed, 1);
    for l in net.layers_mut() {
        for b in l.bias.iter_mut() {
            *b = complex_normal(&mut r).re * 0.1;
        }
    }
    NcModel::new(net, BasisKind::Zf).unwrap()
}

#[test]
fn calibration_is_permutation_equivariant() {
    let model = random_model(16, 1);
    for seed in 0..10 {
        let ch = random_channel(5, 16, seed);
        let perm = [3, 0, 4, 2, 1];
        let permuted = ch.permute_users(&perm);
        let direct = nc_calibrate(&model, &permuted).unwrap();
        let after = nc_calibrate(&model, &ch).unwrap().permute_users(&perm);
        assert_eq!(direct.h, after.h);

        let w = nc_beamformer(&model, &ch).unwrap();
        let wp = nc_beamformer(&model, &permuted).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert!((wp.w.column(j) - w.w.column(i)).norm() < 1e-12);
        }
        assert!((sum_rate(&permuted, &wp) - sum_rate(&ch, &w)).abs() < 1e-12);
        assert!(w.power() <= ch.power_budget * (1.0 + 1e-9));
    }
}

#[test]
fn identity_calibration_reproduces_zero_forcing() {
    let ch = random_channel(4, 10, 2);
    let id = NcModel::identity(10, BasisKind::Zf).unwrap();
    assert_eq!(nc_calibrate(&id, &ch).unwrap().h, ch.h);
    assert_eq!(nc_beamformer(&id, &ch).unwrap(), zf_beamformer(&ch).unwrap());
    let fresh = NcModel::init(10, &[20], 0.9, 0.1, BasisKind::Zf, 3).unwrap();
    assert!((nc_beamformer(&fresh, &ch).unwrap().w - zf_beamformer(&ch).unwrap().w).norm() < 1e-12);
    for k in [4, 9] {
        assert!(nc_beamformer(&id, &random_channel(k, 10, k as u64)).is_ok());
    }
}

#[test]
fn training_improves_on_zf_and_is_reproducible() {
    let data = channels(16, 4, 64, 0);
    let cfg = NcTrainConfig { epochs: 3, batch_size: 8, lr: 1e-3, hidden: vec![32], ..Default::default() };
    let a = train_nc(&data, &cfg).unwrap();
    let b = train_nc(&data, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.objective_history.len(), 3);
    let mean = |f: &dyn Fn(&MultiUserChannel) -> f64| data.iter().map(f).sum::<f64>() / data.len() as f64;
    let zf = mean(&|c| sum_rate(c, &zf_beamformer(c).unwrap()));
    let nc = mean(&|c| sum_rate(c, &nc_beamformer(&a.model, c).unwrap()));
    assert!(nc >= zf, "trained {nc} vs zf {zf}");
}

#[test]
fn model_trained_on_six_users_runs_on_ten() {
    let data = channels(16, 6, 16, 0);
    let cfg = NcTrainConfig { epochs: 1, hidden: vec![16], ..Default::default() };
    let model = train_nc(&data, &cfg).unwrap().model;
    for ch in channels(16, 10, 3, 900) {
        let bf = nc_beamformer(&model, &ch).unwrap();
        assert_eq!(bf.w.shape(), (16, 10));
    }
}

#[test]
fn nc_model_round_trip() {
    let model = random_model(6, 5);
    let mut buf = Vec::new();
    write_nc(&mut buf, &model).unwrap();
    assert_eq!(read_nc(buf.as_slice()).unwrap(), model);
    buf.truncate(buf.len() - 3);
    assert!(read_nc(buf.as_slice()).is_err());
}
