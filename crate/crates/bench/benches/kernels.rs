use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use xlmimo_core::beamforming::{nc_beamformer, wmmse, zf_beamformer, MultiUserChannel, NcModel, BasisKind};
use xlmimo_core::fpn::{default_gamma, fpn_iteration, fpn_train_step, unfolded_train_step, FpnModel, FpnSample};
use xlmimo_core::geometry::{build_ula, sample_channel, steer_near, ChannelConfig};
use xlmimo_core::measurement::{build_sensing, observe, snr_to_noise_var, SensingKind};
use xlmimo_core::CVec;

const LAMBDA: f64 = 0.0107;

fn steering(c: &mut Criterion) {
    let mut group = c.benchmark_group("steer_near");
    for n in [64, 256, 1024] {
        let g = build_ula(n, LAMBDA / 2.0, LAMBDA).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| {
            b.iter(|| steer_near(g, black_box(0.3), 0.0, black_box(5.0)).unwrap())
        });
    }
    group.finish();
}

fn estimation_sample(n: usize, m: usize) -> FpnSample {
    let g = build_ula(n, LAMBDA / 2.0, LAMBDA).unwrap();
    let spec = build_sensing(&g, m, SensingKind::UnitModulus, 1).unwrap();
    let noise = snr_to_noise_var(5.0, spec.signal_power());
    let spec = std::sync::Arc::new(spec.with_noise_var(noise));
    let h = sample_channel(&g, &ChannelConfig::default(), 2).unwrap().user(0);
    let y = observe(&spec, &h, 3).unwrap();
    FpnSample { spec, y, h }
}

fn fpn(c: &mut Criterion) {
    let s = estimation_sample(64, 32);
    let model = FpnModel::init(64, 32, &[256], default_gamma(&s.spec), 0.9, 0).unwrap();
    let x = CVec::zeros(64);
    c.bench_function("fpn_iteration/n64_m32", |b| {
        b.iter(|| fpn_iteration(&model, &s.spec, &s.y, black_box(&x)).unwrap())
    });
    let mut group = c.benchmark_group("train_step");
    for depth in [8, 64] {
        group.bench_with_input(BenchmarkId::new("implicit", depth), &depth, |b, &d| {
            b.iter(|| fpn_train_step(&model, &s, f64::MIN_POSITIVE, d, 1).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("unfolded", depth), &depth, |b, &d| {
            b.iter(|| unfolded_train_step(&model, &s, d).unwrap())
        });
    }
    group.finish();
}

fn beamforming(c: &mut Criterion) {
    let g = build_ula(64, LAMBDA / 2.0, LAMBDA).unwrap();
    let cfg = ChannelConfig { n_users: 8, ..ChannelConfig::default() };
    let h = sample_channel(&g, &cfg, 4).unwrap().matrix.transpose();
    let ch = MultiUserChannel::new(h, 0.1, 1.0).unwrap();
    let nc = NcModel::init(64, &[256], 0.9, 0.1, BasisKind::Zf, 0).unwrap();
    c.bench_function("zf/n64_k8", |b| b.iter(|| zf_beamformer(black_box(&ch)).unwrap()));
    c.bench_function("nc/n64_k8", |b| b.iter(|| nc_beamformer(&nc, black_box(&ch)).unwrap()));
    let mut group = c.benchmark_group("wmmse");
    group.sample_size(10);
    group.bench_function("n64_k8_100iters", |b| b.iter(|| wmmse(black_box(&ch), 100, 1e-10).unwrap()));
    group.finish();
}

criterion_group!(benches, steering, fpn, beamforming);
criterion_main!(benches);
