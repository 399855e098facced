//! Subcommand implementations. Each command has an in-memory core (usable
//! from tests) and a thin file-level wrapper.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use xlmimo_core::beamforming::{
    mrt_beamformer, nc_beamformer, read_nc, sum_rate, train_nc, wmmse, write_nc, zf_beamformer, BasisKind,
    MultiUserChannel, NcModel, NcTrainConfig,
};
use xlmimo_core::fpn::{
    default_gamma, estimate_ls, fpn_train_step, nmse_ratio, oamp_soft, read_fpn, solve_fixed_point, train_fpn,
    unfolded_train_step, write_fpn, FpnModel, FpnSample, FpnTrainConfig, DEFAULT_DAMPING, DEFAULT_SLOPE,
};
use xlmimo_core::measurement::Quantizer;
use xlmimo_core::rng::derive;
use xlmimo_core::CVec;

use crate::config::{ExperimentConfig, Task};
use crate::dataset::{sha256_hex, Dataset};
use crate::error::{CliError, CliResult};
use crate::metrics::{median_runtime_ms, save_rows, MetricName, MetricsRow};
use crate::scenario::{self, Split, TAG_SENSING, TAG_SENSING_RESAMPLED, TAG_TEST};

/// Soft-threshold levels searched for the `oamp_soft` baseline.
pub const SOFT_LAMBDA_GRID: [f64; 7] = [0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5];
pub const SOFT_MAX_ITER: usize = 500;
pub const WMMSE_ITERS: usize = 100;
pub const WMMSE_BISECT_TOL: f64 = 1e-10;
pub const BENCH_DEPTHS: [usize; 4] = [8, 16, 32, 64];
/// Instances per timed run; runtimes are reported per instance.
const TIMED_INSTANCES: usize = 5;

/// Shifts `ood` applies when none are requested explicitly.
pub const DEFAULT_SHIFTS: &str = "snr_delta=+5,snr_delta=-5,near_fraction=0.8,paths_per_user=6,resample_sensing,quantizer=one_bit";

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn nmse_db(mean_ratio: f64) -> f64 {
    10.0 * mean_ratio.max(1e-30).log10()
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn mean_iterations(its: &[usize]) -> usize {
    if its.is_empty() {
        0
    } else {
        (its.iter().sum::<usize>() as f64 / its.len() as f64).round() as usize
    }
}

/// Per-instance median runtime of `f` over the first few items.
fn per_instance_ms<T: Sync, R>(items: &[T], f: impl Fn(&T) -> R) -> f64 {
    let timed = &items[..items.len().min(TIMED_INSTANCES)];
    if timed.is_empty() {
        return 0.0;
    }
    median_runtime_ms(|| timed.iter().map(&f).count()) / timed.len() as f64
}

// ---------------------------------------------------------------- gen

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenSummary {
    pub count: usize,
    pub sha256: String,
}

pub fn cmd_gen(cfg: &ExperimentConfig, seed: u64, split: Split, out: &Path) -> CliResult<GenSummary> {
    let ds = scenario::generate_split(cfg, seed, split)?;
    let bytes = ds.to_bytes();
    std::fs::write(out, &bytes).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    Ok(GenSummary { count: ds.len(), sha256: sha256_hex(&bytes) })
}

// ---------------------------------------------------------------- training

pub fn fpn_train_config(cfg: &ExperimentConfig, seed: u64) -> FpnTrainConfig {
    let t = &cfg.training;
    FpnTrainConfig {
        epochs: t.epochs,
        batch_size: t.batch,
        lr: t.lr,
        tol: t.tol,
        max_iter: t.max_iter,
        neumann_k: t.neumann_k,
        lip_budget: t.lip_budget,
        hidden: t.hidden.clone(),
        damping: DEFAULT_DAMPING,
        slope: DEFAULT_SLOPE,
        seed,
        gamma: None,
    }
}

pub fn nc_train_config(cfg: &ExperimentConfig, seed: u64) -> NcTrainConfig {
    let t = &cfg.training;
    NcTrainConfig {
        epochs: t.epochs,
        batch_size: t.batch,
        lr: t.lr,
        hidden: t.hidden.clone(),
        seed,
        basis: BasisKind::Zf,
        ..NcTrainConfig::default()
    }
}

fn loss_csv_path(model_out: &Path) -> PathBuf {
    let mut name = model_out.as_os_str().to_owned();
    name.push(".loss.csv");
    PathBuf::from(name)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub model_path: PathBuf,
    pub loss_path: PathBuf,
    pub history: Vec<f64>,
    pub model_sha256: String,
}

pub fn cmd_train_fpn(cfg: &ExperimentConfig, seed: u64, dataset: &Path, out: &Path) -> CliResult<TrainSummary> {
    if cfg.task() != Task::Estimation {
        return Err(CliError::Config(format!("train-fpn needs an estimation scenario, '{}' has no measurement block", cfg.scenario)));
    }
    let ds = Dataset::load(dataset)?;
    let samples = scenario::fpn_samples(cfg, &ds)?;
    let report = train_fpn(&samples, &fpn_train_config(cfg, seed))?;
    let mut bytes = Vec::new();
    write_fpn(&mut bytes, &report.model)?;
    std::fs::write(out, &bytes).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let loss_path = loss_csv_path(out);
    let mut w = csv::Writer::from_writer(create(&loss_path)?);
    w.write_record(["epoch", "nmse", "lipschitz"])?;
    for (e, (loss, lip)) in report.loss_history.iter().zip(&report.lipschitz_history).enumerate() {
        w.write_record([(e + 1).to_string(), loss.to_string(), lip.to_string()])?;
    }
    w.flush()?;
    Ok(TrainSummary {
        model_path: out.to_path_buf(),
        loss_path,
        history: report.loss_history,
        model_sha256: sha256_hex(&bytes),
    })
}

pub fn training_channels(cfg: &ExperimentConfig, ds: &Dataset) -> CliResult<Vec<MultiUserChannel>> {
    scenario::channels(cfg, ds, cfg.eval.snr_grid[0])
}

pub fn cmd_train_nc(cfg: &ExperimentConfig, seed: u64, dataset: &Path, out: &Path) -> CliResult<TrainSummary> {
    if cfg.task() != Task::Beamforming {
        return Err(CliError::Config(format!("train-nc needs a beamforming scenario, '{}' has a measurement block", cfg.scenario)));
    }
    let ds = Dataset::load(dataset)?;
    let chans = training_channels(cfg, &ds)?;
    let report = train_nc(&chans, &nc_train_config(cfg, seed))?;
    let mut bytes = Vec::new();
    write_nc(&mut bytes, &report.model)?;
    std::fs::write(out, &bytes).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let loss_path = loss_csv_path(out);
    let mut w = csv::Writer::from_writer(create(&loss_path)?);
    w.write_record(["epoch", "sum_rate"])?;
    for (e, rate) in report.objective_history.iter().enumerate() {
        w.write_record([(e + 1).to_string(), rate.to_string()])?;
    }
    w.flush()?;
    Ok(TrainSummary {
        model_path: out.to_path_buf(),
        loss_path,
        history: report.objective_history,
        model_sha256: sha256_hex(&bytes),
    })
}

// ---------------------------------------------------------------- evaluation

pub fn check_fpn_compat(model: &FpnModel, samples: &[FpnSample]) -> CliResult<()> {
    if let Some(s) = samples.first() {
        if model.n != s.spec.n() || model.m != s.spec.m() {
            return Err(CliError::Data(format!(
                "model expects N={}, M={} but the dataset has N={}, M={}",
                model.n,
                model.m,
                s.spec.n(),
                s.spec.m()
            )));
        }
    }
    Ok(())
}

pub fn check_nc_compat(model: &NcModel, n: usize) -> CliResult<()> {
    if model.antennas() != n {
        return Err(CliError::Data(format!(
            "model calibrates {} antennas but the dataset has {n}",
            model.antennas()
        )));
    }
    Ok(())
}

/// NMSE (dB of the mean linear error) of a method over the samples, with the
/// iteration counts it used.
fn score_estimator<F>(samples: &[FpnSample], f: F) -> CliResult<(f64, usize)>
where
    F: Fn(&FpnSample) -> CliResult<(CVec, usize)> + Sync + Send,
{
    let results: Vec<CliResult<(f64, usize)>> = samples
        .par_iter()
        .map(|s| f(s).map(|(h, it)| (nmse_ratio(&h, &s.h), it)))
        .collect();
    let mut ratios = Vec::with_capacity(samples.len());
    let mut its = Vec::with_capacity(samples.len());
    for r in results {
        let (ratio, it) = r?;
        ratios.push(ratio);
        its.push(it);
    }
    Ok((nmse_db(mean(ratios)), mean_iterations(&its)))
}

fn soft_gamma(s: &FpnSample) -> f64 {
    default_gamma(&s.spec)
}

pub fn run_ls(s: &FpnSample) -> CliResult<(CVec, usize)> {
    Ok((estimate_ls(&s.spec, &s.y)?, 0))
}

pub fn run_soft(s: &FpnSample, lambda: f64, tol: f64) -> CliResult<(CVec, usize)> {
    let out = oamp_soft(&s.spec, &s.y, lambda, soft_gamma(s), tol, SOFT_MAX_ITER)?;
    Ok((out.h_hat, out.trace.iterations_used))
}

pub fn run_fpn(model: &FpnModel, s: &FpnSample, tol: f64, max_iter: usize) -> CliResult<(CVec, usize)> {
    let out = solve_fixed_point(model, &s.spec, &s.y, &CVec::zeros(model.n), tol, max_iter)?;
    Ok((out.h_hat, out.trace.iterations_used))
}

/// Best soft-threshold level on `samples` and its NMSE in dB.
pub fn best_soft_lambda(samples: &[FpnSample], tol: f64) -> CliResult<(f64, f64, usize)> {
    let mut best = (f64::NAN, f64::INFINITY, 0);
    for &lambda in &SOFT_LAMBDA_GRID {
        let (db, it) = score_estimator(samples, |s| run_soft(s, lambda, tol))?;
        if db < best.1 {
            best = (lambda, db, it);
        }
    }
    Ok(best)
}

pub fn eval_estimation(
    cfg: &ExperimentConfig,
    seed: u64,
    samples: &[FpnSample],
    model: Option<&FpnModel>,
) -> CliResult<Vec<MetricsRow>> {
    let block = cfg.measurement_block()?;
    let t = &cfg.training;
    let row = |method: &str, value: f64, runtime_ms: f64, iterations: usize| MetricsRow {
        experiment: cfg.scenario.clone(),
        method: method.into(),
        n_antennas: cfg.antennas(),
        n_users: 1,
        snr_db: block.snr_db,
        metric_name: MetricName::NmseDb,
        value,
        runtime_ms,
        iterations,
        seed,
    };
    let mut rows = Vec::new();

    let (ls_db, _) = score_estimator(samples, run_ls)?;
    rows.push(row("ls", ls_db, per_instance_ms(samples, run_ls), 0));

    let (lambda, soft_db, soft_it) = best_soft_lambda(samples, t.tol)?;
    rows.push(row("oamp_soft", soft_db, per_instance_ms(samples, |s| run_soft(s, lambda, t.tol)), soft_it));

    if let Some(model) = model {
        check_fpn_compat(model, samples)?;
        let (db, it) = score_estimator(samples, |s| run_fpn(model, s, t.tol, t.max_iter))?;
        rows.push(row("fpn", db, per_instance_ms(samples, |s| run_fpn(model, s, t.tol, t.max_iter)), it));
    }
    Ok(rows)
}

fn mean_rate<F>(chans: &[MultiUserChannel], f: F) -> CliResult<f64>
where
    F: Fn(&MultiUserChannel) -> CliResult<f64> + Sync + Send,
{
    let rates: Vec<CliResult<f64>> = chans.par_iter().map(f).collect();
    let rates = rates.into_iter().collect::<CliResult<Vec<_>>>()?;
    Ok(mean(rates))
}

pub fn zf_rate(ch: &MultiUserChannel) -> CliResult<f64> {
    Ok(sum_rate(ch, &zf_beamformer(ch)?))
}

pub fn mrt_rate(ch: &MultiUserChannel) -> CliResult<f64> {
    Ok(sum_rate(ch, &mrt_beamformer(ch)?))
}

pub fn wmmse_rate(ch: &MultiUserChannel) -> CliResult<f64> {
    let out = wmmse(ch, WMMSE_ITERS, WMMSE_BISECT_TOL)?;
    Ok(*out.rates.last().expect("at least one iteration"))
}

pub fn nc_rate(model: &NcModel, ch: &MultiUserChannel) -> CliResult<f64> {
    Ok(sum_rate(ch, &nc_beamformer(model, ch)?))
}

pub fn eval_beamforming(
    cfg: &ExperimentConfig,
    seed: u64,
    ds: &Dataset,
    model: Option<&NcModel>,
) -> CliResult<Vec<MetricsRow>> {
    if let Some(m) = model {
        check_nc_compat(m, ds.n)?;
    }
    let mut rows = Vec::new();
    for k in cfg.user_counts() {
        for &snr in &cfg.eval.snr_grid {
            let chans = scenario::channels(cfg, ds, snr)?
                .iter()
                .map(|c| c.first_users(k))
                .collect::<xlmimo_core::Result<Vec<_>>>()?;
            let row = |method: &str, value: f64, runtime_ms: f64, iterations: usize| MetricsRow {
                experiment: cfg.scenario.clone(),
                method: method.into(),
                n_antennas: ds.n,
                n_users: k,
                snr_db: snr,
                metric_name: MetricName::SumRate,
                value,
                runtime_ms,
                iterations,
                seed,
            };
            rows.push(row("zf", mean_rate(&chans, zf_rate)?, per_instance_ms(&chans, zf_rate), 0));
            rows.push(row("mrt", mean_rate(&chans, mrt_rate)?, per_instance_ms(&chans, mrt_rate), 0));
            rows.push(row("wmmse", mean_rate(&chans, wmmse_rate)?, per_instance_ms(&chans, wmmse_rate), WMMSE_ITERS));
            if let Some(m) = model {
                let f = |c: &MultiUserChannel| nc_rate(m, c);
                rows.push(row("nc", mean_rate(&chans, f)?, per_instance_ms(&chans, f), 0));
            }
        }
    }
    Ok(rows)
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    seed: u64,
    dataset: &Path,
    model: Option<&Path>,
    out: Option<&Path>,
) -> CliResult<Vec<MetricsRow>> {
    let ds = Dataset::load(dataset)?;
    let rows = match cfg.task() {
        Task::Estimation => {
            let samples = scenario::fpn_samples(cfg, &ds)?;
            let model = model.map(|p| read_fpn(open(p)?).map_err(CliError::from)).transpose()?;
            eval_estimation(cfg, seed, &samples, model.as_ref())?
        }
        Task::Beamforming => {
            scenario::check_dims(cfg, &ds)?;
            let model = model.map(|p| read_nc(open(p)?).map_err(CliError::from)).transpose()?;
            eval_beamforming(cfg, seed, &ds, model.as_ref())?
        }
    };
    emit_rows(out, &rows)?;
    Ok(rows)
}

// ---------------------------------------------------------------- OOD

#[derive(Debug, Clone, PartialEq)]
pub enum Shift {
    SnrDelta(f64),
    NearFraction(f64),
    PathsPerUser(usize),
    ResampleSensing,
    Quantizer(Quantizer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedShift {
    pub name: String,
    pub shift: Shift,
}

fn shift_value<T: std::str::FromStr>(name: &str, value: Option<&str>) -> CliResult<T> {
    value
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Config(format!("shift '{name}' needs a numeric value")))
}

pub fn parse_shifts(list: &str) -> CliResult<Vec<NamedShift>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (key, value) = match item.split_once('=') {
                Some((k, v)) => (k.trim(), Some(v.trim())),
                None => (item, None),
            };
            let shift = match key {
                "snr_delta" => Shift::SnrDelta(shift_value(item, value)?),
                "near_fraction" => Shift::NearFraction(shift_value(item, value)?),
                "paths_per_user" => Shift::PathsPerUser(shift_value(item, value)?),
                "resample_sensing" if value.is_none() => Shift::ResampleSensing,
                "quantizer" => match value {
                    Some("one_bit") => Shift::Quantizer(Quantizer::OneBit),
                    Some("none") => Shift::Quantizer(Quantizer::None),
                    _ => return Err(CliError::Config(format!("shift '{item}': quantizer must be one_bit or none"))),
                },
                _ => return Err(CliError::Config(format!("unknown shift '{item}'"))),
            };
            Ok(NamedShift { name: item.to_string(), shift })
        })
        .collect()
}

/// Test split regenerated under `shift` (or matched when `None`). Channel and
/// noise seeds are those of the matched split.
pub fn shifted_samples(cfg: &ExperimentConfig, seed: u64, shift: Option<&Shift>) -> CliResult<(Vec<FpnSample>, f64)> {
    let block = cfg.measurement_block()?;
    let g = cfg.array()?;
    let mut channel = cfg.channel_config();
    let mut snr_db = block.snr_db;
    let mut sensing_tag = TAG_SENSING;
    let mut quantizer = block.quantizer.quantizer();
    match shift {
        None => {}
        Some(Shift::SnrDelta(d)) => snr_db += d,
        Some(Shift::NearFraction(f)) => channel.near_fraction = *f,
        Some(Shift::PathsPerUser(p)) => channel.paths_per_user = *p,
        Some(Shift::ResampleSensing) => sensing_tag = TAG_SENSING_RESAMPLED,
        Some(Shift::Quantizer(q)) => quantizer = *q,
    }
    channel.validate().map_err(|e| CliError::Config(format!("shift: {e}")))?;
    let obs = scenario::observation_model(cfg, &g, seed, sensing_tag, snr_db, quantizer)?;
    let ds = scenario::generate(&g, &channel, Some(&obs), derive(seed, TAG_TEST), cfg.eval.n_test)?;
    let samples = ds
        .samples
        .into_iter()
        .map(|s| FpnSample {
            spec: obs.spec.clone(),
            y: s.measured.expect("measured").y,
            h: s.h.column(0).into_owned(),
        })
        .collect();
    Ok((samples, snr_db))
}

pub fn ood_rows(cfg: &ExperimentConfig, seed: u64, model: &FpnModel, shifts: &[NamedShift]) -> CliResult<Vec<MetricsRow>> {
    let t = &cfg.training;
    let mut cases: Vec<(String, Option<&Shift>)> = vec![("matched".into(), None)];
    cases.extend(shifts.iter().map(|s| (s.name.clone(), Some(&s.shift))));
    let mut rows = Vec::with_capacity(cases.len());
    for (name, shift) in cases {
        let (samples, snr_db) = shifted_samples(cfg, seed, shift)?;
        check_fpn_compat(model, &samples)?;
        let (db, it) = score_estimator(&samples, |s| run_fpn(model, s, t.tol, t.max_iter))?;
        rows.push(MetricsRow {
            experiment: format!("{}/{name}", cfg.scenario),
            method: "fpn".into(),
            n_antennas: cfg.antennas(),
            n_users: 1,
            snr_db,
            metric_name: MetricName::NmseDb,
            value: db,
            runtime_ms: per_instance_ms(&samples, |s| run_fpn(model, s, t.tol, t.max_iter)),
            iterations: it,
            seed,
        });
    }
    Ok(rows)
}

pub fn cmd_ood(cfg: &ExperimentConfig, seed: u64, model: &Path, shifts: &str, out: Option<&Path>) -> CliResult<Vec<MetricsRow>> {
    let shifts = parse_shifts(shifts)?;
    cfg.measurement_block()?;
    let model = read_fpn(open(model)?)?;
    let rows = ood_rows(cfg, seed, &model, &shifts)?;
    emit_rows(out, &rows)?;
    Ok(rows)
}

// ---------------------------------------------------------------- bench

/// Training-step memory and time of implicit FPN training against the
/// stored-state unrolled comparator at each depth.
pub fn bench_rows(cfg: &ExperimentConfig, seed: u64) -> CliResult<Vec<MetricsRow>> {
    let g = cfg.array()?;
    let obs = scenario::default_observation_model(cfg, &g, seed)?;
    let ds = scenario::generate(&g, &cfg.channel_config(), Some(&obs), derive(seed, TAG_TEST), 1)?;
    let s = &ds.samples[0];
    let sample = FpnSample {
        spec: obs.spec.clone(),
        y: s.measured.as_ref().expect("measured").y.clone(),
        h: s.h.column(0).into_owned(),
    };
    let t = &cfg.training;
    let model = FpnModel::init(cfg.antennas(), cfg.measurements(), &t.hidden, default_gamma(&obs.spec), t.lip_budget, seed)?;
    let mut rows = Vec::new();
    for method in ["fpn", "unfolded"] {
        for depth in BENCH_DEPTHS {
            // a vanishing tolerance makes both variants run exactly `depth` iterations
            let step = || match method {
                "fpn" => fpn_train_step(&model, &sample, f64::MIN_POSITIVE, depth, t.neumann_k),
                _ => unfolded_train_step(&model, &sample, depth),
            };
            let outcome = step()?;
            rows.push(MetricsRow {
                experiment: format!("{}/bench", cfg.scenario),
                method: method.into(),
                n_antennas: cfg.antennas(),
                n_users: 1,
                snr_db: obs.snr_db,
                metric_name: MetricName::MemoryBuffers,
                value: outcome.retained_buffers as f64,
                runtime_ms: median_runtime_ms(step),
                iterations: depth,
                seed,
            });
        }
    }
    Ok(rows)
}

pub fn cmd_bench(cfg: &ExperimentConfig, seed: u64, out: Option<&Path>) -> CliResult<Vec<MetricsRow>> {
    if cfg.task() != Task::Estimation {
        return Err(CliError::Config(format!("bench needs an estimation scenario, '{}' has no measurement block", cfg.scenario)));
    }
    let rows = bench_rows(cfg, seed)?;
    emit_rows(out, &rows)?;
    Ok(rows)
}

/// Writes rows to `out`, or to stdout when no file is given.
pub fn emit_rows(out: Option<&Path>, rows: &[MetricsRow]) -> CliResult<()> {
    match out {
        Some(path) => save_rows(path, rows),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            crate::metrics::write_rows(&mut lock, rows)?;
            lock.flush()?;
            Ok(())
        }
    }
}
