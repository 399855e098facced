//! Turning a config into datasets, estimator samples and beamforming
//! channels.
//!
//! Seeds: every stream hangs off one base seed. Training channels use
//! `derive(seed, 1)`, test channels `derive(seed, 2)`, the sensing matrix
//! `derive(seed, 3)` and a resampled sensing matrix `derive(seed, 4)`. Within
//! a split, sample `i` draws its channel from `derive(split, 2i)` and its
//! noise from `derive(split, 2i + 1)`.

use std::sync::Arc;

use rayon::prelude::*;
use xlmimo_core::beamforming::MultiUserChannel;
use xlmimo_core::fpn::FpnSample;
use xlmimo_core::geometry::{sample_channel, ArrayGeometry, ChannelConfig};
use xlmimo_core::measurement::{build_sensing, observe, snr_to_noise_var, MeasurementSpec, Quantizer};
use xlmimo_core::rng::derive;
use xlmimo_core::CMat;

use crate::config::{ExperimentConfig, Task};
use crate::dataset::{Dataset, Measured, Sample};
use crate::error::{CliError, CliResult};

pub const TAG_TRAIN: u64 = 1;
pub const TAG_TEST: u64 = 2;
pub const TAG_SENSING: u64 = 3;
pub const TAG_SENSING_RESAMPLED: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn tag(self) -> u64 {
        match self {
            Split::Train => TAG_TRAIN,
            Split::Test => TAG_TEST,
        }
    }

    pub fn count(self, cfg: &ExperimentConfig) -> usize {
        match self {
            Split::Train => cfg.training.n_train,
            Split::Test => cfg.eval.n_test,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(CliError::Config(format!("--split: expected train or test, got '{other}'"))),
        }
    }
}

/// Everything that shapes the observation model, after any shifts.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    pub spec: Arc<MeasurementSpec>,
    pub snr_db: f64,
}

/// Sensing matrix, noise level and quantizer for an estimation scenario.
pub fn observation_model(
    cfg: &ExperimentConfig,
    g: &ArrayGeometry,
    seed: u64,
    sensing_tag: u64,
    snr_db: f64,
    quantizer: Quantizer,
) -> CliResult<ObservationModel> {
    let block = cfg.measurement_block()?;
    let spec = build_sensing(g, cfg.measurements(), block.kind.kind(), derive(seed, sensing_tag))?;
    let noise_var = snr_to_noise_var(snr_db, spec.signal_power());
    let spec = spec.with_noise_var(noise_var).with_quantizer(quantizer);
    Ok(ObservationModel { spec: Arc::new(spec), snr_db })
}

pub fn default_observation_model(cfg: &ExperimentConfig, g: &ArrayGeometry, seed: u64) -> CliResult<ObservationModel> {
    let block = cfg.measurement_block()?;
    observation_model(cfg, g, seed, TAG_SENSING, block.snr_db, block.quantizer.quantizer())
}

/// Draws `count` samples; sample `i` depends only on `(split_seed, i)`.
pub fn generate(
    g: &ArrayGeometry,
    channel: &ChannelConfig,
    obs: Option<&ObservationModel>,
    split_seed: u64,
    count: usize,
) -> CliResult<Dataset> {
    let samples: Vec<CliResult<Sample>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let i = i as u64;
            let h = sample_channel(g, channel, derive(split_seed, 2 * i))?.matrix;
            let measured = match obs {
                Some(o) => {
                    let y = observe(&o.spec, &h.column(0).into_owned(), derive(split_seed, 2 * i + 1))?;
                    Some(Measured { y, sensing: Arc::new(o.spec.sensing.clone()) })
                }
                None => None,
            };
            Ok(Sample { h, measured })
        })
        .collect();
    let mut ds = Dataset::new(g.len(), channel.n_users, obs.is_some());
    let shared = obs.map(|o| Arc::new(o.spec.sensing.clone()));
    for s in samples {
        let mut s = s?;
        if let (Some(m), Some(a)) = (s.measured.as_mut(), &shared) {
            m.sensing = a.clone();
        }
        ds.push(s)?;
    }
    Ok(ds)
}

/// The dataset `gen` writes for `split`.
pub fn generate_split(cfg: &ExperimentConfig, seed: u64, split: Split) -> CliResult<Dataset> {
    let g = cfg.array()?;
    let obs = match cfg.task() {
        Task::Estimation => Some(default_observation_model(cfg, &g, seed)?),
        Task::Beamforming => None,
    };
    generate(&g, &cfg.channel_config(), obs.as_ref(), derive(seed, split.tag()), split.count(cfg))
}

/// Estimator samples from a measured dataset. Noise level and quantizer come
/// from the config, the sensing matrices from the file.
pub fn fpn_samples(cfg: &ExperimentConfig, ds: &Dataset) -> CliResult<Vec<FpnSample>> {
    let block = cfg.measurement_block()?;
    check_dims(cfg, ds)?;
    if !ds.has_measurements {
        return Err(CliError::Data("dataset has no pilot observations; estimation needs a measured dataset".into()));
    }
    let mut out = Vec::with_capacity(ds.len());
    let mut cache: Option<(Arc<CMat>, Arc<MeasurementSpec>)> = None;
    for s in &ds.samples {
        let m = s.measured.as_ref().expect("flagged dataset");
        let spec = match &cache {
            Some((a, spec)) if Arc::ptr_eq(a, &m.sensing) => spec.clone(),
            _ => {
                let raw = MeasurementSpec::new((*m.sensing).clone(), 0.0, Quantizer::None)?;
                let noise_var = snr_to_noise_var(block.snr_db, raw.signal_power());
                let spec = Arc::new(raw.with_noise_var(noise_var).with_quantizer(block.quantizer.quantizer()));
                cache = Some((m.sensing.clone(), spec.clone()));
                spec
            }
        };
        out.push(FpnSample { spec, y: m.y.clone(), h: s.h.column(0).into_owned() });
    }
    Ok(out)
}

/// Beamforming instances (K×N) at `snr_db` with unit power budget.
pub fn channels(cfg: &ExperimentConfig, ds: &Dataset, snr_db: f64) -> CliResult<Vec<MultiUserChannel>> {
    check_dims(cfg, ds)?;
    let noise = 10f64.powf(-snr_db / 10.0);
    ds.samples
        .iter()
        .map(|s| MultiUserChannel::new(s.h.transpose(), noise, 1.0).map_err(Into::into))
        .collect()
}

pub fn check_dims(cfg: &ExperimentConfig, ds: &Dataset) -> CliResult<()> {
    if ds.n != cfg.antennas() {
        return Err(CliError::Data(format!(
            "dataset has N={} antennas, config '{}' has {}",
            ds.n,
            cfg.scenario,
            cfg.antennas()
        )));
    }
    if ds.k != cfg.channel.n_users {
        return Err(CliError::Data(format!(
            "dataset has K={} users, config '{}' has {}",
            ds.k, cfg.scenario, cfg.channel.n_users
        )));
    }
    if let Some(s) = ds.samples.first().and_then(|s| s.measured.as_ref()) {
        if s.y.len() != cfg.measurements() {
            return Err(CliError::Data(format!(
                "dataset has M={} measurements, config '{}' has {}",
                s.y.len(),
                cfg.scenario,
                cfg.measurements()
            )));
        }
    }
    Ok(())
}
