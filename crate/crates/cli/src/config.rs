//! JSON experiment configuration.
//!
//! A config with a `measurement` block describes a channel-estimation
//! scenario (one user per sample); without it the scenario is multi-user
//! beamforming.

use std::path::Path;

use serde::{Deserialize, Serialize};
use xlmimo_core::geometry::{build_ula, build_upa, ArrayGeometry, ChannelConfig, GainModel};
use xlmimo_core::measurement::{Quantizer, SensingKind};

use crate::error::{CliError, CliResult};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub geometry: GeometryBlock,
    #[serde(default)]
    pub channel: ChannelBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<MeasurementBlock>,
    #[serde(default)]
    pub training: TrainingBlock,
    #[serde(default)]
    pub eval: EvalBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayKindName {
    Ula,
    Upa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    pub kind: ArrayKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(default = "default_spacing")]
    pub spacing_in_wavelengths: f64,
    #[serde(default = "default_carrier")]
    pub carrier_hz: f64,
}

fn default_spacing() -> f64 {
    0.5
}

fn default_carrier() -> f64 {
    28e9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainModelName {
    Unit,
    ComplexGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelBlock {
    pub n_users: usize,
    pub paths_per_user: usize,
    pub near_fraction: f64,
    pub distance_range: [f64; 2],
    pub gain_model: GainModelName,
    pub non_stationary: bool,
    pub visible_region_len: usize,
}

impl Default for ChannelBlock {
    fn default() -> Self {
        let c = ChannelConfig::default();
        Self {
            n_users: c.n_users,
            paths_per_user: c.paths_per_user,
            near_fraction: c.near_fraction,
            distance_range: [c.distance_range.0, c.distance_range.1],
            gain_model: GainModelName::ComplexGaussian,
            non_stationary: c.non_stationary,
            visible_region_len: c.visible_region_len,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingName {
    Gaussian,
    UnitModulus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerName {
    None,
    OneBit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementBlock {
    pub compression_ratio: f64,
    pub kind: SensingName,
    pub snr_db: f64,
    pub quantizer: QuantizerName,
}

impl Default for MeasurementBlock {
    fn default() -> Self {
        Self {
            compression_ratio: 0.5,
            kind: SensingName::UnitModulus,
            snr_db: 5.0,
            quantizer: QuantizerName::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingBlock {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub lip_budget: f64,
    pub neumann_k: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Size of the `train` split written by `gen`.
    pub n_train: usize,
    /// Hidden layer widths of the denoiser or calibration network.
    pub hidden: Vec<usize>,
}

impl Default for TrainingBlock {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch: 16,
            lr: 1e-3,
            lip_budget: xlmimo_core::fpn::DEFAULT_LIP_BUDGET,
            neumann_k: xlmimo_core::fpn::DEFAULT_NEUMANN_K,
            tol: xlmimo_core::fpn::DEFAULT_TOL,
            max_iter: xlmimo_core::fpn::DEFAULT_MAX_ITER,
            seed: 0,
            n_train: 1000,
            hidden: vec![256],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalBlock {
    pub n_test: usize,
    /// Empty means "the dataset's user count".
    pub user_counts: Vec<usize>,
    /// Beamforming SNRs (transmit power over noise power). The first entry is
    /// also the training SNR.
    pub snr_grid: Vec<f64>,
}

impl Default for EvalBlock {
    fn default() -> Self {
        Self {
            n_test: 100,
            user_counts: Vec::new(),
            snr_grid: vec![10.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Estimation,
    Beamforming,
}

fn field_error(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn task(&self) -> Task {
        if self.measurement.is_some() {
            Task::Estimation
        } else {
            Task::Beamforming
        }
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical form: every field spelled out, fixed key order.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn antennas(&self) -> usize {
        let g = &self.geometry;
        match g.kind {
            ArrayKindName::Ula => g.n.unwrap_or(0),
            ArrayKindName::Upa => g.nx.unwrap_or(0) * g.ny.unwrap_or(0),
        }
    }

    /// Number of pilot measurements `M = round(ratio·N)`.
    pub fn measurements(&self) -> usize {
        let ratio = self.measurement.as_ref().map_or(1.0, |m| m.compression_ratio);
        (ratio * self.antennas() as f64).round() as usize
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.scenario.is_empty() {
            return Err(field_error("scenario", "must not be empty"));
        }
        let g = &self.geometry;
        match g.kind {
            ArrayKindName::Ula => {
                if !matches!(g.n, Some(n) if n >= 1) {
                    return Err(field_error("geometry.n", "ula needs n >= 1"));
                }
                if g.nx.is_some() || g.ny.is_some() {
                    return Err(field_error("geometry.nx", "nx/ny apply to upa only"));
                }
            }
            ArrayKindName::Upa => {
                if !matches!(g.nx, Some(n) if n >= 1) {
                    return Err(field_error("geometry.nx", "upa needs nx >= 1"));
                }
                if !matches!(g.ny, Some(n) if n >= 1) {
                    return Err(field_error("geometry.ny", "upa needs ny >= 1"));
                }
                if g.n.is_some() {
                    return Err(field_error("geometry.n", "n applies to ula only"));
                }
            }
        }
        if !(g.spacing_in_wavelengths > 0.0 && g.spacing_in_wavelengths.is_finite()) {
            return Err(field_error("geometry.spacing_in_wavelengths", "must be positive"));
        }
        if !(g.carrier_hz > 0.0 && g.carrier_hz.is_finite()) {
            return Err(field_error("geometry.carrier_hz", "must be positive"));
        }
        self.channel_config()
            .validate()
            .map_err(|e| CliError::Config(format!("channel: {e}")))?;
        if self.channel.non_stationary && self.channel.visible_region_len > self.antennas() {
            return Err(field_error("channel.visible_region_len", "exceeds the element count"));
        }
        if let Some(m) = &self.measurement {
            if !(m.compression_ratio > 0.0 && m.compression_ratio <= 1.0) {
                return Err(field_error(
                    "measurement.compression_ratio",
                    format!("{} outside (0, 1]", m.compression_ratio),
                ));
            }
            if self.measurements() == 0 {
                return Err(field_error("measurement.compression_ratio", "gives zero measurements"));
            }
            if !m.snr_db.is_finite() {
                return Err(field_error("measurement.snr_db", "must be finite"));
            }
            if self.channel.n_users != 1 {
                return Err(field_error("channel.n_users", "estimation scenarios use one user per sample"));
            }
        }
        let t = &self.training;
        if t.epochs == 0 {
            return Err(field_error("training.epochs", "must be at least 1"));
        }
        if t.batch == 0 {
            return Err(field_error("training.batch", "must be at least 1"));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(field_error("training.lr", "must be positive"));
        }
        if !(t.lip_budget > 0.0 && t.lip_budget < 1.0) {
            return Err(field_error("training.lip_budget", format!("{} outside (0, 1)", t.lip_budget)));
        }
        if self.task() == Task::Estimation && t.lip_budget <= xlmimo_core::fpn::DEFAULT_DAMPING {
            return Err(field_error("training.lip_budget", "must exceed the denoiser damping 0.5"));
        }
        if !(t.tol > 0.0) {
            return Err(field_error("training.tol", "must be positive"));
        }
        if t.max_iter == 0 {
            return Err(field_error("training.max_iter", "must be at least 1"));
        }
        if t.hidden.contains(&0) {
            return Err(field_error("training.hidden", "layer widths must be positive"));
        }
        let e = &self.eval;
        if self.task() == Task::Beamforming {
            for &k in &e.user_counts {
                if k == 0 || k > self.channel.n_users {
                    return Err(field_error(
                        "eval.user_counts",
                        format!("{k} outside [1, channel.n_users = {}]", self.channel.n_users),
                    ));
                }
                if k > self.antennas() {
                    return Err(field_error("eval.user_counts", format!("{k} users exceed the antenna count")));
                }
            }
            if e.snr_grid.is_empty() {
                return Err(field_error("eval.snr_grid", "needs at least one SNR"));
            }
        }
        if e.snr_grid.iter().any(|s| !s.is_finite()) {
            return Err(field_error("eval.snr_grid", "entries must be finite"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.geometry.carrier_hz
    }

    pub fn array(&self) -> CliResult<ArrayGeometry> {
        let lambda = self.wavelength();
        let d = self.geometry.spacing_in_wavelengths * lambda;
        let g = &self.geometry;
        let built = match g.kind {
            ArrayKindName::Ula => build_ula(g.n.unwrap_or(0), d, lambda),
            ArrayKindName::Upa => build_upa(g.nx.unwrap_or(0), g.ny.unwrap_or(0), d, lambda),
        };
        built.map_err(|e| CliError::Config(format!("geometry: {e}")))
    }

    pub fn channel_config(&self) -> ChannelConfig {
        let c = &self.channel;
        ChannelConfig {
            n_users: c.n_users,
            paths_per_user: c.paths_per_user,
            near_fraction: c.near_fraction,
            distance_range: (c.distance_range[0], c.distance_range[1]),
            gain_model: match c.gain_model {
                GainModelName::Unit => GainModel::Unit,
                GainModelName::ComplexGaussian => GainModel::ComplexGaussian,
            },
            non_stationary: c.non_stationary,
            visible_region_len: c.visible_region_len,
        }
    }

    /// User counts to evaluate, defaulting to the configured user count.
    pub fn user_counts(&self) -> Vec<usize> {
        if self.eval.user_counts.is_empty() {
            vec![self.channel.n_users]
        } else {
            self.eval.user_counts.clone()
        }
    }

    pub(crate) fn measurement_block(&self) -> CliResult<&MeasurementBlock> {
        self.measurement
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("scenario '{}' has no measurement block", self.scenario)))
    }
}

impl SensingName {
    pub fn kind(self) -> SensingKind {
        match self {
            SensingName::Gaussian => SensingKind::Gaussian,
            SensingName::UnitModulus => SensingKind::UnitModulus,
        }
    }
}

impl QuantizerName {
    pub fn quantizer(self) -> Quantizer {
        match self {
            QuantizerName::None => Quantizer::None,
            QuantizerName::OneBit => Quantizer::OneBit,
        }
    }
}
