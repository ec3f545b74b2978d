//! Channel simulator: multipath delay/Doppler, BS-UE clock impairments and noise for the
//! monostatic echo and the UE downlink, plus the injected ground truth.

pub mod kernel;
pub mod propagate;
pub mod scenario;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cfg::{ConfigError, SystemConfig};
use crate::dsp::Cf;

pub use propagate::{propagate_mono, propagate_ue, ClockTrim, Propagator};
pub use scenario::{load_scenario, load_scenario_file};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChanError {
    #[error("range must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("path {path}: delay spread {delay_s:e} s exceeds the cyclic prefix {cp_s:e} s")]
    DelayExceedsCp { path: usize, delay_s: f64, cp_s: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Target,
    Clutter,
    Los,
}

impl PathKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Target => "target",
            Self::Clutter => "clutter",
            Self::Los => "los",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSpec {
    pub gain: Cf,
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub kind: PathKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftModel {
    Constant,
    /// The sampling interval error changes linearly, `rate` seconds per second.
    LinearRamp { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockImpairments {
    pub timing_offset_s: f64,
    pub cfo_hz: f64,
    /// UE sampling interval is `T_s - sio_s`.
    pub sio_s: f64,
    pub drift: DriftModel,
}

impl Default for ClockImpairments {
    fn default() -> Self {
        Self {
            timing_offset_s: 0.0,
            cfo_hz: 0.0,
            sio_s: 0.0,
            drift: DriftModel::Constant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    /// Power spectral density N0; variance `B * N0`.
    Psd(f64),
    /// Per-sample SNR relative to the strongest path of each link.
    SnrDb(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelScenario {
    pub ue_paths: Vec<PathSpec>,
    pub mono_paths: Vec<PathSpec>,
    pub clocks: ClockImpairments,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub clutter_doppler_max_hz: f64,
    /// Escalates delay-spread warnings into errors.
    pub strict_cp: bool,
}

impl Default for ChannelScenario {
    fn default() -> Self {
        Self {
            ue_paths: Vec::new(),
            mono_paths: Vec::new(),
            clocks: ClockImpairments::default(),
            noise: NoiseSpec::Psd(0.0),
            seed: 0,
            clutter_doppler_max_hz: 2.0,
            strict_cp: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Mono,
    Ue,
}

impl ChannelScenario {
    pub fn paths(&self, link: Link) -> &[PathSpec] {
        match link {
            Link::Mono => &self.mono_paths,
            Link::Ue => &self.ue_paths,
        }
    }

    /// Noise variance per complex sample on `link`.
    pub fn noise_variance(&self, link: Link, cfg: &SystemConfig) -> f64 {
        match self.noise {
            NoiseSpec::Psd(n0) => cfg.bandwidth_hz * n0,
            NoiseSpec::SnrDb(snr) => {
                let g = self
                    .paths(link)
                    .iter()
                    .map(|p| p.gain.norm_sqr())
                    .fold(0.0, f64::max);
                let sample_power = cfg.tx_power / cfg.num_subcarriers as f64;
                g * sample_power / 10f64.powf(snr / 10.0)
            }
        }
    }

    /// Structural checks; the delay-spread check warns unless `strict_cp` is set.
    pub fn validate(&self, cfg: &SystemConfig) -> Result<(), ChanError> {
        let ts = cfg.sample_period_s();
        if self.clocks.sio_s.abs() > 1e-4 * ts {
            return Err(ChanError::InvalidScenario(format!(
                "|sio| {:e} s exceeds 100 ppm of the sample period",
                self.clocks.sio_s
            )));
        }
        for (i, p) in self.mono_paths.iter().chain(&self.ue_paths).enumerate() {
            if !(p.delay_s >= 0.0) || !p.delay_s.is_finite() {
                return Err(ChanError::InvalidScenario(format!("path {i}: negative delay")));
            }
            if p.kind == PathKind::Clutter && p.doppler_hz.abs() > self.clutter_doppler_max_hz {
                return Err(ChanError::InvalidScenario(format!(
                    "path {i}: clutter Doppler {} Hz above {} Hz",
                    p.doppler_hz, self.clutter_doppler_max_hz
                )));
            }
        }
        match self.noise {
            NoiseSpec::Psd(n0) if !(n0 >= 0.0) => {
                return Err(ChanError::InvalidScenario("negative noise PSD".into()))
            }
            _ => {}
        }
        self.check_delay_spread(cfg)
    }

    fn check_delay_spread(&self, cfg: &SystemConfig) -> Result<(), ChanError> {
        let cp = cfg.cp_duration_s();
        let mut problems = Vec::new();
        for (i, p) in self.mono_paths.iter().enumerate() {
            if p.delay_s > cp {
                problems.push(ChanError::DelayExceedsCp { path: i, delay_s: p.delay_s, cp_s: cp });
            }
        }
        let first = self
            .ue_paths
            .iter()
            .map(|p| p.delay_s)
            .fold(f64::INFINITY, f64::min);
        for (i, p) in self.ue_paths.iter().enumerate() {
            if p.delay_s - first > cp {
                problems.push(ChanError::DelayExceedsCp {
                    path: self.mono_paths.len() + i,
                    delay_s: p.delay_s - first,
                    cp_s: cp,
                });
            }
        }
        match problems.into_iter().next() {
            Some(e) if self.strict_cp => Err(e),
            Some(e) => {
                log::warn!("{e}");
                Ok(())
            }
            None => Ok(()),
        }
    }
}

/// Point-target path from radar-equation quantities; the phase is drawn from `seed`.
pub fn target_params(
    rcs_m2: f64,
    range_m: f64,
    velocity_mps: f64,
    fc_hz: f64,
    seed: u64,
) -> Result<PathSpec, ChanError> {
    if !(range_m > 0.0) {
        return Err(ChanError::NonPositiveRange(range_m));
    }
    let c = SPEED_OF_LIGHT;
    let mag = (c * c * rcs_m2 / ((4.0 * PI).powi(3) * range_m.powi(4) * fc_hz * fc_hz)).sqrt();
    let phase = ChaCha8Rng::seed_from_u64(seed).random_range(0.0..2.0 * PI);
    Ok(PathSpec {
        gain: Cf::from_polar(mag, phase),
        delay_s: 2.0 * range_m / c,
        doppler_hz: 2.0 * velocity_mps * fc_hz / c,
        kind: PathKind::Target,
    })
}

/// Injected values for scoring estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub ue_paths: Vec<PathSpec>,
    pub mono_paths: Vec<PathSpec>,
    pub clocks: ClockImpairments,
    pub sample_period_s: f64,
}

impl TruthRecord {
    /// Accumulated sampling lag of the UE clock at UE sample `k`, in BS samples.
    pub fn sio_lag_samples(&self, k: u64) -> f64 {
        let ts = self.sample_period_s;
        let rho = self.clocks.sio_s / ts;
        let kf = k as f64;
        match self.clocks.drift {
            DriftModel::Constant => rho * kf,
            DriftModel::LinearRamp { rate } => rho * kf + 0.5 * (rate / ts) * ts * kf * kf,
        }
    }

    /// Timing offset plus accumulated drift at UE sample `k`, in samples.
    pub fn clock_offset_samples(&self, k: u64) -> f64 {
        self.clocks.timing_offset_s / self.sample_period_s + self.sio_lag_samples(k)
    }

    /// UE path delays relative to the earliest UE path.
    pub fn relative_ue_delays_s(&self) -> Vec<f64> {
        let first = self
            .ue_paths
            .iter()
            .map(|p| p.delay_s)
            .fold(f64::INFINITY, f64::min);
        self.ue_paths.iter().map(|p| p.delay_s - first).collect()
    }
}

pub fn ground_truth(scenario: &ChannelScenario, cfg: &SystemConfig) -> TruthRecord {
    TruthRecord {
        ue_paths: scenario.ue_paths.clone(),
        mono_paths: scenario.mono_paths.clone(),
        clocks: scenario.clocks,
        sample_period_s: cfg.sample_period_s(),
    }
}
