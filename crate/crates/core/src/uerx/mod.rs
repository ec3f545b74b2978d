//! UE receiver: synchronization search, frame demodulation, channel and offset estimation,
//! equalization and loss-of-lock supervision.

pub mod acquire;
pub mod estimate;
pub mod lock;
pub mod receiver;

use thiserror::Error;

pub use acquire::{cp_cfo_estimate, cp_cfo_from, sync_reference, sync_search, SyncHit};
pub use estimate::{
    equalize, estimate_channel, pilot_regression, propagate_channel, timing_from_peak,
    ChannelEstimate, Equalized, PilotRegression,
};
pub use lock::LockSupervisor;
pub use receiver::{demod_frame, Nco, SampleFetcher, UeFrame, UeOutput, UeReceiver};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UeError {
    #[error("block has {got} samples, expected {expected}")]
    BlockLength { expected: usize, got: usize },
    #[error("pilot regression normal equations are singular")]
    SingularNormalEquations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncPhase {
    SyncSearch,
    Normal,
}

impl SyncPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SyncSearch => "SYNC_SEARCH",
            Self::Normal => "NORMAL",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncState {
    pub phase: SyncPhase,
    /// Timing correction waiting to be applied by the sample fetcher.
    pub k_to: i64,
    pub f_o_hz: f64,
    pub dts_s: f64,
    /// Sum of all frequency corrections issued so far.
    pub applied_freq_hz: f64,
    /// Pilot SNR estimate of the last frame, dB.
    pub lock_quality: f64,
    pub frames_in_lock: u64,
}

impl Default for SyncState {
    fn default() -> Self {
        Self {
            phase: SyncPhase::SyncSearch,
            k_to: 0,
            f_o_hz: 0.0,
            dts_s: 0.0,
            applied_freq_hz: 0.0,
            lock_quality: f64::NEG_INFINITY,
            frames_in_lock: 0,
        }
    }
}
