//! Bistatic sensing at the UE: symbol reconstruction, fractional LoS timing, SIO regression,
//! sensing-delay tracking and phase compensation of the channel symbols.

pub mod compensate;
pub mod quinn;
pub mod reconstruct;
pub mod sensor;
pub mod tracker;

use thiserror::Error;

pub use compensate::compensate;
pub use quinn::{delay_estimate, quinn_fractional, DelayEstimate};
pub use reconstruct::{reconstruct_symbols, sensing_symbols};
pub use sensor::{BistaticFrame, BistaticSensor, CompensationMode};
pub use tracker::{ls_slope, SensingTracker, TrackerStep};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BisenseError {
    #[error("delay spectrum peak is zero")]
    ZeroPeak,
    #[error("SIO window needs {need} frames, got {got}")]
    InsufficientFrames { got: usize, need: usize },
    #[error(transparent)]
    Mono(#[from] crate::mono::MonoError),
}
