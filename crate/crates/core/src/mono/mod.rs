//! Monostatic sensing chain: element-wise division, slow-time stream handling, clutter
//! filtering, delay-Doppler periodogram, peak extraction, micro-Doppler and MSR.

pub mod demap;
pub mod microdoppler;
pub mod msr;
pub mod mti;
pub mod periodogram;
pub mod sensor;
pub mod stream;

use thiserror::Error;

pub use demap::demap_echo;
pub use microdoppler::{micro_doppler, BinSelect};
pub use msr::msr;
pub use mti::{MtiFilter, SosCascade};
pub use periodogram::{find_peaks, periodogram, Detection, MapKind, PeriodogramParams, SenseMap};
pub use sensor::{FrameAssembler, MonoSensor, SensingOutput};
pub use stream::{downsample, repack, SensingFrame, SlowTimeChain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonoError {
    #[error("transmit cell ({n}, {m}) is zero; cannot divide")]
    ZeroSymbolCell { n: usize, m: usize },
    #[error("stream of {len} columns is shorter than the window {need}")]
    StreamTooShort { len: usize, need: usize },
    #[error("window [{start}, {end}] outside stream of {len} columns")]
    WindowOutOfRange { start: usize, end: usize, len: usize },
    #[error("operation needs a range-Doppler map")]
    WrongMapKind,
    #[error("frame length {got} does not match {expected}")]
    FrameLength { expected: usize, got: usize },
}
