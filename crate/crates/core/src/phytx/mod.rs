//! Base-station transmit chain: bits to scrambled, encoded QPSK symbols, resource grid and
//! time-domain OFDM samples.

pub mod fec;
pub mod framing;
pub mod grid;
pub mod ofdm;
pub mod scramble;
pub mod zc;

use thiserror::Error;

pub use fec::{DecodeStatus, Decoded, Fec, LdpcCode, NullCode};
pub use grid::{map_grid, qpsk_map, ResourceGrid};
pub use framing::{FrameCodec, FrameDecode, RecordPacker};
pub use ofdm::{ofdm_demodulate, ofdm_modulate};
pub use scramble::scramble;
pub use zc::{zc_generate, ZcSequence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyError {
    #[error("root {root} is not coprime with length {len}")]
    NotCoprime { root: u64, len: usize },
    #[error("scrambler seed must be a non-zero 7-bit value")]
    ZeroSeed,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("parity-check matrix file invalid: {0}")]
    MatrixFileInvalid(String),
    #[error("payload of {got} symbols exceeds capacity {capacity}")]
    Overflow { capacity: usize, got: usize },
}
