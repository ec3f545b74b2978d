//! Packing of datagrams into per-frame payload bytes and the per-frame bit pipeline
//! (scramble, encode, QPSK) around the FEC.
//!
//! Payload layout: records `[u16 len BE][bytes][u32 crc32 BE]`, a zero length terminates,
//! the remainder of the frame is random fill.

use std::sync::Arc;

use rand::{Rng, RngCore};

use super::fec::{DecodeStatus, Fec};
use super::grid::qpsk_map;
use super::scramble::scramble_in_place;
use super::PhyError;
use crate::dsp::Cf;

pub const RECORD_OVERHEAD: usize = 6;

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect()
}

/// MSB-first packing; a short final byte is zero-padded.
pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i)))
        })
        .collect()
}

pub fn crc32_bits(bits: &[u8]) -> u32 {
    crc32fast::hash(&bits_to_bytes(bits))
}

/// Accumulates datagram records into one frame's payload.
#[derive(Debug, Clone)]
pub struct RecordPacker {
    buf: Vec<u8>,
    capacity: usize,
}

impl RecordPacker {
    pub fn new(capacity: usize) -> Self {
        Self {
            buf: Vec::with_capacity(capacity),
            capacity,
        }
    }

    pub fn max_datagram(capacity: usize) -> usize {
        capacity.saturating_sub(RECORD_OVERHEAD).min(u16::MAX as usize)
    }

    pub fn remaining(&self) -> usize {
        self.capacity - self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn fits(&self, len: usize) -> bool {
        len > 0 && len <= u16::MAX as usize && len + RECORD_OVERHEAD <= self.remaining()
    }

    /// Appends a record, or returns false when it does not fit.
    pub fn push(&mut self, datagram: &[u8]) -> bool {
        if !self.fits(datagram.len()) {
            return false;
        }
        self.buf
            .extend_from_slice(&(datagram.len() as u16).to_be_bytes());
        self.buf.extend_from_slice(datagram);
        self.buf
            .extend_from_slice(&crc32fast::hash(datagram).to_be_bytes());
        true
    }

    /// Terminator plus random fill up to the capacity.
    pub fn finish(mut self, rng: &mut impl RngCore) -> Vec<u8> {
        if self.remaining() >= 2 {
            self.buf.extend_from_slice(&[0, 0]);
        }
        let start = self.buf.len();
        self.buf.resize(self.capacity, 0);
        rng.fill_bytes(&mut self.buf[start..]);
        self.buf
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedRecords {
    pub datagrams: Vec<Vec<u8>>,
    pub crc_failures: usize,
}

/// Reads records until the terminator or the first record that overruns the payload.
pub fn parse_records(payload: &[u8]) -> ParsedRecords {
    let mut out = ParsedRecords::default();
    let mut i = 0;
    while i + 2 <= payload.len() {
        let len = u16::from_be_bytes([payload[i], payload[i + 1]]) as usize;
        if len == 0 || i + 2 + len + 4 > payload.len() {
            break;
        }
        let body = &payload[i + 2..i + 2 + len];
        let crc = &payload[i + 2 + len..i + 6 + len];
        if crc32fast::hash(body).to_be_bytes() == crc {
            out.datagrams.push(body.to_vec());
        } else {
            out.crc_failures += 1;
        }
        i += RECORD_OVERHEAD + len;
    }
    out
}

/// Result of decoding one frame's LLRs.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDecode {
    pub payload: Vec<u8>,
    pub info_bits: Vec<u8>,
    pub blocks_failed: usize,
    pub blocks: usize,
}

/// Per-frame bit pipeline: payload bytes, scrambling reset every frame, block encoding and
/// QPSK mapping; and the inverse on LLRs.
#[derive(Debug, Clone)]
pub struct FrameCodec {
    fec: Arc<dyn Fec>,
    blocks: usize,
    scramble_seed: u8,
}

impl FrameCodec {
    pub fn new(fec: Arc<dyn Fec>, data_cells: usize, scramble_seed: u8) -> Result<Self, PhyError> {
        if scramble_seed & 0x7f == 0 {
            return Err(PhyError::ZeroSeed);
        }
        let blocks = (2 * data_cells) / fec.code_len();
        Ok(Self {
            fec,
            blocks,
            scramble_seed,
        })
    }

    pub fn fec(&self) -> &Arc<dyn Fec> {
        &self.fec
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn info_bits(&self) -> usize {
        self.blocks * self.fec.info_len()
    }

    pub fn payload_bytes(&self) -> usize {
        self.info_bits() / 8
    }

    pub fn coded_bits(&self) -> usize {
        self.blocks * self.fec.code_len()
    }

    /// QPSK symbols carrying the coded payload; fewer than the data cells when the blocks
    /// do not fill the frame (the grid mapper pads the rest).
    pub fn encode(&self, payload: &[u8]) -> Result<Vec<Cf>, PhyError> {
        if payload.len() != self.payload_bytes() {
            return Err(PhyError::LengthMismatch {
                expected: self.payload_bytes(),
                got: payload.len(),
            });
        }
        let mut info = bytes_to_bits(payload);
        info.resize(self.info_bits(), 0);
        scramble_in_place(&mut info, self.scramble_seed)?;
        let k = self.fec.info_len();
        let mut coded = Vec::with_capacity(self.coded_bits());
        for b in 0..self.blocks {
            coded.extend(self.fec.encode(&info[b * k..(b + 1) * k])?);
        }
        Ok(qpsk_map(&coded))
    }

    /// Decodes LLRs (at least `coded_bits()` of them, in the order the symbols were mapped).
    pub fn decode(&self, llr: &[f64]) -> Result<FrameDecode, PhyError> {
        if llr.len() < self.coded_bits() {
            return Err(PhyError::LengthMismatch {
                expected: self.coded_bits(),
                got: llr.len(),
            });
        }
        let n = self.fec.code_len();
        let mut info = Vec::with_capacity(self.info_bits());
        let mut failed = 0;
        for b in 0..self.blocks {
            let d = self.fec.decode(&llr[b * n..(b + 1) * n])?;
            if d.status == DecodeStatus::Failed {
                failed += 1;
            }
            info.extend(d.info);
        }
        scramble_in_place(&mut info, self.scramble_seed)?;
        let payload = bits_to_bytes(&info[..self.payload_bytes() * 8]);
        Ok(FrameDecode {
            payload,
            info_bits: info,
            blocks_failed: failed,
            blocks: self.blocks,
        })
    }
}

/// Random payload bytes for padding-only frames.
pub fn random_payload(len: usize, rng: &mut impl Rng) -> Vec<u8> {
    let mut v = vec![0u8; len];
    rng.fill_bytes(&mut v);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phytx::fec::{LdpcCode, NullCode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bit_byte_round_trip() {
        let b = [0xA5u8, 0x01, 0xFF];
        let bits = bytes_to_bits(&b);
        assert_eq!(&bits[..8], &[1, 0, 1, 0, 0, 1, 0, 1]);
        assert_eq!(bits_to_bytes(&bits), b);
        assert_eq!(bits_to_bytes(&[1, 1]), vec![0xC0]);
    }

    #[test]
    fn crc_reference() {
        // standard CRC-32 check value
        assert_eq!(crc32fast::hash(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32_bits(&bytes_to_bits(b"123456789")), 0xCBF4_3926);
    }

    #[test]
    fn records_round_trip_with_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = RecordPacker::new(64);
        assert!(p.push(b"hello"));
        assert!(p.push(&[7u8; 20]));
        assert!(!p.push(&[1u8; 40]));
        assert!(!p.push(&[]));
        let bytes = p.finish(&mut rng);
        assert_eq!(bytes.len(), 64);
        let r = parse_records(&bytes);
        assert_eq!(r.datagrams, vec![b"hello".to_vec(), vec![7u8; 20]]);
        assert_eq!(r.crc_failures, 0);
    }

    #[test]
    fn exactly_full_frame_without_terminator() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = RecordPacker::new(16);
        assert_eq!(RecordPacker::max_datagram(16), 10);
        assert!(p.push(&[9u8; 10]));
        let bytes = p.finish(&mut rng);
        assert_eq!(parse_records(&bytes).datagrams, vec![vec![9u8; 10]]);
    }

    #[test]
    fn corrupted_record_counted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = RecordPacker::new(40);
        p.push(b"abc");
        p.push(b"defg");
        let mut bytes = p.finish(&mut rng);
        bytes[3] ^= 0x10;
        let r = parse_records(&bytes);
        assert_eq!(r.datagrams, vec![b"defg".to_vec()]);
        assert_eq!(r.crc_failures, 1);
    }

    #[test]
    fn frame_codec_round_trip_ldpc() {
        let codec = FrameCodec::new(Arc::new(LdpcCode::default_648()), 10_976, 0x5d).unwrap();
        assert_eq!(codec.blocks(), 33);
        assert_eq!(codec.payload_bytes(), 33 * 324 / 8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let payload = random_payload(codec.payload_bytes(), &mut rng);
        let syms = codec.encode(&payload).unwrap();
        assert_eq!(syms.len(), 33 * 324);
        let llr: Vec<f64> = syms.iter().flat_map(|s| [4.0 * s.re, 4.0 * s.im]).collect();
        let d = codec.decode(&llr).unwrap();
        assert_eq!(d.blocks_failed, 0);
        assert_eq!(d.payload, payload);
    }

    #[test]
    fn scrambling_whitens_zero_payload() {
        let codec = FrameCodec::new(Arc::new(NullCode::new(256)), 1000, 0x5d).unwrap();
        let syms = codec.encode(&vec![0u8; codec.payload_bytes()]).unwrap();
        let neg = syms.iter().filter(|s| s.re < 0.0).count();
        assert!(neg > syms.len() / 4 && neg < 3 * syms.len() / 4);
    }
}
