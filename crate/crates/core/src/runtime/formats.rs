//! Binary records for emitted maps (`RDMP`) and bypass channel-symbol frames (`CSYM`).
//! All integers little-endian.
//!
//! RDMP: magic, version u16, kind u8, reserved u8, rows u32, cols u32, rows*cols f32 dB values
//! (row-major), row axis f64 x rows, Doppler axis f64 x cols.
//!
//! CSYM: magic, version u16, n u32, m u32, frame index u64, n*m (re, im) f32 pairs, column-major.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::dsp::{CMatrix, Cf};
use crate::mono::{MapKind, SenseMap};

pub const MAP_MAGIC: &[u8; 4] = b"RDMP";
pub const STREAM_MAGIC: &[u8; 4] = b"CSYM";
pub const FORMAT_VERSION: u16 = 1;
pub const MAP_HEADER_LEN: usize = 16;
pub const STREAM_HEADER_LEN: usize = 22;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u16),
    #[error("unknown map kind {0}")]
    BadKind(u8),
    #[error("record truncated")]
    Truncated,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn map_record_len(rows: usize, cols: usize) -> usize {
    MAP_HEADER_LEN + 4 * rows * cols + 8 * (rows + cols)
}

pub fn stream_record_len(n: usize, m: usize) -> usize {
    STREAM_HEADER_LEN + 8 * n * m
}

pub fn encode_map(map: &SenseMap) -> Vec<u8> {
    let mut b = Vec::with_capacity(map_record_len(map.rows, map.cols));
    b.extend_from_slice(MAP_MAGIC);
    b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    b.push(map.kind.code());
    b.push(0);
    b.extend_from_slice(&(map.rows as u32).to_le_bytes());
    b.extend_from_slice(&(map.cols as u32).to_le_bytes());
    for v in &map.values_db {
        b.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    for v in map.row_axis.iter().chain(&map.doppler_axis_hz) {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

pub fn encode_stream(frame_index: u64, cells: &CMatrix) -> Vec<u8> {
    let mut b = Vec::with_capacity(stream_record_len(cells.rows, cells.cols));
    b.extend_from_slice(STREAM_MAGIC);
    b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    b.extend_from_slice(&(cells.rows as u32).to_le_bytes());
    b.extend_from_slice(&(cells.cols as u32).to_le_bytes());
    b.extend_from_slice(&frame_index.to_le_bytes());
    for v in &cells.data {
        b.extend_from_slice(&(v.re as f32).to_le_bytes());
        b.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    b
}

pub fn write_map(w: &mut impl Write, map: &SenseMap) -> Result<(), FormatError> {
    w.write_all(&encode_map(map))?;
    w.flush()?;
    Ok(())
}

pub fn write_stream(w: &mut impl Write, frame_index: u64, cells: &CMatrix) -> Result<(), FormatError> {
    w.write_all(&encode_stream(frame_index, cells))?;
    w.flush()?;
    Ok(())
}

/// Fills `buf`; `Ok(false)` on a clean end of input before the first byte.
fn fill(r: &mut impl Read, buf: &mut [u8]) -> Result<bool, FormatError> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(false),
            Ok(0) => return Err(FormatError::Truncated),
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

fn body(r: &mut impl Read, len: usize) -> Result<Vec<u8>, FormatError> {
    let mut b = vec![0u8; len];
    if len > 0 && !fill(r, &mut b)? {
        return Err(FormatError::Truncated);
    }
    Ok(b)
}

fn u32_at(b: &[u8], i: usize) -> usize {
    u32::from_le_bytes(b[i..i + 4].try_into().unwrap()) as usize
}

fn check_preamble(h: &[u8], magic: &[u8; 4]) -> Result<(), FormatError> {
    let got: [u8; 4] = h[..4].try_into().unwrap();
    if &got != magic {
        return Err(FormatError::BadMagic(got));
    }
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != FORMAT_VERSION {
        return Err(FormatError::BadVersion(version));
    }
    Ok(())
}

/// Next map record, or `None` at end of input.
pub fn read_map(r: &mut impl Read) -> Result<Option<SenseMap>, FormatError> {
    let mut h = [0u8; MAP_HEADER_LEN];
    if !fill(r, &mut h)? {
        return Ok(None);
    }
    check_preamble(&h, MAP_MAGIC)?;
    let kind = match h[6] {
        0 => MapKind::RangeDoppler,
        1 => MapKind::Spectrogram,
        k => return Err(FormatError::BadKind(k)),
    };
    let rows = u32_at(&h, 8);
    let cols = u32_at(&h, 12);
    let b = body(r, map_record_len(rows, cols) - MAP_HEADER_LEN)?;
    let (vals, axes) = b.split_at(4 * rows * cols);
    let values_db = vals
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let axes: Vec<f64> = axes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Some(SenseMap {
        kind,
        rows,
        cols,
        values_db,
        row_axis: axes[..rows].to_vec(),
        doppler_axis_hz: axes[rows..].to_vec(),
    }))
}

/// Next bypass record as `(frame_index, cells)`, or `None` at end of input.
pub fn read_stream(r: &mut impl Read) -> Result<Option<(u64, CMatrix)>, FormatError> {
    let mut h = [0u8; STREAM_HEADER_LEN];
    if !fill(r, &mut h)? {
        return Ok(None);
    }
    check_preamble(&h, STREAM_MAGIC)?;
    let n = u32_at(&h, 6);
    let m = u32_at(&h, 10);
    let index = u64::from_le_bytes(h[14..22].try_into().unwrap());
    let b = body(r, 8 * n * m)?;
    let data = b
        .chunks_exact(8)
        .map(|c| {
            Cf::new(
                f32::from_le_bytes(c[..4].try_into().unwrap()) as f64,
                f32::from_le_bytes(c[4..].try_into().unwrap()) as f64,
            )
        })
        .collect();
    Ok(Some((index, CMatrix { rows: n, cols: m, data })))
}
