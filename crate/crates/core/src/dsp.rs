//! Small numeric helpers shared by the transmit, receive and sensing chains.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub type Cf = Complex64;

/// Floor applied when converting power to decibels.
pub const DB_FLOOR: f64 = -300.0;

pub fn power_db(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * p.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Wraps a phase to (-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y <= -PI {
        y += 2.0 * PI;
    } else if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// `e^{j 2 pi cycles}` with the argument reduced before the trig call.
#[inline]
pub fn cis_cycles(cycles: f64) -> Cf {
    let f = cycles - cycles.round();
    Cf::from_polar(1.0, 2.0 * PI * f)
}

/// Symmetric Hamming window.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
        .collect()
}

/// Modified Bessel function of the first kind, order zero (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= (half / k) * (half / k);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum
}

/// Maps an unshifted DFT bin to its signed frequency index.
#[inline]
pub fn signed_bin(k: usize, len: usize) -> i64 {
    if k >= len.div_ceil(2) {
        k as i64 - len as i64
    } else {
        k as i64
    }
}

/// Position of unshifted bin `k` after an FFT shift.
#[inline]
pub fn shifted_position(k: usize, len: usize) -> usize {
    (k + len / 2) % len
}

/// Plans cached per size and direction.
#[derive(Clone, Default)]
pub struct FftCache {
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for FftCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftCache")
            .field("forward", &self.forward.keys().collect::<Vec<_>>())
            .field("inverse", &self.inverse.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl FftCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, len: usize) -> Arc<dyn Fft<f64>> {
        self.forward
            .entry(len)
            .or_insert_with(|| FftPlanner::new().plan_fft_forward(len))
            .clone()
    }

    pub fn inverse(&mut self, len: usize) -> Arc<dyn Fft<f64>> {
        self.inverse
            .entry(len)
            .or_insert_with(|| FftPlanner::new().plan_fft_inverse(len))
            .clone()
    }

    /// Forward DFT scaled by `1/sqrt(len)`.
    pub fn unitary_forward(&mut self, buf: &mut [Cf]) {
        let len = buf.len();
        self.forward(len).process(buf);
        let s = 1.0 / (len as f64).sqrt();
        buf.iter_mut().for_each(|x| *x *= s);
    }

    /// Inverse DFT scaled by `1/sqrt(len)`.
    pub fn unitary_inverse(&mut self, buf: &mut [Cf]) {
        let len = buf.len();
        self.inverse(len).process(buf);
        let s = 1.0 / (len as f64).sqrt();
        buf.iter_mut().for_each(|x| *x *= s);
    }
}

/// Column-major complex matrix: `rows` entries per column, column `c` is
/// `data[c*rows .. (c+1)*rows]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Cf>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Cf::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_columns(rows: usize, columns: &[Vec<Cf>]) -> Self {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            assert_eq!(c.len(), rows, "column length mismatch");
            data.extend_from_slice(c);
        }
        Self {
            rows,
            cols: columns.len(),
            data,
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Cf {
        self.data[c * self.rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Cf) {
        self.data[c * self.rows + r] = v;
    }

    pub fn column(&self, c: usize) -> &[Cf] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn column_mut(&mut self, c: usize) -> &mut [Cf] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum()
    }
}
