//! Delay-Doppler periodogram and peak extraction.

use crate::cfg::SystemConfig;
use crate::dsp::{hamming, power_db, shifted_position, CMatrix, Cf, FftCache};

use super::MonoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    RangeDoppler,
    Spectrogram,
}

impl MapKind {
    pub fn code(self) -> u8 {
        match self {
            Self::RangeDoppler => 0,
            Self::Spectrogram => 1,
        }
    }
}

/// Power map in dB, row-major. Rows are delay bins (or STFT frames), columns are
/// FFT-shifted Doppler bins.
#[derive(Debug, Clone, PartialEq)]
pub struct SenseMap {
    pub kind: MapKind,
    pub rows: usize,
    pub cols: usize,
    pub values_db: Vec<f64>,
    /// Delay in seconds per row (time in seconds for spectrograms).
    pub row_axis: Vec<f64>,
    /// Doppler in Hz per column.
    pub doppler_axis_hz: Vec<f64>,
}

impl SenseMap {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values_db[row * self.cols + col]
    }

    pub fn max_db(&self) -> f64 {
        self.values_db.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Column of unshifted Doppler bin `k_f` (signed).
    pub fn column_of(&self, k_f: i64) -> usize {
        let c = self.cols as i64;
        shifted_position(k_f.rem_euclid(c) as usize, self.cols)
    }

    /// Signed unshifted Doppler bin of column `col`.
    pub fn doppler_bin(&self, col: usize) -> i64 {
        col as i64 - (self.cols / 2) as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodogramParams {
    pub nper: usize,
    pub mper: usize,
    pub subcarrier_spacing_hz: f64,
    /// Slow-time interval between columns (stride times symbol duration).
    pub interval_s: f64,
    pub window: bool,
}

impl PeriodogramParams {
    pub fn from_cfg(cfg: &SystemConfig, stride: usize) -> Self {
        Self {
            nper: cfg.periodogram_sizes.0,
            mper: cfg.periodogram_sizes.1,
            subcarrier_spacing_hz: cfg.subcarrier_spacing_hz(),
            interval_s: stride as f64 * cfg.symbol_duration_s(),
            window: true,
        }
    }

    pub fn delay_bin_s(&self) -> f64 {
        1.0 / (self.nper as f64 * self.subcarrier_spacing_hz)
    }

    pub fn doppler_bin_hz(&self) -> f64 {
        1.0 / (self.mper as f64 * self.interval_s)
    }
}

/// Windowed 2-D transform: inverse DFT over subcarriers (size `nper`), forward DFT over
/// slow time (size `mper`), `|.|^2 / (N * M_s)`.
pub fn periodogram(frame: &CMatrix, p: &PeriodogramParams, fft: &mut FftCache) -> SenseMap {
    let n = frame.rows;
    let ms = frame.cols;
    assert!(p.nper >= n && p.mper >= ms, "periodogram sizes below frame size");
    let (wn, wm) = if p.window {
        (hamming(n), hamming(ms))
    } else {
        (vec![1.0; n], vec![1.0; ms])
    };
    let inv = fft.inverse(p.nper);
    // delay transform per slow-time column, stored transposed for the Doppler pass
    let mut by_delay = vec![Cf::new(0.0, 0.0); p.nper * p.mper];
    let mut buf = vec![Cf::new(0.0, 0.0); p.nper];
    for m in 0..ms {
        buf.iter_mut().for_each(|v| *v = Cf::new(0.0, 0.0));
        for (i, v) in frame.column(m).iter().enumerate() {
            buf[i] = v * (wn[i] * wm[m]);
        }
        inv.process(&mut buf);
        for (k, v) in buf.iter().enumerate() {
            by_delay[k * p.mper + m] = *v;
        }
    }
    let fwd = fft.forward(p.mper);
    let scale = 1.0 / (n * ms) as f64;
    let mut values_db = vec![0.0; p.nper * p.mper];
    for k in 0..p.nper {
        let row = &mut by_delay[k * p.mper..(k + 1) * p.mper];
        fwd.process(row);
        for (kf, v) in row.iter().enumerate() {
            values_db[k * p.mper + shifted_position(kf, p.mper)] = power_db(v.norm_sqr() * scale);
        }
    }
    let dbin = p.doppler_bin_hz();
    SenseMap {
        kind: MapKind::RangeDoppler,
        rows: p.nper,
        cols: p.mper,
        values_db,
        row_axis: (0..p.nper).map(|k| k as f64 * p.delay_bin_s()).collect(),
        doppler_axis_hz: (0..p.mper)
            .map(|c| (c as i64 - (p.mper / 2) as i64) as f64 * dbin)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub power_db: f64,
    /// Delay bin and signed Doppler bin.
    pub bin: (usize, i64),
}

/// Strict 3x3 local maxima (circular in both axes) within `rel_threshold_db` of the map
/// maximum, strongest first, ties by delay bin then Doppler bin.
pub fn find_peaks(
    map: &SenseMap,
    rel_threshold_db: f64,
    max_peaks: usize,
) -> Result<Vec<Detection>, MonoError> {
    if map.kind != MapKind::RangeDoppler {
        return Err(MonoError::WrongMapKind);
    }
    let (r, c) = (map.rows, map.cols);
    let floor = map.max_db() - rel_threshold_db.abs();
    let mut out = Vec::new();
    for k in 0..r {
        for col in 0..c {
            let v = map.at(k, col);
            if v < floor {
                continue;
            }
            let mut is_max = true;
            'nb: for dr in [r - 1, 0, 1] {
                for dc in [c - 1, 0, 1] {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    if map.at((k + dr) % r, (col + dc) % c) >= v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                let kf = map.doppler_bin(col);
                out.push(Detection {
                    delay_s: map.row_axis[k],
                    doppler_hz: map.doppler_axis_hz[col],
                    power_db: v,
                    bin: (k, kf),
                });
            }
        }
    }
    out.sort_by(|a, b| {
        b.power_db
            .total_cmp(&a.power_db)
            .then(a.bin.0.cmp(&b.bin.0))
            .then(a.bin.1.cmp(&b.bin.1))
    });
    out.truncate(max_peaks);
    Ok(out)
}
