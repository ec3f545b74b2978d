//! Micro-Doppler spectrogram of one delay bin's slow-time sequence.

use crate::cfg::StftParams;
use crate::dsp::{hann, power_db, shifted_position, CMatrix, Cf, FftCache};

use super::periodogram::{MapKind, SenseMap};
use super::MonoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinSelect {
    /// Strongest delay bin, chosen again for every STFT window.
    Strongest,
    Fixed(usize),
}

/// Per-column size-N inverse DFT scaled by `1/N`: rows are delay bins, columns slow time.
pub fn delay_time(stream: &CMatrix, fft: &mut FftCache) -> CMatrix {
    let n = stream.rows;
    let inv = fft.inverse(n);
    let mut out = stream.clone();
    let s = 1.0 / n as f64;
    for m in 0..out.cols {
        let col = out.column_mut(m);
        inv.process(col);
        col.iter_mut().for_each(|v| *v *= s);
    }
    out
}

/// STFT of the selected delay bin; rows are STFT frames, columns FFT-shifted Doppler bins,
/// values `|G|^2 / M_w` in dB.
pub fn micro_doppler(
    stream: &CMatrix,
    stft: &StftParams,
    interval_s: f64,
    select: BinSelect,
    fft: &mut FftCache,
) -> Result<SenseMap, MonoError> {
    let len = stream.cols;
    let (mw, hop, nfft) = (stft.window_len, stft.hop, stft.dft_size);
    if len < mw {
        return Err(MonoError::StreamTooShort { len, need: mw });
    }
    let dt = delay_time(stream, fft);
    let frames = (len - mw) / hop + 1;
    let w = hann(mw);
    let plan = fft.forward(nfft);
    let mut values_db = vec![0.0; frames * nfft];
    let mut buf = vec![Cf::new(0.0, 0.0); nfft];
    for t in 0..frames {
        let start = t * hop;
        let bin = match select {
            BinSelect::Fixed(k) => k.min(dt.rows - 1),
            BinSelect::Strongest => (0..dt.rows)
                .map(|k| (k, (start..start + mw).map(|m| dt.get(k, m).norm_sqr()).sum::<f64>()))
                .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
                .0,
        };
        buf.iter_mut().for_each(|v| *v = Cf::new(0.0, 0.0));
        for i in 0..mw {
            buf[i] = dt.get(bin, start + i) * w[i];
        }
        plan.process(&mut buf);
        for (j, v) in buf.iter().enumerate() {
            values_db[t * nfft + shifted_position(j, nfft)] = power_db(v.norm_sqr() / mw as f64);
        }
    }
    let dbin = 1.0 / (nfft as f64 * interval_s);
    Ok(SenseMap {
        kind: MapKind::Spectrogram,
        rows: frames,
        cols: nfft,
        values_db,
        row_axis: (0..frames).map(|t| (t * hop) as f64 * interval_s).collect(),
        doppler_axis_hz: (0..nfft)
            .map(|c| (c as i64 - (nfft / 2) as i64) as f64 * dbin)
            .collect(),
    })
}
