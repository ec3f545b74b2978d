use crate::cfg::SystemConfig;
use crate::dsp::{CMatrix, Cf, FftCache};

use super::ResourceGrid;

/// Unitary IFFT of every grid column with the CP prepended; `M * (N + N_CP)` samples.
pub fn ofdm_modulate(grid: &ResourceGrid, cfg: &SystemConfig, fft: &mut FftCache) -> Vec<Cf> {
    let n = cfg.num_subcarriers;
    let cp = cfg.cp_len;
    let ns = n + cp;
    let m = grid.num_symbols();
    let mut out = vec![Cf::new(0.0, 0.0); m * ns];
    let mut buf = vec![Cf::new(0.0, 0.0); n];
    for mm in 0..m {
        buf.copy_from_slice(grid.cells.column(mm));
        fft.unitary_inverse(&mut buf);
        let sym = &mut out[mm * ns..(mm + 1) * ns];
        sym[..cp].copy_from_slice(&buf[n - cp..]);
        sym[cp..].copy_from_slice(&buf);
    }
    out
}

/// CP removal and unitary FFT of each whole symbol in `samples`.
pub fn ofdm_demodulate(samples: &[Cf], cfg: &SystemConfig, fft: &mut FftCache) -> CMatrix {
    let n = cfg.num_subcarriers;
    let ns = cfg.symbol_len();
    let m = samples.len() / ns;
    let mut out = CMatrix::zeros(n, m);
    for mm in 0..m {
        let col = out.column_mut(mm);
        col.copy_from_slice(&samples[mm * ns + cfg.cp_len..(mm + 1) * ns]);
        fft.unitary_forward(col);
    }
    out
}
