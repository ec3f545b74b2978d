use crate::cfg::SystemConfig;
use crate::dsp::{CMatrix, Cf, FftCache};
use crate::phytx::{ofdm_demodulate, ResourceGrid};

use super::MonoError;

/// CP removal, FFT and division by the transmitted symbols. Cells on null subcarriers are
/// returned as zero.
pub fn demap_echo(
    rx_frame: &[Cf],
    tx_grid: &ResourceGrid,
    cfg: &SystemConfig,
    fft: &mut FftCache,
) -> Result<CMatrix, MonoError> {
    let expected = tx_grid.num_symbols() * cfg.symbol_len();
    if rx_frame.len() != expected {
        return Err(MonoError::FrameLength {
            expected,
            got: rx_frame.len(),
        });
    }
    let mut f = ofdm_demodulate(rx_frame, cfg, fft);
    let n = cfg.num_subcarriers;
    for m in 0..f.cols {
        let tx = tx_grid.cells.column(m);
        let col = f.column_mut(m);
        for i in 0..n {
            let b = tx[i];
            if b.norm_sqr() > 0.0 {
                col[i] /= b;
            } else if cfg.null_subcarriers.binary_search(&i).is_ok() {
                col[i] = Cf::new(0.0, 0.0);
            } else {
                return Err(MonoError::ZeroSymbolCell { n: i, m });
            }
        }
    }
    Ok(f)
}
