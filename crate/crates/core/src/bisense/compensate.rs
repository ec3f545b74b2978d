use crate::cfg::SystemConfig;
use crate::dsp::{cis_cycles, CMatrix};

/// Removes the sensing timing offset `k_sens` (samples) and the in-frame drift of
/// `eps_per_frame` samples per frame from every cell.
pub fn compensate(f: &CMatrix, k_sens: f64, eps_per_frame: f64, cfg: &SystemConfig) -> CMatrix {
    let n = f.rows as f64;
    let m_total = cfg.symbols_per_frame as f64;
    let mut out = f.clone();
    for m in 0..out.cols {
        let shift = k_sens + (m as f64 - cfg.sync_symbol_index as f64) * eps_per_frame / m_total;
        let col = out.column_mut(m);
        for (i, v) in col.iter_mut().enumerate() {
            *v *= cis_cycles(i as f64 * shift / n);
        }
    }
    out
}
