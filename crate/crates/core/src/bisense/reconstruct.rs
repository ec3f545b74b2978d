use std::f64::consts::FRAC_1_SQRT_2;

use crate::cfg::{CellKind, FramePlan};
use crate::dsp::{CMatrix, Cf};
use crate::phytx::ZcSequence;

fn decide(x: f64) -> f64 {
    // zero decides to +1
    if x < 0.0 {
        -FRAC_1_SQRT_2
    } else {
        FRAC_1_SQRT_2
    }
}

/// Hard QPSK decisions on the equalized DATA cells (given in mapping order); sync and pilot
/// cells take the known sequence, null cells stay zero.
pub fn reconstruct_symbols(data: &[Cf], zc: &ZcSequence, plan: &FramePlan) -> CMatrix {
    let mut out = CMatrix::zeros(plan.num_subcarriers, plan.symbols_per_frame);
    for mm in 0..plan.symbols_per_frame {
        for nn in 0..plan.num_subcarriers {
            match plan.cell_kind(nn, mm) {
                CellKind::Sync | CellKind::Pilot => out.set(nn, mm, zc.values[nn]),
                CellKind::Data | CellKind::Null => {}
            }
        }
    }
    for ((nn, mm), v) in plan.data_cells().zip(data) {
        out.set(nn, mm, Cf::new(decide(v.re), decide(v.im)));
    }
    out
}

/// Received grid divided by the reconstructed symbols scaled to the cell amplitude; cells
/// without a symbol are zero.
pub fn sensing_symbols(grid: &CMatrix, symbols: &CMatrix, amplitude: f64) -> CMatrix {
    let mut out = grid.clone();
    for (v, s) in out.data.iter_mut().zip(&symbols.data) {
        *v = if s.norm_sqr() > 0.0 { *v / (s * amplitude) } else { Cf::new(0.0, 0.0) };
    }
    out
}
