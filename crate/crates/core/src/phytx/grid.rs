use std::f64::consts::FRAC_1_SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cfg::{CellKind, FramePlan, SystemConfig};
use crate::dsp::{CMatrix, Cf};

use super::{PhyError, ZcSequence};

const PADDING_SEED: u64 = 0x0F0D_15AC_0000_0000;

/// N x M frequency-domain symbols of one frame, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    pub cells: CMatrix,
    pub frame_index: u64,
}

impl ResourceGrid {
    pub fn num_subcarriers(&self) -> usize {
        self.cells.rows
    }

    pub fn num_symbols(&self) -> usize {
        self.cells.cols
    }

    pub fn get(&self, n: usize, m: usize) -> Cf {
        self.cells.get(n, m)
    }
}

/// Unit-energy QPSK: bit 0 of each pair sets the real sign, bit 1 the imaginary sign
/// (0 maps to +). An odd trailing bit is paired with 0.
pub fn qpsk_map(bits: &[u8]) -> Vec<Cf> {
    bits.chunks(2)
        .map(|p| {
            let re = if p[0] & 1 == 0 { 1.0 } else { -1.0 };
            let im = if p.get(1).copied().unwrap_or(0) & 1 == 0 { 1.0 } else { -1.0 };
            Cf::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
        })
        .collect()
}

pub fn random_qpsk(rng: &mut impl Rng) -> Cf {
    let v: u8 = rng.random_range(0..4);
    qpsk_map(&[v & 1, v >> 1])[0]
}

/// Deterministic padding source for frame `frame_index`.
pub fn padding_rng(frame_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(PADDING_SEED ^ frame_index)
}

/// Builds the grid: ZC on the sync symbol and pilot cells, payload symbols on DATA cells in
/// plan order, seeded random QPSK in the remainder, zeros on null subcarriers. Every
/// non-null cell is scaled to the configured per-cell power.
pub fn map_grid(
    payload: &[Cf],
    cfg: &SystemConfig,
    plan: &FramePlan,
    zc: &ZcSequence,
    frame_index: u64,
) -> Result<ResourceGrid, PhyError> {
    let capacity = plan.data_cells_per_frame();
    if payload.len() > capacity {
        return Err(PhyError::Overflow {
            capacity,
            got: payload.len(),
        });
    }
    let n = cfg.num_subcarriers;
    let m = cfg.symbols_per_frame;
    let amp = cfg.cell_amplitude();
    let mut cells = CMatrix::zeros(n, m);
    for mm in 0..m {
        for nn in 0..n {
            match plan.cell_kind(nn, mm) {
                CellKind::Sync | CellKind::Pilot => cells.set(nn, mm, zc.values[nn] * amp),
                CellKind::Data | CellKind::Null => {}
            }
        }
    }
    let mut rng = padding_rng(frame_index);
    for (i, (nn, mm)) in plan.data_cells().enumerate() {
        let s = match payload.get(i) {
            Some(&s) => s,
            None => random_qpsk(&mut rng),
        };
        cells.set(nn, mm, s * amp);
    }
    Ok(ResourceGrid { cells, frame_index })
}

/// DATA cells in fill order.
pub fn read_data_cells(cells: &CMatrix, plan: &FramePlan) -> Vec<Cf> {
    plan.data_cells().map(|(n, m)| cells.get(n, m)).collect()
}
