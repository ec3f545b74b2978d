use std::f64::consts::{PI, SQRT_2};

use crate::cfg::{FramePlan, SystemConfig};
use crate::dsp::{cis_cycles, wrap_phase, CMatrix, Cf, FftCache};
use crate::phytx::ZcSequence;

use super::UeError;

/// Below this magnitude a channel cell is treated as erased.
pub const ERASURE_LEVEL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    /// Channel at the sync symbol, including the cell amplitude.
    pub h_sync: Vec<Cf>,
    /// Unitary inverse DFT of `h_sync`.
    pub delay_spectrum: Vec<Cf>,
    pub k_max: usize,
    pub k_to: i64,
    pub f_o_hz: f64,
    pub dts_s: f64,
}

impl ChannelEstimate {
    pub fn delay_power(&self) -> Vec<f64> {
        self.delay_spectrum.iter().map(|v| v.norm_sqr()).collect()
    }
}

/// Timing correction relative to sample `n_lag` from the delay-spectrum peak.
pub fn timing_from_peak(k_max: usize, n: usize, n_lag: usize) -> i64 {
    if k_max <= n / 2 {
        k_max as i64 - n_lag as i64
    } else {
        k_max as i64 - n as i64 - n_lag as i64
    }
}

pub fn estimate_channel(
    grid: &CMatrix,
    zc: &ZcSequence,
    cfg: &SystemConfig,
    fft: &mut FftCache,
) -> ChannelEstimate {
    let col = grid.column(cfg.sync_symbol_index);
    let mut h_sync: Vec<Cf> = col.iter().zip(&zc.values).map(|(b, z)| b / z).collect();
    for &z in &cfg.null_subcarriers {
        h_sync[z] = Cf::new(0.0, 0.0);
    }
    let mut delay_spectrum = h_sync.clone();
    fft.unitary_inverse(&mut delay_spectrum);
    let k_max = delay_spectrum
        .iter()
        .enumerate()
        .fold((0, -1.0), |a, (k, v)| if v.norm_sqr() > a.1 { (k, v.norm_sqr()) } else { a })
        .0;
    ChannelEstimate {
        k_to: timing_from_peak(k_max, cfg.num_subcarriers, cfg.n_lag),
        h_sync,
        delay_spectrum,
        k_max,
        f_o_hz: 0.0,
        dts_s: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotRegression {
    pub pilots: Vec<usize>,
    /// Unwrapped phases of the averaged cross-symbol autocorrelation.
    pub phases: Vec<f64>,
    pub weights: Vec<f64>,
    pub f_o_hz: f64,
    pub dts_s: f64,
}

/// Averaged cross-symbol autocorrelation on every pilot, skipping pairs that touch the
/// sync symbol.
pub fn pilot_autocorrelation(grid: &CMatrix, cfg: &SystemConfig) -> Vec<Cf> {
    let ms = cfg.sync_symbol_index;
    let pairs: Vec<usize> = (0..grid.cols.saturating_sub(1))
        .filter(|&m| m != ms && m + 1 != ms)
        .collect();
    cfg.pilot_indices
        .iter()
        .map(|&n| {
            let s: Cf = pairs.iter().map(|&m| grid.get(n, m).conj() * grid.get(n, m + 1)).sum();
            if pairs.is_empty() {
                s
            } else {
                s / pairs.len() as f64
            }
        })
        .collect()
}

/// Weighted fit of `2 pi (f_o T_O - n df N_s dT_s)` to unwrapped phases on subcarriers `pilots`.
pub fn fit_phase_law(
    pilots: &[usize],
    phases: &[f64],
    weights: &[f64],
    cfg: &SystemConfig,
) -> Result<(f64, f64), UeError> {
    // unknowns scaled to u = f_o T_O and v = df N_s dT_s so rows are 2 pi [1, -n]
    let (mut s00, mut s01, mut s11, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&n, &p), &w) in pilots.iter().zip(phases).zip(weights) {
        let a0 = 2.0 * PI;
        let a1 = -2.0 * PI * n as f64;
        s00 += w * a0 * a0;
        s01 += w * a0 * a1;
        s11 += w * a1 * a1;
        r0 += w * a0 * p;
        r1 += w * a1 * p;
    }
    let det = s00 * s11 - s01 * s01;
    if !(det.is_finite()) || det <= 1e-12 * (s00 * s11).max(f64::MIN_POSITIVE) || s00 <= 0.0 {
        return Err(UeError::SingularNormalEquations);
    }
    let u = (s11 * r0 - s01 * r1) / det;
    let v = (s00 * r1 - s01 * r0) / det;
    let t_o = cfg.symbol_duration_s();
    let scale = cfg.subcarrier_spacing_hz() * cfg.symbol_len() as f64;
    Ok((u / t_o, v / scale))
}

/// Unwraps in place along the slice so successive differences stay within pi.
pub fn unwrap_phases(p: &mut [f64]) {
    for i in 1..p.len() {
        let d = wrap_phase(p[i] - p[i - 1]);
        p[i] = p[i - 1] + d;
    }
}

pub fn pilot_regression(grid: &CMatrix, cfg: &SystemConfig) -> Result<PilotRegression, UeError> {
    if cfg.pilot_indices.len() < 2 {
        return Err(UeError::SingularNormalEquations);
    }
    let r = pilot_autocorrelation(grid, cfg);
    let weights: Vec<f64> = r.iter().map(|v| v.norm_sqr()).collect();
    let mut phases: Vec<f64> = r.iter().map(|v| v.arg()).collect();
    unwrap_phases(&mut phases);
    let (f_o_hz, dts_s) = fit_phase_law(&cfg.pilot_indices, &phases, &weights, cfg)?;
    Ok(PilotRegression {
        pilots: cfg.pilot_indices.clone(),
        phases,
        weights,
        f_o_hz,
        dts_s,
    })
}

/// Channel over the whole frame, propagated from the sync symbol.
pub fn propagate_channel(h_sync: &[Cf], f_o_hz: f64, dts_s: f64, cfg: &SystemConfig) -> CMatrix {
    let n = h_sync.len();
    let m = cfg.symbols_per_frame;
    let t_o = cfg.symbol_duration_s();
    let per_n = cfg.subcarrier_spacing_hz() * cfg.symbol_len() as f64 * dts_s;
    let mut h = CMatrix::zeros(n, m);
    for mm in 0..m {
        let dm = mm as f64 - cfg.sync_symbol_index as f64;
        let col = h.column_mut(mm);
        for (i, v) in col.iter_mut().enumerate() {
            *v = h_sync[i] * cis_cycles(dm * (f_o_hz * t_o - i as f64 * per_n));
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    /// Equalized DATA cells in mapping order.
    pub data: Vec<Cf>,
    /// Two LLRs per DATA cell, positive for bit 0.
    pub llr: Vec<f64>,
    /// Residual variance of equalized pilots.
    pub sigma2: f64,
    pub snr_db: f64,
    pub erased: usize,
    pub pilot_rms_error: f64,
}

/// One-tap equalization with LLRs scaled by the pilot residual variance.
pub fn equalize(
    grid: &CMatrix,
    h: &CMatrix,
    zc: &ZcSequence,
    plan: &FramePlan,
) -> Equalized {
    let mut err = 0.0;
    let mut count = 0usize;
    for &m in &plan.data_symbols {
        for &n in &plan.pilot_subcarriers {
            let hv = h.get(n, m);
            if hv.norm() < ERASURE_LEVEL {
                continue;
            }
            err += (grid.get(n, m) / hv - zc.values[n]).norm_sqr();
            count += 1;
        }
    }
    let sigma2 = if count == 0 { f64::INFINITY } else { err / count as f64 };
    let snr_db = if count == 0 {
        f64::NEG_INFINITY
    } else {
        -10.0 * sigma2.max(1e-30).log10()
    };
    let llr_scale = 4.0 * SQRT_2 / sigma2.max(1e-6);
    let mut data = Vec::with_capacity(plan.data_cells_per_frame());
    let mut llr = Vec::with_capacity(2 * plan.data_cells_per_frame());
    let mut erased = 0;
    for (n, m) in plan.data_cells() {
        let hv = h.get(n, m);
        if hv.norm() < ERASURE_LEVEL || !sigma2.is_finite() {
            erased += 1;
            data.push(Cf::new(0.0, 0.0));
            llr.extend([0.0, 0.0]);
            continue;
        }
        let b = grid.get(n, m) / hv;
        data.push(b);
        llr.extend([llr_scale * b.re, llr_scale * b.im]);
    }
    Equalized {
        data,
        llr,
        sigma2,
        snr_db,
        erased,
        pilot_rms_error: sigma2.sqrt(),
    }
}
