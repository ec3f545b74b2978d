use std::f64::consts::PI;

use crate::cfg::SystemConfig;
use crate::dsp::{Cf, FftCache};
use crate::phytx::ZcSequence;

use super::UeError;

/// Time-domain sync symbol, CP included, at unit cell amplitude.
pub fn sync_reference(cfg: &SystemConfig, zc: &ZcSequence, fft: &mut FftCache) -> Vec<Cf> {
    let n = cfg.num_subcarriers;
    let mut body = zc.values.clone();
    for &z in &cfg.null_subcarriers {
        body[z] = Cf::new(0.0, 0.0);
    }
    fft.unitary_inverse(&mut body);
    let mut out = Vec::with_capacity(n + cfg.cp_len);
    out.extend_from_slice(&body[n - cfg.cp_len..]);
    out.extend_from_slice(&body);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncHit {
    /// Start of the sync symbol (CP included) within the block.
    pub k_peak: usize,
    pub k_to: i64,
    pub metric: f64,
}

/// Normalized correlation of every window of `block` against `reference`.
pub fn correlation_metric(block: &[Cf], reference: &[Cf], fft: &mut FftCache) -> Vec<f64> {
    let r = reference.len();
    if block.len() < r {
        return Vec::new();
    }
    let len = (block.len() + r).next_power_of_two();
    let fwd = fft.forward(len);
    let inv = fft.inverse(len);
    let mut a = block.to_vec();
    a.resize(len, Cf::new(0.0, 0.0));
    let mut b = reference.to_vec();
    b.resize(len, Cf::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y.conj();
    }
    inv.process(&mut a);
    let ref_energy: f64 = reference.iter().map(|v| v.norm_sqr()).sum();
    let mut prefix = Vec::with_capacity(block.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in block {
        acc += v.norm_sqr();
        prefix.push(acc);
    }
    let scale = 1.0 / len as f64;
    (0..=block.len() - r)
        .map(|k| {
            let e = (prefix[k + r] - prefix[k]).max(0.0);
            let c = (a[k] * scale).norm_sqr();
            if e * ref_energy <= 1e-300 {
                0.0
            } else {
                (c / (e * ref_energy)).min(1.0)
            }
        })
        .collect()
}

/// Searches a block of `2 M N_s` samples for the sync symbol.
pub fn sync_search(
    block: &[Cf],
    reference: &[Cf],
    cfg: &SystemConfig,
    fft: &mut FftCache,
) -> Result<Option<SyncHit>, UeError> {
    let expected = 2 * cfg.frame_len();
    if block.len() != expected {
        return Err(UeError::BlockLength { expected, got: block.len() });
    }
    let metric = correlation_metric(block, reference, fft);
    let (k_peak, best) = metric
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (k, &v)| if v > a.1 { (k, v) } else { a });
    if best < cfg.sync_threshold {
        return Ok(None);
    }
    let k_to = k_peak as i64
        - (cfg.sync_symbol_index * cfg.symbol_len()) as i64
        - cfg.n_lag as i64;
    Ok(Some(SyncHit { k_peak, k_to, metric: best }))
}

/// CP-based frequency offset over every whole symbol of a frame-aligned block.
pub fn cp_cfo_estimate(block: &[Cf], cfg: &SystemConfig) -> f64 {
    cp_cfo_from(block, 0, cfg)
}

/// Same as [`cp_cfo_estimate`] with symbol boundaries at `start + j N_s`.
pub fn cp_cfo_from(block: &[Cf], start: usize, cfg: &SystemConfig) -> f64 {
    let (n, cp, ns) = (cfg.num_subcarriers, cfg.cp_len, cfg.symbol_len());
    let mut acc = Cf::new(0.0, 0.0);
    let mut s = start;
    while s + ns <= block.len() {
        for i in 0..cp {
            acc += block[s + i].conj() * block[s + i + n];
        }
        s += ns;
    }
    acc.arg() / (2.0 * PI * n as f64 * cfg.sample_period_s())
}
