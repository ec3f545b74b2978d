use super::BisenseError;
use crate::dsp::Cf;

/// Fractional offset of the peak at `k_max` from the real parts of the neighbour ratios.
pub fn quinn_fractional(spectrum: &[Cf], k_max: usize) -> Result<f64, BisenseError> {
    let n = spectrum.len();
    let peak = spectrum[k_max];
    if peak.norm_sqr() == 0.0 {
        return Err(BisenseError::ZeroPeak);
    }
    let r_plus = (spectrum[(k_max + 1) % n] / peak).re;
    let r_minus = (spectrum[(k_max + n - 1) % n] / peak).re;
    let d_plus = r_plus / (r_plus - 1.0);
    let d_minus = r_minus / (1.0 - r_minus);
    let d = if d_minus > 0.0 && d_plus > 0.0 { d_plus } else { d_minus };
    Ok(if d.is_finite() { d.clamp(-0.5, 0.5) } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayEstimate {
    /// Peak bin, negative when it lies in the upper half of the spectrum.
    pub k_max: i64,
    pub delta_frac: f64,
    pub k_tau: f64,
    pub tau_s: f64,
}

pub fn delay_estimate(spectrum: &[Cf], bandwidth_hz: f64) -> Result<DelayEstimate, BisenseError> {
    let n = spectrum.len();
    let k = spectrum
        .iter()
        .enumerate()
        .fold((0, -1.0), |a, (k, v)| if v.norm_sqr() > a.1 { (k, v.norm_sqr()) } else { a })
        .0;
    let delta_frac = quinn_fractional(spectrum, k)?;
    let k_max = if k <= n / 2 { k as i64 } else { k as i64 - n as i64 };
    let k_tau = k_max as f64 + delta_frac;
    Ok(DelayEstimate { k_max, delta_frac, k_tau, tau_s: k_tau / bandwidth_hz })
}
