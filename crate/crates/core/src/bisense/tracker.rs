use crate::cfg::TrackerGains;

use super::BisenseError;

/// Least-squares slope of `y` against its index.
pub fn ls_slope(y: &[f64]) -> Result<f64, BisenseError> {
    let n = y.len();
    if n < 2 {
        return Err(BisenseError::InsufficientFrames { got: n, need: 2 });
    }
    let nf = n as f64;
    let xm = (nf - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerStep {
    pub k_sens: f64,
    pub error: f64,
    pub mu: f64,
    pub eps_sio: f64,
    /// Set when this frame closed an SIO window.
    pub window_closed: bool,
}

/// Recursive sensing timing-offset estimate with windowed SIO regression.
#[derive(Debug, Clone)]
pub struct SensingTracker {
    gains: TrackerGains,
    window_len: usize,
    k_sens: Option<f64>,
    eps_sio: f64,
    /// Reconstructed delays of the current window.
    window: Vec<f64>,
    /// Integer corrections applied since the window started.
    acc: i64,
    mu: f64,
    over_count: usize,
    window_index: u64,
}

impl SensingTracker {
    pub fn new(gains: TrackerGains, window_len: usize) -> Self {
        assert!(window_len >= 2);
        Self {
            gains,
            window_len,
            k_sens: None,
            eps_sio: 0.0,
            window: Vec::with_capacity(window_len),
            acc: 0,
            mu: gains.mu_default,
            over_count: 0,
            window_index: 0,
        }
    }

    pub fn k_sens(&self) -> Option<f64> {
        self.k_sens
    }

    /// SIO drift from the last completed window, samples per frame.
    pub fn eps_sio(&self) -> f64 {
        self.eps_sio
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn window_index(&self) -> u64 {
        self.window_index
    }

    pub fn set_mu_default(&mut self, mu: f64) {
        self.gains.mu_default = mu;
        if self.over_count <= self.gains.escalation_frames {
            self.mu = mu;
        }
    }

    /// Average SIO of the last window in seconds, from the drift per frame.
    pub fn sio_seconds(&self, frame_len: usize, bandwidth_hz: f64) -> f64 {
        self.eps_sio / (frame_len as f64 * bandwidth_hz)
    }

    /// One frame: `k_tau` measured in this frame, `applied` the integer correction that took
    /// effect at its start.
    pub fn step(&mut self, k_tau: f64, applied: i64) -> TrackerStep {
        let (k_sens, error) = match self.k_sens {
            None => (k_tau, 0.0),
            Some(prev) => {
                // error against the previous estimate moved by the integer correction
                let e = k_tau - (prev - applied as f64);
                if e.abs() > self.gains.error_threshold_samples {
                    self.over_count += 1;
                } else {
                    self.over_count = 0;
                }
                self.mu = if self.over_count > self.gains.escalation_frames {
                    self.gains.mu_boost
                } else {
                    self.gains.mu_default
                };
                (prev + self.eps_sio - applied as f64 + self.mu * e, e)
            }
        };
        self.k_sens = Some(k_sens);
        if self.window.is_empty() {
            self.acc = 0;
        } else {
            self.acc += applied;
        }
        self.window.push(k_tau + self.acc as f64);
        let mut window_closed = false;
        if self.window.len() == self.window_len {
            self.eps_sio = ls_slope(&self.window).expect("window has at least two frames");
            self.window.clear();
            self.window_index += 1;
            window_closed = true;
        }
        TrackerStep { k_sens, error, mu: self.mu, eps_sio: self.eps_sio, window_closed }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gains() -> TrackerGains {
        TrackerGains { mu_default: 1e-5, mu_boost: 1e-2, error_threshold_samples: 0.1, escalation_frames: 50 }
    }

    #[test]
    fn slope_examples() {
        let y: Vec<f64> = (0..100).map(|l| 3.0 + 0.01 * l as f64).collect();
        assert!((ls_slope(&y).unwrap() - 0.01).abs() <= 1e-12);
        assert_eq!(ls_slope(&[4.0; 10]).unwrap(), 0.0);
        assert_eq!(ls_slope(&[1.0]), Err(BisenseError::InsufficientFrames { got: 1, need: 2 }));
    }

    #[test]
    fn fixed_point() {
        let mut t = SensingTracker::new(gains(), 100);
        t.step(5.0, 0);
        for _ in 0..20 {
            let s = t.step(5.0, 0);
            assert_eq!(s.k_sens, 5.0);
            assert_eq!(s.error, 0.0);
        }
    }

    /// True delay drifting by `eps` per frame with a unit correction whenever it passes
    /// `start + 1`.
    fn drifting(eps: f64, frames: usize) -> Vec<(f64, i64)> {
        let mut out = Vec::new();
        let mut k = 8.0;
        let mut applied = 0;
        for _ in 0..frames {
            k -= applied as f64;
            out.push((k, applied));
            applied = if k > 8.5 { 1 } else { 0 };
            k += eps;
        }
        out
    }

    #[test]
    fn window_slope_sees_through_corrections() {
        let eps = 0.1152;
        let mut t = SensingTracker::new(gains(), 100);
        let mut closed = 0;
        for (k, a) in drifting(eps, 300) {
            if t.step(k, a).window_closed {
                closed += 1;
                assert!((t.eps_sio() - eps).abs() < 1e-9);
            }
        }
        assert_eq!(closed, 3);
    }

    #[test]
    fn matched_drift_accumulates_only_through_gain() {
        let eps = 0.05;
        let mut t = SensingTracker::new(gains(), 100);
        t.eps_sio = eps;
        let truth = drifting(eps, 2000);
        for (i, &(k, a)) in truth.iter().enumerate() {
            let s = t.step(k, a);
            if i > 0 {
                assert!((s.error - eps).abs() <= 1e-6 * i as f64);
            }
            // each frame moves the estimate by mu * e, about 5e-7 samples
            assert!((s.k_sens - k).abs() <= 1e-6 * i as f64 + 1e-9);
        }
    }

    #[test]
    fn step_disturbance_recovery() {
        let mut t = SensingTracker::new(gains(), 100_000);
        t.step(0.0, 0);
        let mut frames_to_settle = None;
        for i in 1..=1000 {
            let s = t.step(1.0, 0);
            if s.error.abs() < 0.1 && frames_to_settle.is_none() {
                frames_to_settle = Some(i);
            }
        }
        // boost starts after 51 frames over threshold; (1 - 1e-2)^k < 0.1 needs k = 230
        let settle = frames_to_settle.unwrap();
        let boost_start: usize = 52;
        let k = settle - boost_start;
        let want = (0.1f64.ln() / (1.0f64 - 1e-2).ln()).ceil() as usize;
        assert!(k.abs_diff(want) <= 2, "settled {k} frames after boost, closed form {want}");
    }

    proptest! {
        #[test]
        fn window_bounded(k in proptest::collection::vec(-5.0f64..5.0, 1..400)) {
            let mut t = SensingTracker::new(gains(), 37);
            for v in &k {
                t.step(*v, 0);
                prop_assert!(t.window.len() < 37);
                prop_assert!(t.mu == 1e-5 || t.mu == 1e-2);
            }
        }
    }
}
