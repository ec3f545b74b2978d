use crate::cfg::LockParams;

/// Counts consecutive bad frames and reports when lock should be dropped.
#[derive(Debug, Clone)]
pub struct LockSupervisor {
    params: LockParams,
    timing_limit: i64,
    timing_bad: usize,
    snr_bad: usize,
}

impl LockSupervisor {
    pub fn new(params: LockParams, cp_len: usize) -> Self {
        Self {
            params,
            timing_limit: (cp_len / 2) as i64,
            timing_bad: 0,
            snr_bad: 0,
        }
    }

    pub fn reset(&mut self) {
        self.timing_bad = 0;
        self.snr_bad = 0;
    }

    /// Returns `true` when lock is lost after this frame.
    pub fn update(&mut self, k_to: i64, snr_db: f64) -> bool {
        if k_to.abs() > self.timing_limit {
            self.timing_bad += 1;
        } else {
            self.timing_bad = 0;
        }
        if !(snr_db >= self.params.snr_db) {
            self.snr_bad += 1;
        } else {
            self.snr_bad = 0;
        }
        let lost = self.timing_bad >= self.params.timing_frames || self.snr_bad >= self.params.snr_frames;
        if lost {
            self.reset();
        }
        lost
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sup() -> LockSupervisor {
        LockSupervisor::new(LockParams { timing_frames: 3, snr_db: 0.0, snr_frames: 10 }, 128)
    }

    #[test]
    fn hysteresis() {
        let mut s = sup();
        for _ in 0..100 {
            assert!(!s.update(1, 25.0));
        }
        assert!(!s.update(500, 25.0));
        assert!(!s.update(0, 25.0));
        assert!(!s.update(65, 25.0));
        assert!(!s.update(65, 25.0));
        assert!(s.update(-65, 25.0));
    }

    #[test]
    fn outage_drops_within_ten_frames() {
        let mut s = sup();
        let lost_at = (1..=20).find(|_| s.update(0, f64::NEG_INFINITY)).unwrap();
        assert_eq!(lost_at, 10);
        let mut s = sup();
        for _ in 0..9 {
            assert!(!s.update(0, -3.0));
        }
        assert!(!s.update(0, 3.0));
        assert!(!s.update(0, -3.0));
    }
}
