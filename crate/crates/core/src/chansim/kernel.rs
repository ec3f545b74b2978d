//! Kaiser-windowed sinc interpolator with a precomputed table of fractional phases.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use crate::dsp::{bessel_i0, Cf};

pub const TAPS: usize = 63;
pub const HALF: i64 = 31;
pub const PHASES: usize = 16_384;
const KAISER_BETA: f64 = 8.0;
const WINDOW_HALF_WIDTH: f64 = 32.0;

/// Windowed sinc evaluated at offset `x` samples.
pub fn kaiser_sinc(x: f64) -> f64 {
    if x.abs() >= WINDOW_HALF_WIDTH {
        return 0.0;
    }
    let r = x / WINDOW_HALF_WIDTH;
    let w = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / bessel_i0(KAISER_BETA);
    let s = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    s * w
}

/// Taps for every fractional offset `f = -0.5 + p/PHASES`. The signal occupies `[0, B)`,
/// so the interpolator is applied around the band centre: taps carry `(-1)^j` and each
/// phase carries the rotation `e^{j pi f}`.
#[derive(Debug)]
pub struct InterpTable {
    taps: Vec<f64>,
    rot: Vec<Cf>,
}

impl InterpTable {
    fn build() -> Self {
        let mut taps = vec![0.0; PHASES * TAPS];
        let mut rot = Vec::with_capacity(PHASES);
        for p in 0..PHASES {
            let f = -0.5 + p as f64 / PHASES as f64;
            for (t, j) in (-HALF..=HALF).enumerate() {
                let sign = if j.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                taps[p * TAPS + t] = if f == 0.0 {
                    if j == 0 { 1.0 } else { 0.0 }
                } else {
                    sign * kaiser_sinc(f - j as f64)
                };
            }
            rot.push(Cf::from_polar(1.0, PI * f));
        }
        Self { taps, rot }
    }

    pub fn shared() -> Arc<InterpTable> {
        static TABLE: OnceLock<Arc<InterpTable>> = OnceLock::new();
        TABLE.get_or_init(|| Arc::new(Self::build())).clone()
    }

    /// Splits a position into its base index and table phase.
    #[inline]
    pub fn locate(base: i64, offset: f64) -> (i64, usize) {
        let r = offset.round();
        let f = offset - r;
        let mut i0 = base + r as i64;
        let mut p = ((f + 0.5) * PHASES as f64).round() as usize;
        if p >= PHASES {
            p -= PHASES;
            i0 += 1;
        }
        (i0, p)
    }

    pub const CENTER: usize = PHASES / 2;

    /// Interpolated value at phase `p` from the 63 samples centred on the base index.
    #[inline]
    pub fn apply(&self, window: &[Cf], p: usize) -> Cf {
        debug_assert_eq!(window.len(), TAPS);
        if p == Self::CENTER {
            return window[HALF as usize];
        }
        let taps = &self.taps[p * TAPS..(p + 1) * TAPS];
        let (mut re, mut im) = (0.0, 0.0);
        for (s, h) in window.iter().zip(taps) {
            re += s.re * h;
            im += s.im * h;
        }
        Cf::new(re, im) * self.rot[p]
    }
}
