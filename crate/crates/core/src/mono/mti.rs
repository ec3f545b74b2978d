//! Slow-time IIR clutter filter realized as a cascade of second-order sections.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::dsp::Cf;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MtiError {
    #[error("coefficient file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unstable filter: {0}")]
    UnstableFilter(String),
    #[error("filter passes DC (|H(1)| = {0:e})")]
    DcLeak(f64),
    #[error("invalid design: {0}")]
    Design(String),
}

/// One section `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosCascade {
    pub sections: Vec<Biquad>,
    pub gain: f64,
}

impl SosCascade {
    /// 4th-order Butterworth high-pass at 0.02 of the slow-time rate.
    pub fn default_highpass() -> Self {
        Self::butterworth_highpass(4, 0.04).expect("default design is valid")
    }

    /// Digital Butterworth high-pass via the bilinear transform.
    /// `wn` is the cutoff relative to Nyquist, in (0, 1).
    pub fn butterworth_highpass(order: usize, wn: f64) -> Result<Self, MtiError> {
        if order == 0 || !(wn > 0.0 && wn < 1.0) {
            return Err(MtiError::Design(format!("order {order}, wn {wn}")));
        }
        let fs = 2.0;
        let warped = 2.0 * fs * (PI * wn / fs).tan();
        let n = order as f64;
        // analog low-pass prototype poles in the left half-plane
        let proto: Vec<Complex64> = (0..order)
            .map(|k| {
                let theta = PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
                Complex64::from_polar(1.0, theta)
            })
            .collect();
        let analog: Vec<Complex64> = proto.iter().map(|p| warped / p).collect();
        let two_fs = Complex64::new(2.0 * fs, 0.0);
        let digital: Vec<Complex64> = analog
            .iter()
            .map(|p| (two_fs + p) / (two_fs - p))
            .collect();
        // zeros at s=0 map to z=1; the prototype has unit gain and prod(-p)=1
        let mut denom = Complex64::new(1.0, 0.0);
        for p in &analog {
            denom *= two_fs - p;
        }
        let gain = ((2.0 * fs).powi(order as i32) / denom).re;

        let mut pairs: Vec<Complex64> = digital.iter().copied().filter(|p| p.im > 1e-12).collect();
        let mut reals: Vec<f64> = digital
            .iter()
            .filter(|p| p.im.abs() <= 1e-12)
            .map(|p| p.re)
            .collect();
        pairs.sort_by(|x, y| x.norm().total_cmp(&y.norm()));
        reals.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
        let mut sections = Vec::new();
        for r in reals {
            sections.push(Biquad {
                b: [1.0, -1.0, 0.0],
                a: [-r, 0.0],
            });
        }
        for p in pairs {
            sections.push(Biquad {
                b: [1.0, -2.0, 1.0],
                a: [-2.0 * p.re, p.norm_sqr()],
            });
        }
        Ok(Self { sections, gain })
    }

    /// Parses `b0 b1 b2 1 a1 a2` rows followed by `gain g`.
    pub fn parse(text: &str) -> Result<Self, MtiError> {
        let mut sections = Vec::new();
        let mut gain = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| MtiError::Parse { line: i + 1, reason };
            if gain.is_some() {
                return Err(err("content after gain line".into()));
            }
            if let Some(rest) = line.strip_prefix("gain") {
                let g: f64 = rest
                    .trim()
                    .parse()
                    .map_err(|e| err(format!("bad gain: {e}")))?;
                gain = Some(g);
                continue;
            }
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| err(format!("bad number: {e}")))?;
            if v.len() != 6 {
                return Err(err(format!("expected 6 coefficients, got {}", v.len())));
            }
            if v[3] == 0.0 || !v.iter().all(|x| x.is_finite()) {
                return Err(err("a0 must be non-zero and all values finite".into()));
            }
            let a0 = v[3];
            sections.push(Biquad {
                b: [v[0] / a0, v[1] / a0, v[2] / a0],
                a: [v[4] / a0, v[5] / a0],
            });
        }
        let gain = gain.ok_or(MtiError::Parse {
            line: text.lines().count(),
            reason: "missing `gain` line".into(),
        })?;
        if sections.is_empty() {
            return Err(MtiError::Parse {
                line: 1,
                reason: "no sections".into(),
            });
        }
        Ok(Self { sections, gain })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for q in &self.sections {
            let _ = writeln!(
                s,
                "{:?} {:?} {:?} 1 {:?} {:?}",
                q.b[0], q.b[1], q.b[2], q.a[0], q.a[1]
            );
        }
        let _ = writeln!(s, "gain {:?}", self.gain);
        s
    }

    /// Transfer function at normalized frequency `f` (cycles per sample).
    pub fn response(&self, f: f64) -> Cf {
        let z1 = Cf::from_polar(1.0, -2.0 * PI * f);
        let z2 = z1 * z1;
        let mut h = Cf::new(self.gain, 0.0);
        for q in &self.sections {
            h *= (q.b[0] + q.b[1] * z1 + q.b[2] * z2) / (1.0 + q.a[0] * z1 + q.a[1] * z2);
        }
        h
    }

    /// All poles strictly inside the unit circle and the DC gain suppressed.
    pub fn validate(&self) -> Result<(), MtiError> {
        for (i, q) in self.sections.iter().enumerate() {
            let (a1, a2) = (q.a[0], q.a[1]);
            if !(a2.abs() < 1.0 && a1.abs() < 1.0 + a2) {
                return Err(MtiError::UnstableFilter(format!(
                    "section {i}: a1={a1}, a2={a2}"
                )));
            }
        }
        let dc = self.response(0.0).norm();
        if dc > 1e-6 {
            return Err(MtiError::DcLeak(dc));
        }
        Ok(())
    }

    /// Impulse response by direct evaluation of the difference equations.
    pub fn impulse_response(&self, len: usize) -> Vec<f64> {
        let mut f = MtiFilter::new(self.clone(), 1);
        (0..len)
            .map(|k| {
                let mut col = [Cf::new(if k == 0 { 1.0 } else { 0.0 }, 0.0)];
                f.process_column(&mut col);
                col[0].re
            })
            .collect()
    }
}

/// Per-subcarrier streaming state of the cascade (transposed direct form II).
#[derive(Debug, Clone)]
pub struct MtiFilter {
    cascade: SosCascade,
    width: usize,
    /// `state[(s * width + n)]` holds the two registers of section `s`, subcarrier `n`.
    state: Vec<[Cf; 2]>,
}

impl MtiFilter {
    pub fn new(cascade: SosCascade, width: usize) -> Self {
        let state = vec![[Cf::new(0.0, 0.0); 2]; cascade.sections.len() * width];
        Self {
            cascade,
            width,
            state,
        }
    }

    pub fn cascade(&self) -> &SosCascade {
        &self.cascade
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = [Cf::new(0.0, 0.0); 2]);
    }

    /// Filters one slow-time sample for every subcarrier, in place.
    pub fn process_column(&mut self, col: &mut [Cf]) {
        assert_eq!(col.len(), self.width);
        let g = self.cascade.gain;
        col.iter_mut().for_each(|x| *x *= g);
        for (s, q) in self.cascade.sections.iter().enumerate() {
            let st = &mut self.state[s * self.width..(s + 1) * self.width];
            for (x, r) in col.iter_mut().zip(st.iter_mut()) {
                let y = q.b[0] * *x + r[0];
                r[0] = q.b[1] * *x - q.a[0] * y + r[1];
                r[1] = q.b[2] * *x - q.a[1] * y;
                *x = y;
            }
        }
    }
}
