//! Streaming propagation through the scenario paths.
//!
//! Output sample `k` of the UE link is the transmit waveform evaluated at BS-clock
//! position `k - lag(k) - d_l` for every path `l`, where `lag` integrates the sampling
//! interval error, rotated by `(f_D + cfo) * t_k` with `t_k = T_s (k - lag(k))`. The
//! monostatic link is the same with no clock terms.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::kernel::{InterpTable, HALF, TAPS};
use super::{ChanError, ChannelScenario, DriftModel, Link};
use crate::cfg::SystemConfig;
use crate::dsp::{cis_cycles, Cf};

const PHASOR_BLOCK: u64 = 64;

/// Corrections applied to the simulated UE oscillator (reference-clock mode).
#[derive(Debug, Default)]
pub struct ClockTrim {
    cfo_hz: AtomicU64,
    rho: AtomicU64,
}

impl ClockTrim {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Frequency removed from the carrier offset and fractional rate removed from the
    /// sampling interval error.
    pub fn get(&self) -> (f64, f64) {
        (
            f64::from_bits(self.cfo_hz.load(Ordering::Acquire)),
            f64::from_bits(self.rho.load(Ordering::Acquire)),
        )
    }

    pub fn set(&self, cfo_hz: f64, rho: f64) {
        self.cfo_hz.store(cfo_hz.to_bits(), Ordering::Release);
        self.rho.store(rho.to_bits(), Ordering::Release);
    }

    pub fn adjust(&self, d_cfo_hz: f64, d_rho: f64) {
        let (c, r) = self.get();
        self.set(c + d_cfo_hz, r + d_rho);
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    k0: u64,
    lag0: f64,
    rho0: f64,
    cfo_hz: f64,
    cfo_cycles0: f64,
}

#[derive(Debug, Clone, Copy)]
struct PathState {
    gain: Cf,
    delay: f64,
    doppler_hz: f64,
}

#[derive(Debug)]
pub struct Propagator {
    paths: Vec<PathState>,
    ts: f64,
    rho_nominal: f64,
    drho: f64,
    cfo_nominal: f64,
    seg: Segment,
    trim: Option<Arc<ClockTrim>>,
    trim_seen: (f64, f64),
    hist: Vec<Cf>,
    hist_start: i64,
    input_end: i64,
    next_out: u64,
    sigma: f64,
    rng: ChaCha8Rng,
    table: Arc<InterpTable>,
    phasors: Vec<Cf>,
    steps: Vec<Cf>,
    phasor_k: Option<u64>,
    window: Vec<Cf>,
}

impl Propagator {
    pub fn new(
        scenario: &ChannelScenario,
        cfg: &SystemConfig,
        link: Link,
        trim: Option<Arc<ClockTrim>>,
    ) -> Result<Self, ChanError> {
        scenario.validate(cfg)?;
        let ts = cfg.sample_period_s();
        let (offset, rho, drho, cfo) = match link {
            Link::Mono => (0.0, 0.0, 0.0, 0.0),
            Link::Ue => {
                let c = &scenario.clocks;
                let drho = match c.drift {
                    DriftModel::Constant => 0.0,
                    DriftModel::LinearRamp { rate } => rate,
                };
                (c.timing_offset_s, c.sio_s / ts, drho, c.cfo_hz)
            }
        };
        let paths = scenario
            .paths(link)
            .iter()
            .map(|p| PathState {
                gain: p.gain,
                delay: (p.delay_s + offset) / ts,
                doppler_hz: p.doppler_hz,
            })
            .collect::<Vec<_>>();
        let stream_id = match link {
            Link::Mono => 0x6d6f_6e6f,
            Link::Ue => 0x7565,
        };
        let trim = if link == Link::Ue { trim } else { None };
        let n = paths.len();
        let mut s = Self {
            paths,
            ts,
            rho_nominal: rho,
            drho,
            cfo_nominal: cfo,
            seg: Segment {
                k0: 0,
                lag0: 0.0,
                rho0: rho,
                cfo_hz: cfo,
                cfo_cycles0: 0.0,
            },
            trim,
            trim_seen: (0.0, 0.0),
            hist: Vec::new(),
            hist_start: 0,
            input_end: 0,
            next_out: 0,
            sigma: scenario.noise_variance(link, cfg).sqrt(),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed ^ (stream_id << 32)),
            table: InterpTable::shared(),
            phasors: vec![Cf::new(0.0, 0.0); n],
            steps: vec![Cf::new(0.0, 0.0); n],
            phasor_k: None,
            window: vec![Cf::new(0.0, 0.0); TAPS],
        };
        s.refresh_trim();
        Ok(s)
    }

    pub fn mono(scenario: &ChannelScenario, cfg: &SystemConfig) -> Result<Self, ChanError> {
        Self::new(scenario, cfg, Link::Mono, None)
    }

    pub fn ue(
        scenario: &ChannelScenario,
        cfg: &SystemConfig,
        trim: Option<Arc<ClockTrim>>,
    ) -> Result<Self, ChanError> {
        Self::new(scenario, cfg, Link::Ue, trim)
    }

    /// Number of output samples produced so far.
    pub fn samples_out(&self) -> u64 {
        self.next_out
    }

    pub fn noise_sigma(&self) -> f64 {
        self.sigma
    }

    /// Accumulated sampling lag at output `k` (valid for the current segment onwards).
    pub fn lag(&self, k: u64) -> f64 {
        let s = &self.seg;
        let dk = k as f64 - s.k0 as f64;
        s.lag0 + s.rho0 * dk + 0.5 * self.drho * dk * dk
    }

    fn rho_eff(&self, k: u64) -> f64 {
        self.seg.rho0 + self.drho * (k as f64 - self.seg.k0 as f64)
    }

    fn cfo_cycles(&self, k: u64) -> f64 {
        let s = &self.seg;
        let elapsed = (k as f64 - s.k0 as f64) - (self.lag(k) - s.lag0);
        let c = s.cfo_cycles0 + s.cfo_hz * self.ts * elapsed;
        c - c.floor()
    }

    fn refresh_trim(&mut self) {
        let Some(trim) = &self.trim else { return };
        let t = trim.get();
        if t == self.trim_seen {
            return;
        }
        let k = self.next_out;
        let lag0 = self.lag(k);
        let cyc = self.cfo_cycles(k);
        let rho_true = self.rho_nominal + self.drho * k as f64;
        self.seg = Segment {
            k0: k,
            lag0,
            rho0: rho_true - t.1,
            cfo_hz: self.cfo_nominal - t.0,
            cfo_cycles0: cyc,
        };
        self.trim_seen = t;
        self.phasor_k = None;
    }

    fn exact_phasors(&mut self, k: u64) {
        let lag = self.lag(k);
        let cfo_c = self.cfo_cycles(k);
        let per_sample = self.ts * (1.0 - self.rho_eff(k));
        for (i, p) in self.paths.iter().enumerate() {
            let fd_t = p.doppler_hz * self.ts;
            let dop = fd_t * k as f64 - fd_t * lag;
            self.phasors[i] = cis_cycles(dop - dop.floor() + cfo_c);
            self.steps[i] = cis_cycles((p.doppler_hz + self.seg.cfo_hz) * per_sample);
        }
    }

    /// Brings the per-path rotations to output `k` through the same recurrence regardless of
    /// how the stream was chunked.
    fn advance_phasors(&mut self, k: u64) {
        let block_start = (k - k % PHASOR_BLOCK).max(self.seg.k0);
        match self.phasor_k {
            Some(prev) if prev + 1 == k && k != block_start => {
                for (ph, st) in self.phasors.iter_mut().zip(&self.steps) {
                    *ph *= st;
                }
            }
            _ => {
                self.exact_phasors(block_start);
                for _ in block_start..k {
                    for (ph, st) in self.phasors.iter_mut().zip(&self.steps) {
                        *ph *= st;
                    }
                }
            }
        }
        self.phasor_k = Some(k);
    }

    fn base_index(&self, k: u64, lag: f64, delay: f64) -> (i64, usize) {
        InterpTable::locate(k as i64, -lag - delay)
    }

    fn ready(&self, k: u64) -> bool {
        let lag = self.lag(k);
        self.paths
            .iter()
            .all(|p| self.base_index(k, lag, p.delay).0 + HALF < self.input_end)
    }

    /// Appends input and returns every output sample that became computable.
    pub fn process(&mut self, input: &[Cf]) -> Vec<Cf> {
        let mut out = Vec::with_capacity(input.len() + TAPS);
        self.process_into(input, &mut out);
        out
    }

    pub fn process_into(&mut self, input: &[Cf], out: &mut Vec<Cf>) {
        self.refresh_trim();
        self.hist.extend_from_slice(input);
        self.input_end += input.len() as i64;
        let normal = StandardNormal;
        let scale = self.sigma / std::f64::consts::SQRT_2;
        loop {
            let k = self.next_out;
            if !self.paths.is_empty() && !self.ready(k) {
                break;
            }
            if self.paths.is_empty() && (k as i64) >= self.input_end {
                break;
            }
            self.advance_phasors(k);
            let lag = self.lag(k);
            let mut acc = Cf::new(0.0, 0.0);
            for i in 0..self.paths.len() {
                let p = self.paths[i];
                let (i0, ph) = self.base_index(k, lag, p.delay);
                let lo = i0 - HALF;
                let v = if lo >= self.hist_start {
                    let a = (lo - self.hist_start) as usize;
                    self.table.apply(&self.hist[a..a + TAPS], ph)
                } else {
                    for (t, w) in self.window.iter_mut().enumerate() {
                        let idx = lo + t as i64;
                        *w = if idx >= self.hist_start && idx >= 0 {
                            self.hist[(idx - self.hist_start) as usize]
                        } else {
                            Cf::new(0.0, 0.0)
                        };
                    }
                    self.table.apply(&self.window, ph)
                };
                acc += p.gain * self.phasors[i] * v;
            }
            if self.sigma > 0.0 {
                let re: f64 = normal.sample(&mut self.rng);
                let im: f64 = normal.sample(&mut self.rng);
                acc += Cf::new(re * scale, im * scale);
            }
            out.push(acc);
            self.next_out += 1;
        }
        self.trim_history();
    }

    fn trim_history(&mut self) {
        let k = self.next_out;
        let lag = self.lag(k);
        let keep_from = self
            .paths
            .iter()
            .map(|p| self.base_index(k, lag, p.delay).0 - HALF - 2)
            .min()
            .unwrap_or(self.input_end);
        let drop = (keep_from - self.hist_start).max(0) as usize;
        if drop > 0 && drop >= self.hist.len() / 2 {
            let drop = drop.min(self.hist.len());
            self.hist.drain(..drop);
            self.hist_start += drop as i64;
        }
    }

    /// Pushes zeros until `total` outputs exist; returns the newly produced samples.
    pub fn flush_to(&mut self, total: u64) -> Vec<Cf> {
        let mut out = Vec::new();
        let zeros = vec![Cf::new(0.0, 0.0); 256];
        while self.next_out < total {
            self.process_into(&zeros, &mut out);
        }
        out
    }
}

fn one_shot(mut p: Propagator, tx: &[Cf]) -> Vec<Cf> {
    let mut out = p.process(tx);
    out.extend(p.flush_to(tx.len() as u64));
    out.truncate(tx.len());
    out
}

/// Whole-signal monostatic propagation; output has the input's length.
pub fn propagate_mono(
    tx: &[Cf],
    scenario: &ChannelScenario,
    cfg: &SystemConfig,
) -> Result<Vec<Cf>, ChanError> {
    Ok(one_shot(Propagator::mono(scenario, cfg)?, tx))
}

/// Whole-signal propagation to the UE with clock impairments.
pub fn propagate_ue(
    tx: &[Cf],
    scenario: &ChannelScenario,
    cfg: &SystemConfig,
) -> Result<Vec<Cf>, ChanError> {
    Ok(one_shot(Propagator::ue(scenario, cfg, None)?, tx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chansim::{NoiseSpec, PathKind, PathSpec};
    use crate::dsp::FftCache;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn cfg() -> SystemConfig {
        SystemConfig::with_waveform(256, 32, 10, 10e6, 3.1e9)
    }

    fn noise_signal(len: usize, seed: u64) -> Vec<Cf> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..len)
            .map(|_| Cf::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
            .collect()
    }

    /// Random signal confined to the central half of the band [0, B).
    fn banded_signal(len: usize, seed: u64) -> Vec<Cf> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut spec = vec![Cf::new(0.0, 0.0); len];
        for (k, s) in spec.iter_mut().enumerate() {
            if k > len / 4 && k < 3 * len / 4 {
                *s = Cf::from_polar(1.0, r.random_range(0.0..2.0 * PI));
            }
        }
        FftCache::new().unitary_inverse(&mut spec);
        spec
    }

    fn path(gain: f64, delay_s: f64, doppler_hz: f64) -> PathSpec {
        PathSpec {
            gain: Cf::new(gain, 0.0),
            delay_s,
            doppler_hz,
            kind: PathKind::Target,
        }
    }

    fn scen(paths: Vec<PathSpec>) -> ChannelScenario {
        ChannelScenario {
            mono_paths: paths.clone(),
            ue_paths: paths,
            ..ChannelScenario::default()
        }
    }

    #[test]
    fn integer_delay_is_a_shift() {
        let c = cfg();
        let x = noise_signal(4000, 1);
        let s = scen(vec![path(1.0, 7.0 * c.sample_period_s(), 0.0)]);
        let y = propagate_mono(&x, &s, &c).unwrap();
        assert!(y[..7].iter().all(|v| v.norm() < 1e-12));
        let err = (7..4000).map(|k| (y[k] - x[k - 7]).norm()).fold(0.0, f64::max);
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn zero_gain_and_no_noise_is_silent() {
        let c = cfg();
        let x = noise_signal(500, 2);
        let s = scen(vec![path(0.0, 1e-7, 10.0)]);
        assert!(propagate_mono(&x, &s, &c).unwrap().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn doppler_shifts_the_spectrum() {
        let c = cfg();
        let n = 1 << 16;
        let fs = c.bandwidth_hz;
        let bin = fs / n as f64;
        let f0 = 1000.0 * bin;
        let x: Vec<Cf> = (0..n).map(|k| Cf::from_polar(1.0, 2.0 * PI * f0 * k as f64 / fs)).collect();
        let s = scen(vec![path(1.0, 0.0, 100.0)]);
        let mut y = propagate_mono(&x, &s, &c).unwrap();
        let mut fc = FftCache::new();
        fc.forward(n).process(&mut y);
        let peak = (0..n).max_by(|&a, &b| y[a].norm().total_cmp(&y[b].norm())).unwrap();
        let measured = peak as f64 * bin;
        assert!((measured - (f0 + 100.0)).abs() <= bin);
    }

    #[test]
    fn ue_identity_without_impairments() {
        let c = cfg();
        let x = noise_signal(3000, 3);
        let mut s = scen(vec![path(1.0, 0.0, 0.0)]);
        s.ue_paths[0].kind = PathKind::Los;
        let y = propagate_ue(&x, &s, &c).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn cfo_phase_slope() {
        let c = cfg();
        let x = noise_signal(5000, 4);
        let mut s = scen(vec![path(1.0, 0.0, 0.0)]);
        s.clocks.cfo_hz = 500.0;
        let y = propagate_ue(&x, &s, &c).unwrap();
        let want = 2.0 * PI * 500.0 * c.sample_period_s();
        for k in 1..5000 {
            let a = (y[k] * x[k].conj()).arg();
            let b = (y[k - 1] * x[k - 1].conj()).arg();
            let d = crate::dsp::wrap_phase(a - b);
            assert!((d - want).abs() < 1e-9);
        }
    }

    #[test]
    fn sio_accumulates_one_sample_per_million() {
        let c = cfg();
        let x = banded_signal(1 << 20, 5);
        let mut s = scen(vec![path(1.0, 0.0, 0.0)]);
        s.clocks.sio_s = 1e-6 * c.sample_period_s();
        let y = propagate_ue(&x, &s, &c).unwrap();
        // cross-correlate a tail window against integer lags of the input, then refine
        // with a parabola through the three best lags
        let k0 = 1_000_000;
        let w = 4096;
        let corr = |lag: i64| -> f64 {
            (0..w)
                .map(|i| y[k0 + i] * x[(k0 as i64 + i as i64 - lag) as usize].conj())
                .sum::<Cf>()
                .norm()
        };
        let (cm, c0, cp) = (corr(0), corr(1), corr(2));
        assert!(c0 > cm && c0 > cp);
        let est = 1.0 + 0.5 * (cm - cp) / (cm - 2.0 * c0 + cp);
        assert!((est - 1.0).abs() < 0.05, "{est}");
    }

    #[test]
    fn power_preserved_for_banded_signal() {
        let c = cfg();
        let x = banded_signal(1 << 14, 6);
        for d in [0.5, 3.25, 10.7] {
            let s = scen(vec![path(1.0, d * c.sample_period_s(), 0.0)]);
            let y = propagate_mono(&x, &s, &c).unwrap();
            let px: f64 = x[100..16000].iter().map(|v| v.norm_sqr()).sum();
            let py: f64 = y[100 + 11..16000 + 11].iter().map(|v| v.norm_sqr()).sum();
            assert!((py / px - 1.0).abs() < 0.005, "{d}: {}", py / px);
        }
    }

    #[test]
    fn noise_variance_matches_psd() {
        let c = cfg();
        let mut s = scen(vec![path(0.0, 0.0, 0.0)]);
        s.noise = NoiseSpec::Psd(1e-9);
        let y = propagate_mono(&vec![Cf::new(0.0, 0.0); 100_000], &s, &c).unwrap();
        let var = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
        assert!((var / (c.bandwidth_hz * 1e-9) - 1.0).abs() < 0.02);
    }

    #[test]
    fn superposition_and_linearity() {
        let c = cfg();
        let x = noise_signal(3000, 7);
        let p1 = path(0.8, 3.3e-7, 40.0);
        let p2 = path(0.3, 1.1e-6, -25.0);
        let mut both = scen(vec![p1, p2]);
        both.clocks.sio_s = 3e-6 * c.sample_period_s();
        both.clocks.cfo_hz = 150.0;
        let mut a = both.clone();
        a.ue_paths = vec![p1];
        let mut b = both.clone();
        b.ue_paths = vec![p2];
        let y = propagate_ue(&x, &both, &c).unwrap();
        let ya = propagate_ue(&x, &a, &c).unwrap();
        let yb = propagate_ue(&x, &b, &c).unwrap();
        let rms = (y.iter().zip(ya.iter().zip(&yb)).map(|(t, (u, v))| (t - u - v).norm_sqr()).sum::<f64>()
            / y.len() as f64)
            .sqrt();
        assert!(rms <= 1e-9);
        let g = Cf::new(-1.5, 0.25);
        let xs: Vec<Cf> = x.iter().map(|v| v * g).collect();
        let ys = propagate_ue(&xs, &both, &c).unwrap();
        let err = ys.iter().zip(&y).map(|(u, v)| (u - v * g).norm()).fold(0.0, f64::max);
        assert!(err <= 1e-9);
    }

    #[test]
    fn deterministic_under_seed() {
        let c = cfg();
        let x = noise_signal(2000, 8);
        let mut s = scen(vec![path(1.0, 2.2e-7, 30.0)]);
        s.noise = NoiseSpec::SnrDb(10.0);
        s.seed = 42;
        let a = propagate_mono(&x, &s, &c).unwrap();
        assert_eq!(a, propagate_mono(&x, &s, &c).unwrap());
        s.seed = 43;
        assert_ne!(a, propagate_mono(&x, &s, &c).unwrap());
    }

    #[test]
    fn trim_cancels_clock_errors() {
        let c = cfg();
        let x = noise_signal(4000, 9);
        let mut s = scen(vec![path(1.0, 0.0, 0.0)]);
        s.clocks.cfo_hz = 300.0;
        s.clocks.sio_s = 5e-6 * c.sample_period_s();
        let trim = ClockTrim::new();
        trim.set(300.0, 5e-6);
        let mut p = Propagator::ue(&s, &c, Some(trim)).unwrap();
        let mut y = p.process(&x);
        y.extend(p.flush_to(4000));
        for k in 0..3900 {
            assert!((y[k] - x[k]).norm() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn chunking_is_invisible(chunk in 1usize..700, seed in 0u64..1000) {
            let c = cfg();
            let x = noise_signal(3000, seed);
            let mut s = scen(vec![path(0.9, 4.4e-7, 120.0), path(0.2, 1.9e-6, 0.0)]);
            s.clocks.sio_s = 20e-6 * c.sample_period_s();
            s.clocks.cfo_hz = -730.0;
            s.clocks.timing_offset_s = 3.3e-7;
            s.noise = NoiseSpec::SnrDb(20.0);
            s.seed = seed;
            let whole = propagate_ue(&x, &s, &c).unwrap();
            let mut p = Propagator::ue(&s, &c, None).unwrap();
            let mut out = Vec::new();
            for piece in x.chunks(chunk) {
                out.extend(p.process(piece));
            }
            out.extend(p.flush_to(3000));
            out.truncate(3000);
            prop_assert_eq!(out, whole);
        }
    }
}
