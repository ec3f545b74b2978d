use std::collections::VecDeque;
use std::sync::Arc;

use crate::cfg::{FramePlan, FreqCorrectionMode, SystemConfig};
use crate::chansim::ClockTrim;
use crate::dsp::{cis_cycles, CMatrix, Cf, FftCache};
use crate::phytx::{ofdm_demodulate, zc_generate, FrameCodec, FrameDecode, PhyError, ZcSequence};

use super::acquire::{cp_cfo_from, sync_reference, sync_search, SyncHit};
use super::estimate::{
    equalize, estimate_channel, pilot_regression, propagate_channel, ChannelEstimate, Equalized,
    PilotRegression,
};
use super::lock::LockSupervisor;
use super::{SyncPhase, SyncState, UeError};

/// Digital down-conversion by the accumulated frequency correction.
#[derive(Debug, Clone)]
pub struct Nco {
    freq_hz: f64,
    phase_cycles: f64,
    ts: f64,
}

impl Nco {
    pub fn new(sample_period_s: f64) -> Self {
        Self { freq_hz: 0.0, phase_cycles: 0.0, ts: sample_period_s }
    }

    pub fn freq_hz(&self) -> f64 {
        self.freq_hz
    }

    pub fn retune(&mut self, delta_hz: f64) {
        self.freq_hz += delta_hz;
    }

    pub fn advance(&mut self, samples: usize) {
        self.phase_cycles += self.freq_hz * self.ts * samples as f64;
        self.phase_cycles -= self.phase_cycles.floor();
    }

    pub fn apply(&mut self, x: Cf) -> Cf {
        let y = x * cis_cycles(-self.phase_cycles);
        self.advance(1);
        y
    }
}

/// Buffers incoming samples and hands out blocks with pending timing corrections applied:
/// positive corrections drop samples, small negative ones prepend zeros.
#[derive(Debug, Clone)]
pub struct SampleFetcher {
    buf: VecDeque<Cf>,
    pending: i64,
    frame_len: usize,
    cp_len: usize,
    pub nco: Nco,
    consumed: u64,
}

impl SampleFetcher {
    pub fn new(cfg: &SystemConfig) -> Self {
        Self {
            buf: VecDeque::new(),
            pending: 0,
            frame_len: cfg.frame_len(),
            cp_len: cfg.cp_len,
            nco: Nco::new(cfg.sample_period_s()),
            consumed: 0,
        }
    }

    pub fn push(&mut self, samples: &[Cf]) {
        self.buf.extend(samples.iter().copied());
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Samples taken from the input so far, dropped ones included.
    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn pending(&self) -> i64 {
        self.pending
    }

    pub fn request(&mut self, k_to: i64) {
        self.pending += k_to;
    }

    /// (samples to drop, zeros to prepend) for a correction, folded modulo one frame.
    pub fn split(&self, k_to: i64) -> (usize, usize) {
        let f = self.frame_len as i64;
        let r = k_to.rem_euclid(f);
        if r == 0 {
            (0, 0)
        } else if r >= f - self.cp_len as i64 {
            (0, (f - r) as usize)
        } else {
            (r as usize, 0)
        }
    }

    pub fn fetch(&mut self, len: usize) -> Option<Vec<Cf>> {
        let (skip, zeros) = self.split(self.pending);
        let zeros = zeros.min(len);
        if self.buf.len() < skip + len - zeros {
            return None;
        }
        self.pending = 0;
        self.buf.drain(..skip);
        self.nco.advance(skip);
        let mut out = vec![Cf::new(0.0, 0.0); zeros];
        out.extend(self.buf.drain(..len - zeros).collect::<Vec<_>>());
        for v in &mut out[zeros..] {
            *v = self.nco.apply(*v);
        }
        self.consumed += (skip + len - zeros) as u64;
        Some(out)
    }
}

/// CP removal and FFT of one frame-aligned block.
pub fn demod_frame(block: &[Cf], cfg: &SystemConfig, fft: &mut FftCache) -> Result<CMatrix, UeError> {
    let expected = cfg.frame_len();
    if block.len() != expected {
        return Err(UeError::BlockLength { expected, got: block.len() });
    }
    Ok(ofdm_demodulate(block, cfg, fft))
}

#[derive(Debug, Clone)]
pub struct UeFrame {
    pub index: u64,
    /// Received grid after CP removal and FFT.
    pub grid: CMatrix,
    pub estimate: ChannelEstimate,
    pub regression: Option<PilotRegression>,
    pub channel: CMatrix,
    pub equalized: Equalized,
    /// Timing correction requested after this frame.
    pub timing_correction: i64,
    /// Timing correction applied when fetching this frame.
    pub applied_timing: i64,
    pub applied_freq_hz: f64,
    pub decoded: Option<FrameDecode>,
}

#[derive(Debug, Clone)]
pub enum UeOutput {
    Acquired { hit: SyncHit, cfo_hz: f64 },
    Frame(Box<UeFrame>),
    LockLost { frame: u64 },
}

pub struct UeReceiver {
    cfg: SystemConfig,
    plan: FramePlan,
    zc: ZcSequence,
    reference: Vec<Cf>,
    fft: FftCache,
    state: SyncState,
    fetcher: SampleFetcher,
    lock: LockSupervisor,
    codec: Option<FrameCodec>,
    trim: Option<Arc<ClockTrim>>,
    frames: u64,
}

impl UeReceiver {
    pub fn new(cfg: &SystemConfig) -> Result<Self, PhyError> {
        let zc = zc_generate(cfg.num_subcarriers, cfg.zc_root)?;
        let mut fft = FftCache::new();
        let reference = sync_reference(cfg, &zc, &mut fft);
        Ok(Self {
            cfg: cfg.clone(),
            plan: cfg.frame_plan(),
            zc,
            reference,
            fft,
            state: SyncState::default(),
            fetcher: SampleFetcher::new(cfg),
            lock: LockSupervisor::new(cfg.lock, cfg.cp_len),
            codec: None,
            trim: None,
            frames: 0,
        })
    }

    pub fn with_codec(mut self, codec: FrameCodec) -> Self {
        self.codec = Some(codec);
        self
    }

    /// Oscillator handle used in reference-clock mode.
    pub fn with_clock_trim(mut self, trim: Arc<ClockTrim>) -> Self {
        self.trim = Some(trim);
        self
    }

    pub fn state(&self) -> &SyncState {
        &self.state
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn fetcher(&self) -> &SampleFetcher {
        &self.fetcher
    }

    pub fn set_sync_threshold(&mut self, t: f64) {
        self.cfg.sync_threshold = t;
    }

    fn reference_clock(&self) -> Option<&Arc<ClockTrim>> {
        match self.cfg.freq_mode {
            FreqCorrectionMode::ReferenceClock => self.trim.as_ref(),
            FreqCorrectionMode::DigitalRetune => None,
        }
    }

    fn correct_frequency(&mut self, f_hz: f64, dts_s: f64, gain: f64) {
        let applied = match self.reference_clock() {
            Some(trim) => {
                let d = gain * f_hz;
                trim.adjust(d, gain * dts_s / self.cfg.sample_period_s());
                d
            }
            None => {
                self.fetcher.nco.retune(f_hz);
                f_hz
            }
        };
        self.state.applied_freq_hz += applied;
    }

    pub fn push(&mut self, samples: &[Cf]) -> Vec<UeOutput> {
        self.fetcher.push(samples);
        let mut out = Vec::new();
        loop {
            match self.state.phase {
                SyncPhase::SyncSearch => {
                    let Some(block) = self.fetcher.fetch(2 * self.cfg.frame_len()) else {
                        break;
                    };
                    let hit = sync_search(&block, &self.reference, &self.cfg, &mut self.fft)
                        .expect("block length fixed by fetch");
                    let Some(hit) = hit else { continue };
                    let ns = self.cfg.symbol_len();
                    let start = (hit.k_peak as i64 - (self.cfg.sync_symbol_index * ns) as i64)
                        .rem_euclid(ns as i64) as usize;
                    let cfo = cp_cfo_from(&block, start, &self.cfg);
                    self.correct_frequency(cfo, 0.0, 1.0);
                    self.fetcher.request(hit.k_to);
                    self.state.k_to = hit.k_to;
                    self.state.phase = SyncPhase::Normal;
                    self.state.frames_in_lock = 0;
                    self.lock.reset();
                    log::info!("sync acquired: k_to {} metric {:.3} cfo {:.1} Hz", hit.k_to, hit.metric, cfo);
                    out.push(UeOutput::Acquired { hit, cfo_hz: cfo });
                }
                SyncPhase::Normal => {
                    let applied_timing = self.fetcher.pending();
                    let Some(block) = self.fetcher.fetch(self.cfg.frame_len()) else {
                        break;
                    };
                    let frame = self.process_frame(&block, applied_timing);
                    let lost = self.lock.update(frame.timing_correction, frame.equalized.snr_db);
                    let index = frame.index;
                    out.push(UeOutput::Frame(Box::new(frame)));
                    if lost {
                        log::warn!("lock lost at frame {index}");
                        self.state.phase = SyncPhase::SyncSearch;
                        self.fetcher.pending = 0;
                        out.push(UeOutput::LockLost { frame: index });
                    }
                }
            }
        }
        out
    }

    fn process_frame(&mut self, block: &[Cf], applied_timing: i64) -> UeFrame {
        let grid = demod_frame(block, &self.cfg, &mut self.fft).expect("block length fixed by fetch");
        let mut estimate = estimate_channel(&grid, &self.zc, &self.cfg, &mut self.fft);
        let regression = pilot_regression(&grid, &self.cfg).ok();
        let (f_o, dts) = regression.as_ref().map_or((0.0, 0.0), |r| (r.f_o_hz, r.dts_s));
        estimate.f_o_hz = f_o;
        estimate.dts_s = dts;
        let channel = propagate_channel(&estimate.h_sync, f_o, dts, &self.cfg);
        let equalized = equalize(&grid, &channel, &self.zc, &self.plan);
        let decoded = self
            .codec
            .as_ref()
            .and_then(|c| c.decode(&equalized.llr).ok());
        self.correct_frequency(f_o, dts, self.cfg.freq_trim_gain);
        let k_to = estimate.k_to;
        if k_to != 0 {
            self.fetcher.request(k_to);
        }
        self.state.k_to = k_to;
        self.state.f_o_hz = f_o;
        self.state.dts_s = dts;
        self.state.lock_quality = equalized.snr_db;
        self.state.frames_in_lock += 1;
        let index = self.frames;
        self.frames += 1;
        UeFrame {
            index,
            grid,
            estimate,
            regression,
            channel,
            equalized,
            timing_correction: k_to,
            applied_timing,
            applied_freq_hz: self.state.applied_freq_hz,
            decoded,
        }
    }
}
