use std::collections::VecDeque;

use crate::cfg::SystemConfig;
use crate::dsp::{CMatrix, Cf, FftCache};
use crate::phytx::ResourceGrid;

use super::microdoppler::{micro_doppler, BinSelect};
use super::periodogram::{find_peaks, periodogram, Detection, PeriodogramParams, SenseMap};
use super::stream::{SensingFrame, SlowTimeChain};
use super::MonoError;

/// Cuts an arbitrarily chunked echo stream into indexed frames.
#[derive(Debug, Clone)]
pub struct FrameAssembler {
    frame_len: usize,
    buf: Vec<Cf>,
    next: u64,
}

impl FrameAssembler {
    pub fn new(frame_len: usize) -> Self {
        assert!(frame_len > 0);
        Self { frame_len, buf: Vec::with_capacity(2 * frame_len), next: 0 }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    pub fn push(&mut self, samples: &[Cf]) -> Vec<(u64, Vec<Cf>)> {
        self.buf.extend_from_slice(samples);
        let mut out = Vec::new();
        while self.buf.len() >= self.frame_len {
            let rest = self.buf.split_off(self.frame_len);
            out.push((self.next, std::mem::replace(&mut self.buf, rest)));
            self.next += 1;
        }
        out
    }
}

/// Output for one completed sensing frame.
#[derive(Debug, Clone)]
pub struct SensingOutput {
    pub frame: SensingFrame,
    pub map: SenseMap,
    pub detections: Vec<Detection>,
}

/// Monostatic receiver: divides each echo frame by its transmit grid and runs the
/// slow-time chain, periodogram and peak search.
pub struct MonoSensor {
    cfg: SystemConfig,
    fft: FftCache,
    chain: SlowTimeChain,
    pub rel_threshold_db: f64,
    pub max_peaks: usize,
    history: VecDeque<Vec<Cf>>,
    history_len: usize,
}

impl MonoSensor {
    pub fn new(cfg: &SystemConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            fft: FftCache::new(),
            chain: SlowTimeChain::new(
                cfg.num_subcarriers,
                cfg.sensing_symbols,
                cfg.stride,
                cfg.mti_sos.clone(),
            ),
            rel_threshold_db: 20.0,
            max_peaks: 16,
            history: VecDeque::new(),
            history_len: 4 * cfg.stft.window_len,
        }
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn chain(&self) -> &SlowTimeChain {
        &self.chain
    }

    pub fn set_stride(&mut self, stride: usize) {
        self.chain.set_stride(stride);
    }

    pub fn set_mti_enabled(&mut self, on: bool) {
        self.chain.set_mti_enabled(on);
    }

    /// Processes one received echo frame and the grid that was transmitted for it.
    pub fn process_frame(
        &mut self,
        rx_frame: &[Cf],
        tx_grid: &ResourceGrid,
    ) -> Result<Vec<SensingOutput>, MonoError> {
        let h = super::demap_echo(rx_frame, tx_grid, &self.cfg, &mut self.fft)?;
        self.process_channel(&h)
    }

    /// Same as [`process_frame`](Self::process_frame) for already-divided channel symbols.
    pub fn process_channel(&mut self, h: &CMatrix) -> Result<Vec<SensingOutput>, MonoError> {
        let mut out = Vec::new();
        for m in 0..h.cols {
            let Some(frame) = self.chain.push_column(h.column(m)) else {
                continue;
            };
            for c in 0..frame.cells.cols {
                if self.history.len() == self.history_len {
                    self.history.pop_front();
                }
                self.history.push_back(frame.cells.column(c).to_vec());
            }
            let params = PeriodogramParams::from_cfg(&self.cfg, frame.stride);
            let map = periodogram(&frame.cells, &params, &mut self.fft);
            let detections = find_peaks(&map, self.rel_threshold_db, self.max_peaks)?;
            out.push(SensingOutput { frame, map, detections });
        }
        Ok(out)
    }

    /// Spectrogram over the most recent filtered slow-time columns.
    pub fn micro_doppler(&mut self, select: BinSelect) -> Result<SenseMap, MonoError> {
        let cols: Vec<Vec<Cf>> = self.history.iter().cloned().collect();
        let stream = CMatrix::from_columns(self.cfg.num_subcarriers, &cols);
        let interval = self.chain.stride() as f64 * self.cfg.symbol_duration_s();
        micro_doppler(&stream, &self.cfg.stft, interval, select, &mut self.fft)
    }
}
