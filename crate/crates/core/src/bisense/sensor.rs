use crate::cfg::{FramePlan, SystemConfig};
use crate::dsp::CMatrix;
use crate::mono::{MonoSensor, SensingOutput};
use crate::phytx::{zc_generate, PhyError, ZcSequence};
use crate::uerx::UeFrame;

use super::compensate::compensate;
use super::quinn::{delay_estimate, DelayEstimate};
use super::reconstruct::{reconstruct_symbols, sensing_symbols};
use super::tracker::{SensingTracker, TrackerStep};
use super::BisenseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompensationMode {
    /// Timing and SIO compensation from the LoS tracker.
    Ota,
    /// Channel symbols as the communication receiver leaves them.
    CommOnly,
}

#[derive(Debug, Clone)]
pub struct BistaticFrame {
    pub index: u64,
    pub delay: DelayEstimate,
    pub step: TrackerStep,
    /// Drift per frame used for this frame's compensation.
    pub eps_used: f64,
    /// Channel symbols after compensation (or untouched in comm-only mode).
    pub channel: CMatrix,
    pub sensing: Vec<SensingOutput>,
}

/// Turns demodulated UE frames into compensated sensing channel symbols and feeds them to
/// the shared slow-time chain.
pub struct BistaticSensor {
    cfg: SystemConfig,
    plan: FramePlan,
    zc: ZcSequence,
    tracker: SensingTracker,
    mode: CompensationMode,
    chain: MonoSensor,
}

impl BistaticSensor {
    pub fn new(cfg: &SystemConfig, mode: CompensationMode) -> Result<Self, PhyError> {
        Ok(Self {
            cfg: cfg.clone(),
            plan: cfg.frame_plan(),
            zc: zc_generate(cfg.num_subcarriers, cfg.zc_root)?,
            tracker: SensingTracker::new(cfg.tracker, cfg.sio_window_frames),
            mode,
            chain: MonoSensor::new(cfg),
        })
    }

    pub fn tracker(&self) -> &SensingTracker {
        &self.tracker
    }

    pub fn tracker_mut(&mut self) -> &mut SensingTracker {
        &mut self.tracker
    }

    pub fn chain(&self) -> &MonoSensor {
        &self.chain
    }

    pub fn chain_mut(&mut self) -> &mut MonoSensor {
        &mut self.chain
    }

    pub fn mode(&self) -> CompensationMode {
        self.mode
    }

    /// Compensated channel symbols for one frame, without the downstream chain.
    pub fn compensate_frame(&mut self, frame: &UeFrame) -> Result<BistaticFrame, BisenseError> {
        let symbols = reconstruct_symbols(&frame.equalized.data, &self.zc, &self.plan);
        let f = sensing_symbols(&frame.grid, &symbols, self.cfg.cell_amplitude());
        let delay = delay_estimate(&frame.estimate.delay_spectrum, self.cfg.bandwidth_hz)?;
        let eps_used = self.tracker.eps_sio();
        let step = self.tracker.step(delay.k_tau, frame.applied_timing);
        let channel = match self.mode {
            CompensationMode::Ota => compensate(&f, step.k_sens, eps_used, &self.cfg),
            CompensationMode::CommOnly => f,
        };
        Ok(BistaticFrame { index: frame.index, delay, step, eps_used, channel, sensing: Vec::new() })
    }

    pub fn process(&mut self, frame: &UeFrame) -> Result<BistaticFrame, BisenseError> {
        let mut out = self.compensate_frame(frame)?;
        out.sensing = self.chain.process_channel(&out.channel)?;
        Ok(out)
    }
}
