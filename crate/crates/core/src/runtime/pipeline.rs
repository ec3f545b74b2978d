//! Threaded BS and UE stage graphs with the channel simulator standing in for the radios.
//!
//! BS: udp_in -> packet FIFO -> bit processing -> symbol FIFO -> modulator -> {tx waveform
//! FIFO, tx grid FIFO} -> chansim(mono) -> rx waveform FIFO -> mono sensing -> emission.
//!
//! UE: tx waveform -> chansim(ue) -> rx FIFO -> demodulator -> {data FIFO -> bit processing ->
//! udp_out, sensing FIFO -> bistatic sensing -> emission}.

use std::net::SocketAddr;
use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use super::control::ControlState;
use super::formats::{write_map, write_stream, FormatError};
use super::queue::{BoundedQueue, QueueHandle, QueuePolicy};
use super::udp::{UdpEgress, UdpIngress};
use crate::bisense::{BistaticSensor, CompensationMode};
use crate::cfg::SystemConfig;
use crate::chansim::{ChanError, ChannelScenario, ClockTrim, Propagator};
use crate::dsp::{CMatrix, Cf, FftCache};
use crate::mono::{demap_echo, msr, FrameAssembler, Detection, MonoSensor, SenseMap, SensingOutput};
use crate::phytx::framing::parse_records;
use crate::phytx::grid::padding_rng;
use crate::phytx::{
    map_grid, ofdm_modulate, zc_generate, FrameCodec, LdpcCode, PhyError, RecordPacker, ResourceGrid,
};
use crate::uerx::{UeOutput, UeReceiver};

pub const DEFAULT_QUEUE_CAPACITY: usize = 16;
pub const SCRAMBLE_SEED: u8 = 0x5d;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: String, source: std::io::Error },
    #[error(transparent)]
    Channel(#[from] ChanError),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error("stage `{0}` panicked")]
    StagePanicked(String),
}

/// The per-frame codec both nodes use.
pub fn default_codec(cfg: &SystemConfig) -> Result<FrameCodec, PhyError> {
    FrameCodec::new(
        Arc::new(LdpcCode::default_648()),
        cfg.frame_plan().data_cells_per_frame(),
        SCRAMBLE_SEED,
    )
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    /// Stop after this many transmitted frames.
    pub frames: Option<u64>,
    /// Pace the source at the frame rate; the radio-side receive FIFOs then drop the oldest
    /// item instead of stalling the source.
    pub realtime: bool,
    pub queue_capacity: usize,
    /// Samples per UE receive chunk; 0 means one frame.
    pub rx_chunk: usize,
    pub bistatic_mode: CompensationMode,
    /// Transmitted frames during which the UE link carries noise only.
    pub ue_outage: Option<Range<u64>>,
    pub udp_in: Option<SocketAddr>,
    pub udp_out: Option<SocketAddr>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            frames: None,
            realtime: false,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            rx_chunk: 0,
            bistatic_mode: CompensationMode::Ota,
            ue_outage: None,
            udp_in: None,
            udp_out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmittedMap {
    pub node: &'static str,
    pub seq: u64,
    pub stride: usize,
    pub mti_enabled: bool,
    pub first_symbol: u64,
    pub msr_db: f64,
    pub map: SenseMap,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Emitted {
    Map(EmittedMap),
    /// Bypass mode: one frame of channel symbols.
    Stream { node: &'static str, frame_index: u64, cells: CMatrix },
}

pub trait EmitSink: Send {
    fn emit(&mut self, rec: &Emitted) -> Result<(), FormatError>;
}

/// Writes RDMP records for maps and CSYM records for bypass frames.
pub struct FileSink<W: std::io::Write + Send>(pub W);

impl<W: std::io::Write + Send> EmitSink for FileSink<W> {
    fn emit(&mut self, rec: &Emitted) -> Result<(), FormatError> {
        match rec {
            Emitted::Map(m) => write_map(&mut self.0, &m.map),
            Emitted::Stream { frame_index, cells, .. } => write_stream(&mut self.0, *frame_index, cells),
        }
    }
}

pub struct CallbackSink<F: FnMut(&Emitted) + Send>(pub F);

impl<F: FnMut(&Emitted) + Send> EmitSink for CallbackSink<F> {
    fn emit(&mut self, rec: &Emitted) -> Result<(), FormatError> {
        (self.0)(rec);
        Ok(())
    }
}

/// One modulated frame as it leaves the BS.
#[derive(Debug, Clone)]
pub struct TxBurst {
    pub index: u64,
    pub samples: Arc<Vec<Cf>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UeEvent {
    Acquired { k_to: i64, cfo_hz: f64 },
    Frame {
        index: u64,
        k_to: i64,
        applied_timing: i64,
        f_o_hz: f64,
        dts_s: f64,
        applied_freq_hz: f64,
        snr_db: f64,
        blocks: usize,
        blocks_failed: usize,
        payload: Vec<u8>,
    },
    Sensing { index: u64, k_tau: f64, k_sens: f64, eps_sio: f64 },
    LockLost { frame: u64 },
}

type TxHook = Box<dyn FnMut(u64, &[u8]) + Send>;
type EventHook = Arc<Mutex<Box<dyn FnMut(&UeEvent) + Send>>>;
type DatagramHook = Box<dyn FnMut(&[u8]) + Send>;

#[derive(Default)]
pub struct BsSinks {
    pub emit: Option<Box<dyn EmitSink>>,
    /// Payload bytes of every transmitted frame.
    pub tx_payload: Option<TxHook>,
}

#[derive(Default)]
pub struct UeSinks {
    pub emit: Option<Box<dyn EmitSink>>,
    pub events: Option<Box<dyn FnMut(&UeEvent) + Send>>,
    pub datagrams: Option<DatagramHook>,
}

/// Closes every listed queue when the owning stage ends, also on panic.
struct CloseOnExit(Vec<Arc<dyn QueueHandle>>);

impl Drop for CloseOnExit {
    fn drop(&mut self) {
        for q in &self.0 {
            q.close();
        }
    }
}

pub struct Pipeline {
    control: Arc<ControlState>,
    stop: Arc<AtomicBool>,
    threads: Vec<(String, JoinHandle<()>)>,
    queues: Vec<Arc<dyn QueueHandle>>,
    ingress: Option<UdpIngress>,
    packets: Option<Arc<BoundedQueue<Vec<u8>>>>,
}

impl Pipeline {
    fn new(control: Arc<ControlState>) -> Self {
        Self {
            control,
            stop: Arc::new(AtomicBool::new(false)),
            threads: Vec::new(),
            queues: Vec::new(),
            ingress: None,
            packets: None,
        }
    }

    fn queue<T: Send + 'static>(
        &mut self,
        name: &str,
        capacity: usize,
        policy: QueuePolicy,
    ) -> Arc<BoundedQueue<T>> {
        let q = Arc::new(BoundedQueue::new(capacity, policy));
        self.control.register_queue(name, q.clone());
        self.queues.push(q.clone());
        q
    }

    fn spawn(&mut self, name: &str, closes: Vec<Arc<dyn QueueHandle>>, f: impl FnOnce() + Send + 'static) {
        let guard = CloseOnExit(closes);
        let h = thread::Builder::new()
            .name(name.to_string())
            .spawn(move || {
                let _guard = guard;
                f()
            })
            .expect("spawn stage thread");
        self.threads.push((name.to_string(), h));
    }

    pub fn control(&self) -> &Arc<ControlState> {
        &self.control
    }

    /// Datagram FIFO feeding the BS bit-processing stage.
    pub fn packet_queue(&self) -> Option<&Arc<BoundedQueue<Vec<u8>>>> {
        self.packets.as_ref()
    }

    pub fn udp_in_addr(&self) -> Option<SocketAddr> {
        self.ingress.as_ref().map(|i| i.local_addr())
    }

    /// Asks the source to stop; downstream stages drain and end.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::Release);
    }

    pub fn is_finished(&self) -> bool {
        self.threads.iter().all(|(_, h)| h.is_finished())
    }

    pub fn join(mut self) -> Result<(), PipelineError> {
        let mut failed = None;
        let threads = std::mem::take(&mut self.threads);
        for (name, h) in threads {
            if h.join().is_err() {
                log::error!("stage {name} panicked");
                for q in &self.queues {
                    q.close();
                }
                failed.get_or_insert(name);
            }
        }
        if let Some(p) = &self.packets {
            p.close();
        }
        if let Some(mut i) = self.ingress.take() {
            i.stop();
        }
        match failed {
            Some(name) => Err(PipelineError::StagePanicked(name)),
            None => Ok(()),
        }
    }
}

fn publish_rate(control: &ControlState, key: &str, frames: u64, frame_s: f64, start: Instant) {
    let wall = start.elapsed().as_secs_f64();
    if wall > 0.0 {
        control.publish(key, format!("{:.3}", frames as f64 * frame_s / wall));
    }
}

fn pace(start: Instant, frames: u64, frame_s: f64) {
    let due = start + Duration::from_secs_f64(frames as f64 * frame_s);
    let now = Instant::now();
    if due > now {
        thread::sleep(due - now);
    }
}

struct SymbolFrame {
    index: u64,
    symbols: Vec<Cf>,
}

struct RxFrame {
    index: u64,
    samples: Vec<Cf>,
}

fn emission_stage(
    queue: Arc<BoundedQueue<Emitted>>,
    mut sink: Option<Box<dyn EmitSink>>,
) -> impl FnOnce() + Send + 'static {
    move || {
        while let Some(rec) = queue.pop() {
            if let Some(s) = sink.as_mut() {
                if let Err(e) = s.emit(&rec) {
                    log::error!("emission: {e}");
                    sink = None;
                }
            }
        }
    }
}

fn map_record(node: &'static str, seq: u64, out: SensingOutput) -> Emitted {
    let ms = out.frame.cells.cols;
    let msr_db = msr(&out.frame.pre_mti, &out.frame.cells, 0, ms.saturating_sub(1)).unwrap_or(f64::NAN);
    Emitted::Map(EmittedMap {
        node,
        seq,
        stride: out.frame.stride,
        mti_enabled: out.frame.mti_enabled,
        first_symbol: out.frame.symbol_indices.first().copied().unwrap_or(0),
        msr_db,
        map: out.map,
        detections: out.detections,
    })
}

fn apply_sensing_controls(sensor: &mut MonoSensor, control: &ControlState) {
    sensor.set_stride(control.stride());
    sensor.set_mti_enabled(control.mti());
    sensor.rel_threshold_db = control.rel_threshold_db();
}

/// Spawns the BS graph. `extra_tx` receive every modulated frame as well (the UE link in
/// loopback, a sample-stream server in split mode).
pub fn run_bs(
    cfg: &SystemConfig,
    scenario: &ChannelScenario,
    opts: &PipelineOptions,
    control: Arc<ControlState>,
    mut sinks: BsSinks,
    extra_tx: Vec<Arc<BoundedQueue<TxBurst>>>,
) -> Result<Pipeline, PipelineError> {
    let mut p = Pipeline::new(control);
    add_bs(&mut p, cfg, scenario, opts, &mut sinks, extra_tx)?;
    Ok(p)
}

fn add_bs(
    p: &mut Pipeline,
    cfg: &SystemConfig,
    scenario: &ChannelScenario,
    opts: &PipelineOptions,
    sinks: &mut BsSinks,
    extra_tx: Vec<Arc<BoundedQueue<TxBurst>>>,
) -> Result<(), PipelineError> {
    let cap = opts.queue_capacity;
    let codec = default_codec(cfg)?;
    let zc = zc_generate(cfg.num_subcarriers, cfg.zc_root)?;
    let mut mono_chan = Propagator::mono(scenario, cfg)?;
    let rx_policy = if opts.realtime { QueuePolicy::DropOldest } else { QueuePolicy::BlockProducer };

    let packets = p.queue::<Vec<u8>>("packets", cap, QueuePolicy::BlockProducer);
    let symbols = p.queue::<SymbolFrame>("symbols", cap, QueuePolicy::BlockProducer);
    let tx_wave = p.queue::<TxBurst>("tx_waveform", cap, QueuePolicy::BlockProducer);
    let tx_grid = p.queue::<ResourceGrid>("tx_symbols", 4 * cap, QueuePolicy::BlockProducer);
    let rx_wave = p.queue::<RxFrame>("bs_rx_waveform", cap, rx_policy);
    let emit_q = p.queue::<Emitted>("bs_emission", cap, QueuePolicy::BlockProducer);
    for (i, q) in extra_tx.iter().enumerate() {
        p.control.register_queue(&format!("tx_link{i}"), q.clone());
    }

    if let Some(addr) = opts.udp_in {
        let max = RecordPacker::max_datagram(codec.payload_bytes());
        let ing = UdpIngress::spawn(addr, packets.clone(), max).map_err(|source| {
            PipelineError::BindFailure { addr: addr.to_string(), source }
        })?;
        log::info!("udp ingress on {}", ing.local_addr());
        p.ingress = Some(ing);
    }
    p.packets = Some(packets.clone());

    // bit processing
    {
        let (control, stop, frames) = (p.control.clone(), p.stop.clone(), opts.frames);
        let (packets, out) = (packets.clone(), symbols.clone());
        let mut hook = sinks.tx_payload.take();
        let codec = codec.clone();
        p.spawn("bs_bits", vec![out.clone()], move || {
            let mut held: Option<Vec<u8>> = None;
            let mut sent = 0u64;
            let mut index = 0u64;
            while !stop.load(Ordering::Acquire) && frames.is_none_or(|n| index < n) {
                let mut packer = RecordPacker::new(codec.payload_bytes());
                if let Some(d) = held.take() {
                    packer.push(&d);
                    sent += 1;
                }
                while let Some(d) = packets.try_pop() {
                    if !packer.push(&d) {
                        held = Some(d);
                        break;
                    }
                    sent += 1;
                }
                let payload = packer.finish(&mut padding_rng(index ^ 0xb175));
                if let Some(h) = hook.as_mut() {
                    h(index, &payload);
                }
                let syms = codec.encode(&payload).expect("payload sized by the packer");
                if out.push(SymbolFrame { index, symbols: syms }).is_err() {
                    break;
                }
                control.publish("bs.datagrams_in", sent);
                index += 1;
            }
        });
    }

    // modulator
    {
        let (control, cfg, realtime) = (p.control.clone(), cfg.clone(), opts.realtime);
        let (inp, wave, grids) = (symbols.clone(), tx_wave.clone(), tx_grid.clone());
        let mut closes: Vec<Arc<dyn QueueHandle>> = vec![wave.clone(), grids.clone(), inp.clone()];
        closes.extend(extra_tx.iter().map(|q| q.clone() as Arc<dyn QueueHandle>));
        p.spawn("bs_modulator", closes, move || {
            let plan = cfg.frame_plan();
            let mut fft = FftCache::new();
            let start = Instant::now();
            let frame_s = cfg.frame_duration_s();
            let mut n = 0u64;
            while let Some(f) = inp.pop() {
                let grid = map_grid(&f.symbols, &cfg, &plan, &zc, f.index).expect("codec fits the grid");
                let samples = Arc::new(ofdm_modulate(&grid, &cfg, &mut fft));
                if realtime {
                    pace(start, n, frame_s);
                }
                if grids.push(grid).is_err() {
                    break;
                }
                let burst = TxBurst { index: f.index, samples };
                for q in &extra_tx {
                    let _ = q.push(burst.clone());
                }
                if wave.push(burst).is_err() {
                    break;
                }
                n += 1;
                publish_rate(&control, "bs.rtf", n, frame_s, start);
                control.publish("bs.frames", n);
            }
        });
    }

    // monostatic channel
    {
        let frame_len = cfg.frame_len();
        let (inp, out) = (tx_wave.clone(), rx_wave.clone());
        p.spawn("bs_chansim", vec![out.clone(), inp.clone()], move || {
            let mut framer = FrameAssembler::new(frame_len);
            let mut y = Vec::with_capacity(2 * frame_len);
            let mut total = 0u64;
            while let Some(b) = inp.pop() {
                total += b.samples.len() as u64;
                y.clear();
                mono_chan.process_into(&b.samples, &mut y);
                for (index, samples) in framer.push(&y) {
                    if out.push(RxFrame { index, samples }).is_err() {
                        return;
                    }
                }
            }
            for (index, samples) in framer.push(&mono_chan.flush_to(total)) {
                let _ = out.push(RxFrame { index, samples });
            }
        });
    }

    // monostatic sensing
    {
        let (control, cfg) = (p.control.clone(), cfg.clone());
        let (inp, grids, out) = (rx_wave.clone(), tx_grid.clone(), emit_q.clone());
        p.spawn("bs_sensing", vec![out.clone(), inp.clone(), grids.clone()], move || {
            let mut sensor = MonoSensor::new(&cfg);
            let mut fft = FftCache::new();
            let mut seq = 0u64;
            while let Some(rx) = inp.pop() {
                let grid = loop {
                    match grids.pop() {
                        Some(g) if g.frame_index < rx.index => continue,
                        other => break other,
                    }
                };
                let Some(grid) = grid else { return };
                apply_sensing_controls(&mut sensor, &control);
                let h = demap_echo(&rx.samples, &grid, &cfg, &mut fft).expect("frame sized by chansim");
                if control.bypass() {
                    let rec = Emitted::Stream { node: "bs", frame_index: rx.index, cells: h };
                    if out.push(rec).is_err() {
                        return;
                    }
                    continue;
                }
                for o in sensor.process_channel(&h).expect("channel frame dimensions") {
                    let rec = map_record("bs", seq, o);
                    if let Emitted::Map(m) = &rec {
                        control.publish("bs.msr_db", format!("{:.2}", m.msr_db));
                    }
                    seq += 1;
                    control.publish("bs.maps", seq);
                    if out.push(rec).is_err() {
                        return;
                    }
                }
            }
        });
    }

    let sink = sinks.emit.take();
    p.spawn("bs_emission", vec![emit_q.clone()], emission_stage(emit_q, sink));
    Ok(())
}

/// Spawns the UE graph fed by `source` (modulated BS frames).
pub fn run_ue(
    cfg: &SystemConfig,
    scenario: &ChannelScenario,
    opts: &PipelineOptions,
    control: Arc<ControlState>,
    sinks: UeSinks,
    source: Arc<BoundedQueue<TxBurst>>,
) -> Result<Pipeline, PipelineError> {
    let mut p = Pipeline::new(control);
    add_ue(&mut p, cfg, scenario, opts, sinks, source)?;
    Ok(p)
}

fn add_ue(
    p: &mut Pipeline,
    cfg: &SystemConfig,
    scenario: &ChannelScenario,
    opts: &PipelineOptions,
    mut sinks: UeSinks,
    source: Arc<BoundedQueue<TxBurst>>,
) -> Result<(), PipelineError> {
    let cap = opts.queue_capacity;
    let trim = ClockTrim::new();
    let mut ue_chan = Propagator::ue(scenario, cfg, Some(trim.clone()))?;
    let codec = default_codec(cfg)?;
    let receiver = UeReceiver::new(cfg)?.with_codec(codec).with_clock_trim(trim);
    let mut sensor = BistaticSensor::new(cfg, opts.bistatic_mode)?;
    let rx_policy = if opts.realtime { QueuePolicy::DropOldest } else { QueuePolicy::BlockProducer };
    let egress = match opts.udp_out {
        Some(addr) => Some(UdpEgress::new(addr).map_err(|source| PipelineError::BindFailure {
            addr: addr.to_string(),
            source,
        })?),
        None => None,
    };

    let rx = p.queue::<Vec<Cf>>("ue_rx_waveform", cap, rx_policy);
    let data = p.queue::<(u64, Vec<u8>)>("llr", cap, QueuePolicy::BlockProducer);
    let sensing = p.queue::<Box<crate::uerx::UeFrame>>("sensing", cap, QueuePolicy::BlockProducer);
    let emit_q = p.queue::<Emitted>("ue_emission", cap, QueuePolicy::BlockProducer);
    let events: Option<EventHook> = sinks.events.take().map(|e| Arc::new(Mutex::new(e)));
    let send_event = {
        let events = events.clone();
        move |e: &UeEvent| {
            if let Some(h) = &events {
                (h.lock().unwrap())(e);
            }
        }
    };

    // UE channel
    {
        let frame_len = cfg.frame_len() as u64;
        let chunk = if opts.rx_chunk == 0 { cfg.frame_len() } else { opts.rx_chunk };
        let outage = opts.ue_outage.clone();
        let floor = cfg.cell_amplitude() * 1e-3;
        let seed = scenario.seed;
        let (inp, out) = (source.clone(), rx.clone());
        p.spawn("ue_chansim", vec![out.clone(), inp.clone()], move || {
            let sigma = ue_chan.noise_sigma().max(floor);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a6e);
            let mut pending: Vec<Cf> = Vec::new();
            let mut produced = 0u64;
            let mut total = 0u64;
            let mut forward = |samples: Vec<Cf>, pending: &mut Vec<Cf>, produced: &mut u64, last: bool| -> bool {
                let mut samples = samples;
                if let Some(r) = &outage {
                    for (i, s) in samples.iter_mut().enumerate() {
                        if r.contains(&((*produced + i as u64) / frame_len)) {
                            let re: f64 = StandardNormal.sample(&mut rng);
                            let im: f64 = StandardNormal.sample(&mut rng);
                            *s = Cf::new(re, im) * (sigma / std::f64::consts::SQRT_2);
                        }
                    }
                }
                *produced += samples.len() as u64;
                pending.extend(samples);
                while pending.len() >= chunk || (last && !pending.is_empty()) {
                    let take = chunk.min(pending.len());
                    let rest = pending.split_off(take);
                    if out.push(std::mem::replace(pending, rest)).is_err() {
                        return false;
                    }
                }
                true
            };
            while let Some(b) = inp.pop() {
                total += b.samples.len() as u64;
                let y = ue_chan.process(&b.samples);
                if !forward(y, &mut pending, &mut produced, false) {
                    return;
                }
            }
            let tail = ue_chan.flush_to(total);
            forward(tail, &mut pending, &mut produced, true);
        });
    }

    // demodulator
    {
        let control = p.control.clone();
        let frame_s = cfg.frame_duration_s();
        let (inp, data_out, sense_out) = (rx.clone(), data.clone(), sensing.clone());
        let send_event = send_event.clone();
        let mut receiver = receiver;
        p.spawn("ue_demod", vec![data_out.clone(), sense_out.clone(), inp.clone()], move || {
            let start = Instant::now();
            let mut frames = 0u64;
            let mut acquisitions = 0u64;
            let mut blocks_failed = 0u64;
            while let Some(chunk) = inp.pop() {
                receiver.set_sync_threshold(control.sync_threshold());
                for o in receiver.push(&chunk) {
                    match o {
                        UeOutput::Acquired { hit, cfo_hz } => {
                            acquisitions += 1;
                            control.publish("ue.acquisitions", acquisitions);
                            send_event(&UeEvent::Acquired { k_to: hit.k_to, cfo_hz });
                        }
                        UeOutput::LockLost { frame } => {
                            control.publish("ue.lock_lost_frame", frame);
                            send_event(&UeEvent::LockLost { frame });
                        }
                        UeOutput::Frame(f) => {
                            frames += 1;
                            let (payload, blocks, failed) = match &f.decoded {
                                Some(d) => (d.payload.clone(), d.blocks, d.blocks_failed),
                                None => (Vec::new(), 0, 0),
                            };
                            blocks_failed += failed as u64;
                            send_event(&UeEvent::Frame {
                                index: f.index,
                                k_to: f.timing_correction,
                                applied_timing: f.applied_timing,
                                f_o_hz: f.estimate.f_o_hz,
                                dts_s: f.estimate.dts_s,
                                applied_freq_hz: f.applied_freq_hz,
                                snr_db: f.equalized.snr_db,
                                blocks,
                                blocks_failed: failed,
                                payload: payload.clone(),
                            });
                            if failed == 0 && !payload.is_empty() && data_out.push((f.index, payload)).is_err() {
                                return;
                            }
                            if sense_out.push(f).is_err() {
                                return;
                            }
                            publish_rate(&control, "ue.rtf", frames, frame_s, start);
                            control.publish("ue.blocks_failed", blocks_failed);
                        }
                    }
                }
                let st = receiver.state();
                control.publish_all([
                    ("phase", st.phase.as_str().to_string()),
                    ("k_to", st.k_to.to_string()),
                    ("f_o_hz", format!("{:.3}", st.f_o_hz)),
                    ("dts_s", format!("{:e}", st.dts_s)),
                    ("applied_freq_hz", format!("{:.3}", st.applied_freq_hz)),
                    ("snr_db", format!("{:.2}", st.lock_quality)),
                    ("frames_in_lock", st.frames_in_lock.to_string()),
                    ("ue.frames", frames.to_string()),
                ]);
            }
        });
    }

    // payload bit processing
    {
        let control = p.control.clone();
        let inp = data.clone();
        let mut hook = sinks.datagrams.take();
        p.spawn("ue_bits", vec![inp.clone()], move || {
            let mut out = 0u64;
            let mut crc_failures = 0u64;
            while let Some((_, payload)) = inp.pop() {
                let parsed = parse_records(&payload);
                crc_failures += parsed.crc_failures as u64;
                for d in parsed.datagrams {
                    if let Some(e) = &egress {
                        if let Err(err) = e.send(&d) {
                            log::warn!("udp egress: {err}");
                        }
                    }
                    if let Some(h) = hook.as_mut() {
                        h(&d);
                    }
                    out += 1;
                }
                control.publish("ue.datagrams_out", out);
                control.publish("ue.crc_failures", crc_failures);
            }
        });
    }

    // bistatic sensing
    {
        let control = p.control.clone();
        let (inp, out) = (sensing.clone(), emit_q.clone());
        let send_event = send_event.clone();
        p.spawn("ue_sensing", vec![out.clone(), inp.clone()], move || {
            let mut seq = 0u64;
            while let Some(f) = inp.pop() {
                apply_sensing_controls(sensor.chain_mut(), &control);
                sensor.tracker_mut().set_mu_default(control.mu_default());
                let bypass = control.bypass();
                let bf = if bypass { sensor.compensate_frame(&f) } else { sensor.process(&f) };
                let bf = match bf {
                    Ok(b) => b,
                    Err(e) => {
                        log::warn!("bistatic frame {}: {e}", f.index);
                        continue;
                    }
                };
                send_event(&UeEvent::Sensing {
                    index: bf.index,
                    k_tau: bf.delay.k_tau,
                    k_sens: bf.step.k_sens,
                    eps_sio: bf.step.eps_sio,
                });
                control.publish_all([
                    ("k_sens", format!("{:.4}", bf.step.k_sens)),
                    ("eps_sio", format!("{:.6}", bf.step.eps_sio)),
                    ("mu", format!("{:e}", bf.step.mu)),
                ]);
                if bypass {
                    let rec = Emitted::Stream { node: "ue", frame_index: bf.index, cells: bf.channel };
                    if out.push(rec).is_err() {
                        return;
                    }
                    continue;
                }
                for o in bf.sensing {
                    let rec = map_record("ue", seq, o);
                    seq += 1;
                    control.publish("ue.maps", seq);
                    if out.push(rec).is_err() {
                        return;
                    }
                }
            }
        });
    }

    let sink = sinks.emit.take();
    p.spawn("ue_emission", vec![emit_q.clone()], emission_stage(emit_q, sink));
    Ok(())
}

/// Both nodes in one process, the UE fed directly from the BS modulator.
pub fn run_loopback(
    cfg: &SystemConfig,
    scenario: &ChannelScenario,
    opts: &PipelineOptions,
    control: Arc<ControlState>,
    mut bs_sinks: BsSinks,
    ue_sinks: UeSinks,
) -> Result<Pipeline, PipelineError> {
    let mut p = Pipeline::new(control);
    let link = Arc::new(BoundedQueue::new(opts.queue_capacity, QueuePolicy::BlockProducer));
    p.queues.push(link.clone());
    add_bs(&mut p, cfg, scenario, opts, &mut bs_sinks, vec![link.clone()])?;
    add_ue(&mut p, cfg, scenario, opts, ue_sinks, link)?;
    Ok(p)
}
