//! End-to-end acceptance checks. Runs without the libtest harness so every check prints one
//! PASS/FAIL line; pass criterion numbers as arguments to run a subset.

mod common;

use std::net::UdpSocket;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use common::*;
use openisac::bisense::{delay_estimate, BistaticSensor, CompensationMode};
use openisac::cfg::{FramePlan, SystemConfig};
use openisac::chansim::{
    ground_truth, load_scenario_file, ChannelScenario, NoiseSpec, PathKind, PathSpec, Propagator,
};
use openisac::dsp::{cis_cycles, CMatrix, Cf, FftCache};
use openisac::mono::{FrameAssembler, MonoSensor, SensingOutput};
use openisac::phytx::framing::random_payload;
use openisac::phytx::{map_grid, ofdm_modulate, zc_generate, FrameCodec, ResourceGrid, ZcSequence};
use openisac::runtime::udp::UdpIngress;
use openisac::runtime::{
    default_codec, run_bs, run_loopback, BoundedQueue, BsSinks, ControlClient, ControlServer,
    ControlState, Emitted, PipelineOptions, QueuePolicy, UeSinks,
};
use openisac::uerx::{cp_cfo_estimate, pilot_regression, propagate_channel, UeFrame, UeOutput, UeReceiver};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn path(kind: PathKind, gain_db: f64, delay_ns: f64, doppler_hz: f64) -> PathSpec {
    PathSpec {
        gain: Cf::new(10f64.powf(gain_db / 20.0), 0.0),
        delay_s: delay_ns * 1e-9,
        doppler_hz,
        kind,
    }
}

fn cnoise(rng: &mut ChaCha8Rng, sigma: f64) -> Cf {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Cf::new(re, im) * (sigma / 2f64.sqrt())
}

/// Frame source: padding-only grids, or random payloads through a codec.
struct Source {
    cfg: SystemConfig,
    plan: FramePlan,
    zc: ZcSequence,
    fft: FftCache,
    codec: Option<FrameCodec>,
    rng: ChaCha8Rng,
    next: u64,
}

impl Source {
    fn new(cfg: &SystemConfig, codec: Option<FrameCodec>, seed: u64) -> Self {
        Self {
            cfg: cfg.clone(),
            plan: cfg.frame_plan(),
            zc: zc_generate(cfg.num_subcarriers, cfg.zc_root).unwrap(),
            fft: FftCache::new(),
            codec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next: 0,
        }
    }

    fn frame(&mut self) -> (ResourceGrid, Vec<Cf>, Vec<u8>) {
        let (symbols, payload) = match &self.codec {
            Some(c) => {
                let p = random_payload(c.payload_bytes(), &mut self.rng);
                (c.encode(&p).unwrap(), p)
            }
            None => (Vec::new(), Vec::new()),
        };
        let g = map_grid(&symbols, &self.cfg, &self.plan, &self.zc, self.next).unwrap();
        self.next += 1;
        let wave = ofdm_modulate(&g, &self.cfg, &mut self.fft);
        (g, wave, payload)
    }
}

/// Monostatic run over `frames`, echo pushed through the channel in `chunk`-sample pieces.
fn mono_run(cfg: &SystemConfig, scen: &ChannelScenario, frames: u64, chunk: usize, mti: bool) -> Vec<SensingOutput> {
    let mut src = Source::new(cfg, None, 1);
    let mut prop = Propagator::mono(scen, cfg).unwrap();
    let mut asm = FrameAssembler::new(cfg.frame_len());
    let mut sensor = MonoSensor::new(cfg);
    sensor.set_mti_enabled(mti);
    let mut grids = Vec::new();
    let mut out = Vec::new();
    let mut wave = Vec::new();
    for _ in 0..frames {
        let (g, w, _) = src.frame();
        grids.push(g);
        wave.extend(w);
    }
    let mut consume = |rx: Vec<Cf>, out: &mut Vec<SensingOutput>| {
        for (i, f) in asm.push(&rx) {
            out.extend(sensor.process_frame(&f, &grids[i as usize]).unwrap());
        }
    };
    for piece in wave.chunks(chunk) {
        let rx = prop.process(piece);
        consume(rx, &mut out);
    }
    let tail = prop.flush_to(wave.len() as u64);
    consume(tail, &mut out);
    out
}

fn energy(m: &CMatrix) -> f64 {
    m.data.iter().map(|v| v.norm_sqr()).sum()
}

/// Clutter suppression over a set of sensing frames, pooled.
fn pooled_msr_db<'a>(frames: impl Iterator<Item = &'a SensingOutput>) -> f64 {
    let (pre, post) = frames.fold((0.0, 0.0), |a, o| (a.0 + energy(&o.frame.pre_mti), a.1 + energy(&o.frame.cells)));
    10.0 * (pre / post).log10()
}

/// UE link run: feeds every demodulated frame to `on_frame`.
fn ue_run(
    cfg: &SystemConfig,
    scen: &ChannelScenario,
    frames: u64,
    codec: bool,
    mut on_frame: impl FnMut(&UeFrame, &[Vec<u8>]),
) -> (Vec<Vec<u8>>, usize) {
    let mut src = Source::new(cfg, codec.then(|| default_codec(cfg).unwrap()), 2);
    let mut prop = Propagator::ue(scen, cfg, None).unwrap();
    let mut rx = UeReceiver::new(cfg).unwrap();
    if codec {
        rx = rx.with_codec(default_codec(cfg).unwrap());
    }
    let mut payloads = Vec::new();
    let mut lost = 0;
    for _ in 0..frames {
        let (_, w, p) = src.frame();
        payloads.push(p);
        for o in rx.push(&prop.process(&w)) {
            match o {
                UeOutput::Frame(f) => on_frame(&f, &payloads),
                UeOutput::LockLost { .. } => lost += 1,
                UeOutput::Acquired { .. } => {}
            }
        }
    }
    (payloads, lost)
}

fn c1_mono_localization() -> Check {
    let t0 = Instant::now();
    let cfg = table2();
    let scen = load_scenario_file(&asset("scenarios/table2_target.toml"), &cfg).unwrap();
    let truth = &ground_truth(&scen, &cfg).mono_paths[0];
    let frames = 2 * (cfg.sensing_symbols * cfg.stride / cfg.symbols_per_frame) as u64;
    let out = mono_run(&cfg, &scen, frames, cfg.frame_len(), true);
    let elapsed = t0.elapsed().as_secs_f64();
    let last = out.last().ok_or("no sensing frame")?;
    let d = last.detections.first().ok_or("no detection")?;
    let delay_bin = 1.0 / (cfg.periodogram_sizes.0 as f64 * cfg.subcarrier_spacing_hz());
    let doppler_bin = cfg.effective_prf_hz() / cfg.periodogram_sizes.1 as f64;
    let de = (d.delay_s - truth.delay_s) / delay_bin;
    let fe = (d.doppler_hz - truth.doppler_hz) / doppler_bin;
    ensure(
        de.abs() <= 1.0 && fe.abs() <= 1.0 && elapsed < 30.0,
        format!(
            "peak {:.1} ns / {:.2} Hz, error {de:+.2} delay bins ({:.1} ns) and {fe:+.2} Doppler bins ({:.2} Hz), {elapsed:.1} s",
            d.delay_s * 1e9,
            d.doppler_hz,
            delay_bin * 1e9,
            doppler_bin
        ),
    )
}

fn c2_clutter_suppression() -> Check {
    let cfg = table2();
    let per_sensing = (cfg.sensing_symbols * cfg.stride / cfg.symbols_per_frame) as u64;
    let clutter = ChannelScenario {
        mono_paths: vec![
            path(PathKind::Clutter, 0.0, 300.0, 0.0),
            path(PathKind::Clutter, -6.0, 900.0, 0.0),
            path(PathKind::Clutter, -12.0, 2000.0, 0.0),
        ],
        noise: NoiseSpec::SnrDb(60.0),
        seed: 5,
        ..Default::default()
    };
    let out = mono_run(&cfg, &clutter, 3 * per_sensing, cfg.frame_len(), true);
    let msr = pooled_msr_db(out.iter().skip(1));

    // target at twice the filter cutoff, with and without the filter
    let cutoff = 0.02;
    let f_target = 2.0 * cutoff * cfg.effective_prf_hz();
    let target = ChannelScenario {
        mono_paths: vec![path(PathKind::Target, 0.0, 600.0, f_target)],
        noise: NoiseSpec::SnrDb(60.0),
        seed: 6,
        ..Default::default()
    };
    let peak = |mti: bool| {
        let out = mono_run(&cfg, &target, 3 * per_sensing, cfg.frame_len(), mti);
        out.last().unwrap().detections[0].power_db
    };
    let atten = peak(false) - peak(true);
    let oracle = -20.0 * cfg.mti_sos.response(2.0 * cutoff).norm().log10();
    ensure(
        msr >= 40.0 && atten < 3.0 && (atten - oracle).abs() < 0.5,
        format!("static clutter MSR {msr:.1} dB; target at {f_target:.1} Hz loses {atten:.2} dB (transfer function {oracle:.2} dB)"),
    )
}

fn c3_sync_ordering() -> Check {
    let cfg = table2();
    let ue_paths = vec![
        path(PathKind::Los, 0.0, 0.0, 0.0),
        path(PathKind::Clutter, -3.0, 300.0, 0.0),
        path(PathKind::Clutter, -6.0, 800.0, 0.0),
    ];
    let mut scen = ChannelScenario { ue_paths, noise: NoiseSpec::SnrDb(50.0), seed: 13, ..Default::default() };
    scen.clocks.timing_offset_s = 1000e-9;
    // sensing frames span 20 radio frames; compare from frame 500, after the tracker settles
    let frames = 700;
    let skip = 25;
    let mut ideal = BistaticSensor::new(&cfg, CompensationMode::CommOnly).unwrap();
    let mut ideal_out = Vec::new();
    ue_run(&cfg, &scen, frames, false, |f, _| ideal_out.extend(ideal.process(f).unwrap().sensing));

    scen.clocks.cfo_hz = 500.0;
    scen.clocks.sio_s = 1e-6 * cfg.sample_period_s();
    let mut ota = BistaticSensor::new(&cfg, CompensationMode::Ota).unwrap();
    let mut comm = BistaticSensor::new(&cfg, CompensationMode::CommOnly).unwrap();
    let (mut ota_out, mut comm_out) = (Vec::new(), Vec::new());
    ue_run(&cfg, &scen, frames, false, |f, _| {
        ota_out.extend(ota.process(f).unwrap().sensing);
        comm_out.extend(comm.process(f).unwrap().sensing);
    });
    let count = ideal_out.len().min(ota_out.len()).min(comm_out.len());
    if count <= skip {
        return Err(format!("only {count} sensing frames"));
    }
    let m = |v: &[SensingOutput]| pooled_msr_db(v[skip..count].iter());
    let (mi, mo, mc) = (m(&ideal_out), m(&ota_out), m(&comm_out));
    ensure(
        mi >= mo && mo >= mc + 5.0,
        format!("MSR ideal {mi:.1} dB, OTA {mo:.1} dB, comm-only {mc:.1} dB over {} sensing frames", count - skip),
    )
}

fn c4_tracking_accuracy() -> Check {
    let cfg = table2();
    let ue_paths = vec![path(PathKind::Los, 0.0, 0.0, 0.0), path(PathKind::Clutter, -10.0, 400.0, 0.0)];
    let mut scen = ChannelScenario { ue_paths, noise: NoiseSpec::SnrDb(30.0), seed: 17, ..Default::default() };
    scen.clocks.timing_offset_s = 1000e-9;
    scen.clocks.cfo_hz = 500.0;
    scen.clocks.sio_s = 1e-6 * cfg.sample_period_s();
    let frames = 2000;
    let mut sensor = BistaticSensor::new(&cfg, CompensationMode::Ota).unwrap();
    let mut fft = FftCache::new();
    let (mut residual, mut raw) = (Vec::new(), Vec::new());
    let mut applied = 0i64;
    let last_col = cfg.symbols_per_frame - 1;
    ue_run(&cfg, &scen, frames, false, |f, _| {
        let bf = sensor.compensate_frame(f).unwrap();
        applied += f.applied_timing;
        raw.push(bf.delay.k_tau + applied as f64);
        // LoS position left in the compensated symbols, first and last column
        let pos = [0, last_col].map(|m| {
            let mut s = bf.channel.column(m).to_vec();
            fft.unitary_inverse(&mut s);
            delay_estimate(&s, cfg.bandwidth_hz).unwrap().k_tau
        });
        residual.push((pos[0] + pos[1]) / 2.0);
    });
    if residual.len() < 1900 {
        return Err(format!("only {} frames demodulated", residual.len()));
    }
    let tail = |v: &[f64]| v[v.len() - 10..].iter().sum::<f64>() / 10.0;
    let comp_drift = tail(&residual) - residual[0];
    let raw_drift = tail(&raw) - raw[0];
    let expected = ground_truth(&scen, &cfg).sio_lag_samples((residual.len() * cfg.frame_len()) as u64);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let settled = mean(&residual[residual.len() - 100..]) - mean(&residual[500..600]);
    ensure(
        comp_drift.abs() <= 0.1 && (raw_drift.abs() - expected.abs()).abs() < 1.0,
        format!(
            "compensated drift {comp_drift:+.3} samples ({settled:+.4} from frame 500 on), uncompensated {raw_drift:+.1} (clock model {expected:+.1}) over {} frames",
            residual.len()
        ),
    )
}

fn c5_quinn_sweep() -> Check {
    let n = 1024;
    let mut fft = FftCache::new();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (mut worst_clean, mut worst_noisy) = (0.0f64, 0.0f64);
    for i in -4..=4 {
        let delta = i as f64 / 10.0;
        let k = 100.0 + delta;
        let tone: Vec<Cf> = (0..n).map(|s| cis_cycles(-(s as f64) * k / n as f64)).collect();
        let est = |h: &[Cf], fft: &mut FftCache| {
            let mut s = h.to_vec();
            fft.unitary_inverse(&mut s);
            delay_estimate(&s, 1.0).unwrap().k_tau - k
        };
        worst_clean = worst_clean.max(est(&tone, &mut fft).abs());
        let sigma = 10f64.powf(-20.0 / 20.0);
        let mut acc = 0.0;
        for _ in 0..100 {
            let h: Vec<Cf> = tone.iter().map(|v| v + cnoise(&mut rng, sigma)).collect();
            acc += est(&h, &mut fft).abs();
        }
        worst_noisy = worst_noisy.max(acc / 100.0);
    }
    ensure(
        worst_clean <= 0.02 && worst_noisy <= 0.1,
        format!("max error {worst_clean:.2e} noiseless, {worst_noisy:.2e} mean at 20 dB"),
    )
}

fn c6_wls_recovery() -> Check {
    let cfg = table2();
    let (f_o, dts) = (200.0, 2e-14);
    let zc = zc_generate(cfg.num_subcarriers, cfg.zc_root).unwrap();
    let g = map_grid(&[], &cfg, &cfg.frame_plan(), &zc, 0).unwrap();
    let h = propagate_channel(&vec![Cf::new(1.0, 0.0); cfg.num_subcarriers], f_o, dts, &cfg);
    let mut clean = g.cells.clone();
    clean.data.iter_mut().zip(&h.data).for_each(|(v, hv)| *v *= hv);
    let r = pilot_regression(&clean, &cfg).unwrap();
    let (ef, ed) = ((r.f_o_hz / f_o - 1.0).abs(), (r.dts_s / dts - 1.0).abs());

    let cell_power = cfg.cell_amplitude().powi(2);
    let sigma = (cell_power / 100.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let (mut sf, mut sd) = (0.0, 0.0);
    for _ in 0..100 {
        let mut noisy = clean.clone();
        noisy.data.iter_mut().for_each(|v| *v += cnoise(&mut rng, sigma));
        let r = pilot_regression(&noisy, &cfg).unwrap();
        sf += r.f_o_hz;
        sd += r.dts_s;
    }
    let (mf, md) = (sf / 100.0, sd / 100.0);
    ensure(
        ef <= 1e-6 && ed <= 1e-6 && (mf - f_o).abs() <= 2.0 && (md / dts - 1.0).abs() <= 0.05,
        format!(
            "noiseless relative errors {ef:.1e} / {ed:.1e}; 20 dB means {mf:.2} Hz and {md:.3e} s ({:+.1} %)",
            (md / dts - 1.0) * 100.0
        ),
    )
}

fn loopback_datagrams(cfg: &SystemConfig, scen: &ChannelScenario) -> Result<usize, String> {
    let out = UdpSocket::bind("127.0.0.1:0").unwrap();
    out.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
    let opts = PipelineOptions {
        udp_in: Some("127.0.0.1:0".parse().unwrap()),
        udp_out: Some(out.local_addr().unwrap()),
        ..Default::default()
    };
    let p = run_loopback(cfg, scen, &opts, ControlState::new(cfg), BsSinks::default(), UeSinks::default())
        .map_err(|e| e.to_string())?;
    if !wait_until(Duration::from_secs(30), || p.control().get("phase").ok().as_deref() == Some("NORMAL")) {
        return Err("UE never locked".into());
    }
    let tx = UdpSocket::bind("127.0.0.1:0").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let sent: Vec<Vec<u8>> = (0..200).map(|_| {
        let len = rng.random_range(1..1200);
        (0..len).map(|_| rng.random()).collect()
    }).collect();
    let expected = sent.len();
    let reader = thread::spawn(move || {
        let mut got = Vec::new();
        let mut buf = vec![0u8; 2048];
        while got.len() < expected {
            match out.recv(&mut buf) {
                Ok(n) => got.push(buf[..n].to_vec()),
                Err(_) => break,
            }
        }
        got
    });
    let accepted = || p.control().get("bs.datagrams_in").ok().and_then(|v| v.parse::<usize>().ok()).unwrap_or(0);
    for (i, d) in sent.iter().enumerate() {
        // keep the host socket buffer from overflowing while the link drains
        wait_until(Duration::from_secs(10), || i < accepted() + 8);
        tx.send_to(d, p.udp_in_addr().unwrap()).unwrap();
    }
    let got = reader.join().unwrap();
    p.stop();
    p.join().map_err(|e| e.to_string())?;
    if got != sent {
        return Err(format!("{} received, {} of {} matched in order", got.len(), got.iter().zip(&sent).filter(|(a, b)| a == b).count(), sent.len()));
    }
    Ok(sent.len())
}

fn c7_comm_loopback() -> Check {
    let cfg = desk();
    let ue_paths = vec![path(PathKind::Los, 0.0, 0.0, 0.0), path(PathKind::Clutter, -6.0, 500.0, 0.0)];
    let mut scen = ChannelScenario { ue_paths, noise: NoiseSpec::SnrDb(30.0), seed: 23, ..Default::default() };
    scen.clocks.timing_offset_s = 20e-6;
    scen.clocks.cfo_hz = 0.1 * cfg.subcarrier_spacing_hz();
    scen.clocks.sio_s = 1e-6 * cfg.sample_period_s();
    let info_bits = default_codec(&cfg).unwrap().payload_bytes() * 8;
    let frames = (1e5 / info_bits as f64).ceil() as u64 + 4;
    let mut decoded: Vec<(u64, Vec<u8>)> = Vec::new();
    let (payloads, lost) = ue_run(&cfg, &scen, frames, true, |f, _| {
        decoded.push((f.index, f.decoded.as_ref().unwrap().payload.clone()));
    });
    if decoded.is_empty() {
        return Err("nothing decoded".into());
    }
    // align receiver frame numbering with the transmitter by the first frame
    let bit_errors = |a: &[u8], b: &[u8]| a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as usize).sum::<usize>();
    let offset = (0..payloads.len())
        .min_by_key(|&j| bit_errors(&decoded[0].1, &payloads[j]))
        .unwrap() as i64
        - decoded[0].0 as i64;
    let (mut errors, mut bits) = (0, 0);
    for (i, p) in &decoded {
        let j = (*i as i64 + offset) as usize;
        errors += bit_errors(p, &payloads[j]);
        bits += p.len() * 8;
    }
    let udp = loopback_datagrams(&cfg, &scen);
    ensure(
        errors == 0 && bits >= 100_000 && lost == 0 && udp.is_ok(),
        format!(
            "{errors} errors in {bits} info bits over {} frames, {lost} lock losses; datagrams: {}",
            decoded.len(),
            match &udp {
                Ok(n) => format!("{n} byte-identical"),
                Err(e) => e.clone(),
            }
        ),
    )
}

fn c8_streaming_equivalence() -> Check {
    let cfg = desk();
    let scen = desk_scenario(&cfg);
    let frames = 2 * (cfg.sensing_symbols * cfg.stride / cfg.symbols_per_frame) as u64;
    let chunks = [1, 7, cfg.symbol_len(), cfg.frame_len()];
    let runs: Vec<Vec<SensingOutput>> = chunks.iter().map(|&c| mono_run(&cfg, &scen, frames, c, true)).collect();
    let reference = &runs[runs.len() - 1];
    if reference.len() < 2 || reference[1].detections.is_empty() {
        return Err(format!("{} sensing frames, nothing detected", reference.len()));
    }
    for (c, r) in chunks.iter().zip(&runs) {
        if r.len() != reference.len() {
            return Err(format!("chunk {c}: {} sensing frames vs {}", r.len(), reference.len()));
        }
        for (a, b) in r.iter().zip(reference) {
            let same_bits = a.frame.cells.data.iter().zip(&b.frame.cells.data).all(|(x, y)| {
                x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()
            });
            if !same_bits || a.detections != b.detections {
                return Err(format!("chunk {c}: sensing frame {} differs", a.frame.index));
            }
        }
    }
    Ok(format!(
        "chunks {chunks:?} give identical filtered symbols and detections over {} sensing frames",
        reference.len()
    ))
}

fn c9_cp_cfo() -> Check {
    let cfg = desk();
    let df = cfg.subcarrier_spacing_hz();
    let mut src = Source::new(&cfg, None, 9);
    let (_, wave, _) = src.frame();
    let ts = cfg.sample_period_s();
    let est = |f: f64| {
        let x: Vec<Cf> = wave.iter().enumerate().map(|(k, v)| v * cis_cycles(f * k as f64 * ts)).collect();
        cp_cfo_estimate(&x, &cfg)
    };
    let rel = (est(0.1 * df) / (0.1 * df) - 1.0).abs();
    let wraps = [(0.6, -0.4), (-0.6, 0.4), (0.49, 0.49), (-0.49, -0.49)];
    let wrap_err = wraps.iter().map(|&(inj, exp)| (est(inj * df) / (exp * df) - 1.0).abs()).fold(0.0, f64::max);
    ensure(
        rel <= 1e-4 && wrap_err <= 1e-4,
        format!("relative error {rel:.1e} at 0.1 spacing; wrapped estimates within {wrap_err:.1e}"),
    )
}

fn backpressure() -> Result<String, String> {
    let q = Arc::new(BoundedQueue::new(16, QueuePolicy::BlockProducer));
    let mut ing = UdpIngress::spawn("127.0.0.1:0", q.clone(), 1500).unwrap();
    let counters = ing.counters().clone();
    let total = 10_000u32;
    let consumer = {
        let q = q.clone();
        thread::spawn(move || {
            let mut got = Vec::new();
            while got.len() < total as usize {
                let Some(d) = q.pop() else { break };
                if got.len() % 8 == 0 {
                    thread::sleep(Duration::from_micros(200));
                }
                got.push(d);
            }
            got
        })
    };
    let tx = UdpSocket::bind("127.0.0.1:0").unwrap();
    for i in 0..total {
        while i as u64 - counters.received.load(Ordering::Relaxed) > 64 {
            thread::yield_now();
        }
        tx.send_to(&i.to_be_bytes(), ing.local_addr()).unwrap();
    }
    let got = consumer.join().unwrap();
    ing.stop();
    let in_order = got.iter().enumerate().all(|(i, d)| u32::from_be_bytes(d[..4].try_into().unwrap()) == i as u32);
    let st = q.stats();
    if got.len() == total as usize && in_order && st.dropped == 0 && st.max_depth <= st.capacity {
        Ok(format!("{total} datagrams in order, max depth {}/{}", st.max_depth, st.capacity))
    } else {
        Err(format!("{} of {total} received, in order {in_order}, dropped {}", got.len(), st.dropped))
    }
}

fn stride_switch() -> Result<String, String> {
    let cfg = desk();
    let scen = desk_scenario(&cfg);
    let (store, sink) = collector();
    let control = ControlState::new(&cfg);
    let server = ControlServer::bind("127.0.0.1:0", control.clone()).unwrap();
    let sinks = BsSinks { emit: Some(sink), tx_payload: None };
    let p = run_bs(&cfg, &scen, &PipelineOptions::default(), control.clone(), sinks, Vec::new()).map_err(|e| e.to_string())?;
    let mut c = ControlClient::connect(server.local_addr()).unwrap();
    let maps = |c: &mut ControlClient| {
        c.request("GET bs.maps").unwrap().first().and_then(|l| l.strip_prefix("bs.maps=")?.parse::<u64>().ok()).unwrap_or(0)
    };
    wait_until(Duration::from_secs(30), || maps(&mut c) >= 2);
    let before = maps(&mut c);
    let reply = c.request("SET stride 10").unwrap();
    let after = maps(&mut c);
    wait_until(Duration::from_secs(60), || maps(&mut c) >= after + 3);
    p.stop();
    p.join().map_err(|e| e.to_string())?;
    let emitted: Vec<(u64, usize)> = store
        .lock()
        .unwrap()
        .iter()
        .filter_map(|e| match e {
            Emitted::Map(m) => Some((m.seq, m.stride)),
            _ => None,
        })
        .collect();
    // maps finished before the command keep the old stride; the batch in flight may go
    // either way; every later one uses the new stride
    let old_ok = emitted.iter().filter(|m| m.0 < before).all(|m| m.1 == 5);
    let new_ok = emitted.iter().filter(|m| m.0 > after).all(|m| m.1 == 10);
    let switched = emitted.iter().any(|m| m.1 == 10);
    if reply == ["OK"] && old_ok && new_ok && switched {
        Ok(format!("stride 10 on every map after #{after} ({} maps)", emitted.len()))
    } else {
        Err(format!("reply {reply:?}, maps {emitted:?}"))
    }
}

fn realtime_factor() -> (f64, f64) {
    let cfg = desk();
    let scen = desk_scenario(&cfg);
    let control = ControlState::new(&cfg);
    let opts = PipelineOptions { frames: Some(200), ..Default::default() };
    run_loopback(&cfg, &scen, &opts, control.clone(), BsSinks::default(), UeSinks::default())
        .unwrap()
        .join()
        .unwrap();
    let get = |k: &str| control.get(k).ok().and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
    (get("bs.rtf"), get("ue.rtf"))
}

fn c10_pipeline() -> Check {
    let bp = backpressure();
    let st = stride_switch();
    let (bs_rtf, ue_rtf) = realtime_factor();
    let cpus = thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let rtf = format!(
        "real-time factor BS {bs_rtf:.2}, UE {ue_rtf:.2} on {cpus} CPU(s) ({})",
        if bs_rtf >= 1.0 && ue_rtf >= 1.0 { "met" } else { "soft threshold not met" }
    );
    let text = |r: &Result<String, String>| match r {
        Ok(s) | Err(s) => s.clone(),
    };
    ensure(bp.is_ok() && st.is_ok(), format!("back-pressure: {}; stride: {}; {rtf}", text(&bp), text(&st)))
}

fn main() -> ExitCode {
    let checks: [(u32, &str, fn() -> Check); 10] = [
        (1, "monostatic localization", c1_mono_localization),
        (2, "clutter suppression", c2_clutter_suppression),
        (3, "sync quality ordering", c3_sync_ordering),
        (4, "OTA tracking accuracy", c4_tracking_accuracy),
        (5, "fractional delay sweep", c5_quinn_sweep),
        (6, "pilot regression", c6_wls_recovery),
        (7, "communication loopback", c7_comm_loopback),
        (8, "streaming equivalence", c8_streaming_equivalence),
        (9, "CP frequency estimate", c9_cp_cfo),
        (10, "pipeline behaviour", c10_pipeline),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, f) in checks {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let (tag, detail) = match r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {name:<26} {tag}  {detail} [{:.1} s]", t0.elapsed().as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
