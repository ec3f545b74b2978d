use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use openisac::bisense::CompensationMode;
use openisac::cfg::{load_config_file, SystemConfig};
use openisac::chansim::{ground_truth, load_scenario_file, ChannelScenario, Link};
use openisac::runtime::link::{receive_bursts, serve_bursts};
use openisac::runtime::{
    run_bs, run_loopback, run_ue, BoundedQueue, BsSinks, ControlServer, ControlState, EmitSink,
    FileSink, Pipeline, PipelineOptions, QueuePolicy, UeSinks,
};

#[derive(Parser)]
#[command(name = "openisac", version, about = "OFDM ISAC baseband engine with a channel simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Base station: payload ingress, modulation, monostatic sensing.
    Bs(BsArgs),
    /// User equipment: synchronization, demodulation, bistatic sensing.
    Ue(UeArgs),
    /// Both nodes in one process.
    Loopback(LoopArgs),
    /// Print the ground truth a scenario injects.
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    control_port: Option<u16>,
    /// Map (RDMP) or bypass (CSYM) records are appended here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stop after this many frames.
    #[arg(long)]
    frames: Option<u64>,
    /// Pace the source at the frame rate.
    #[arg(long)]
    realtime: bool,
}

#[derive(Args)]
struct BsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    udp_in: Option<SocketAddr>,
    /// Serve the transmitted waveform to a UE process.
    #[arg(long)]
    tx_stream: Option<SocketAddr>,
}

#[derive(Args)]
struct UeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    udp_out: Option<SocketAddr>,
    /// BS waveform stream to connect to.
    #[arg(long)]
    rx_stream: SocketAddr,
    /// Skip timing and SIO compensation of the sensing symbols.
    #[arg(long)]
    comm_only: bool,
}

#[derive(Args)]
struct LoopArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    udp_in: Option<SocketAddr>,
    #[arg(long)]
    udp_out: Option<SocketAddr>,
    /// UE map output; defaults to `<out>.ue`.
    #[arg(long)]
    ue_out: Option<PathBuf>,
    #[arg(long)]
    comm_only: bool,
}

type Fallible<T> = Result<T, Box<dyn std::error::Error>>;

fn load(c: &Common) -> Fallible<(SystemConfig, ChannelScenario)> {
    let cfg = load_config_file(&c.config)?;
    let scenario = match &c.scenario {
        Some(p) => load_scenario_file(p, &cfg)?,
        None => ChannelScenario::default(),
    };
    Ok((cfg, scenario))
}

fn options(c: &Common) -> PipelineOptions {
    PipelineOptions { frames: c.frames, realtime: c.realtime, ..Default::default() }
}

fn file_sink(path: Option<&Path>) -> Fallible<Option<Box<dyn EmitSink>>> {
    Ok(match path {
        Some(p) => Some(Box::new(FileSink(BufWriter::new(File::create(p)?)))),
        None => None,
    })
}

fn control(c: &Common, cfg: &SystemConfig) -> Fallible<(Arc<ControlState>, Option<ControlServer>)> {
    let state = ControlState::new(cfg);
    let server = match c.control_port {
        Some(port) => {
            let s = ControlServer::bind(("127.0.0.1", port), state.clone())?;
            log::info!("control on {}", s.local_addr());
            Some(s)
        }
        None => None,
    };
    Ok((state, server))
}

fn finish(p: Pipeline) -> Fallible<()> {
    while !p.is_finished() {
        thread::sleep(Duration::from_millis(100));
    }
    let stat = p.control().stat_lines();
    p.join()?;
    for l in stat {
        log::info!("{l}");
    }
    Ok(())
}

fn bs(a: BsArgs) -> Fallible<()> {
    let (cfg, scenario) = load(&a.common)?;
    let (state, _server) = control(&a.common, &cfg)?;
    let mut opts = options(&a.common);
    opts.udp_in = a.udp_in;
    let mut extra = Vec::new();
    if let Some(addr) = a.tx_stream {
        let q = Arc::new(BoundedQueue::new(opts.queue_capacity, QueuePolicy::BlockProducer));
        let (local, _h) = serve_bursts(addr, q.clone())?;
        log::info!("waveform stream on {local}");
        extra.push(q);
    }
    let sinks = BsSinks { emit: file_sink(a.common.out.as_deref())?, tx_payload: None };
    finish(run_bs(&cfg, &scenario, &opts, state, sinks, extra)?)
}

fn ue(a: UeArgs) -> Fallible<()> {
    let (cfg, scenario) = load(&a.common)?;
    let (state, _server) = control(&a.common, &cfg)?;
    let mut opts = options(&a.common);
    opts.udp_out = a.udp_out;
    if a.comm_only {
        opts.bistatic_mode = CompensationMode::CommOnly;
    }
    let source = Arc::new(BoundedQueue::new(opts.queue_capacity, QueuePolicy::BlockProducer));
    let _link = receive_bursts(a.rx_stream, source.clone())?;
    let sinks = UeSinks { emit: file_sink(a.common.out.as_deref())?, ..Default::default() };
    finish(run_ue(&cfg, &scenario, &opts, state, sinks, source)?)
}

fn loopback(a: LoopArgs) -> Fallible<()> {
    let (cfg, scenario) = load(&a.common)?;
    let (state, _server) = control(&a.common, &cfg)?;
    let mut opts = options(&a.common);
    opts.udp_in = a.udp_in;
    opts.udp_out = a.udp_out;
    if a.comm_only {
        opts.bistatic_mode = CompensationMode::CommOnly;
    }
    let ue_out = a.ue_out.clone().or_else(|| {
        a.common.out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".ue");
            PathBuf::from(s)
        })
    });
    let bs_sinks = BsSinks { emit: file_sink(a.common.out.as_deref())?, tx_payload: None };
    let ue_sinks = UeSinks { emit: file_sink(ue_out.as_deref())?, ..Default::default() };
    let p = run_loopback(&cfg, &scenario, &opts, state, bs_sinks, ue_sinks)?;
    if let Some(addr) = p.udp_in_addr() {
        log::info!("udp ingress on {addr}");
    }
    finish(p)
}

fn oracle(scenario: &Path, config: Option<&Path>) -> Fallible<()> {
    let cfg = match config {
        Some(p) => load_config_file(p)?,
        None => SystemConfig::table2(),
    };
    let s = load_scenario_file(scenario, &cfg)?;
    let t = ground_truth(&s, &cfg);
    let ts = cfg.sample_period_s();
    let delay_bin = 1.0 / (cfg.periodogram_sizes.0 as f64 * cfg.subcarrier_spacing_hz());
    let doppler_bin = cfg.effective_prf_hz() / cfg.periodogram_sizes.1 as f64;
    println!("sample_period_s={ts:e}");
    println!("delay_bin_s={delay_bin:e}");
    println!("doppler_bin_hz={doppler_bin:.6}");
    for (link, paths) in [("mono", &t.mono_paths), ("ue", &t.ue_paths)] {
        for (i, p) in paths.iter().enumerate() {
            println!(
                "path link={link} index={i} kind={} gain_db={:.3} phase_deg={:.3} delay_ns={:.4} \
                 doppler_hz={:.4} delay_bin={:.4} doppler_bin={:.4}",
                p.kind.as_str(),
                20.0 * p.gain.norm().log10(),
                p.gain.arg().to_degrees(),
                p.delay_s * 1e9,
                p.doppler_hz,
                p.delay_s / delay_bin,
                p.doppler_hz / doppler_bin,
            );
        }
    }
    let c = &t.clocks;
    println!("timing_offset_samples={:.4}", c.timing_offset_s / ts);
    println!("cfo_hz={}", c.cfo_hz);
    println!("sio_s={:e}", c.sio_s);
    println!("sio_ppm={:.4}", c.sio_s / ts * 1e6);
    println!("drift_per_frame_samples={:.6}", t.sio_lag_samples(cfg.frame_len() as u64));
    for link in [Link::Mono, Link::Ue] {
        println!("noise_variance_{}={:e}", if link == Link::Mono { "mono" } else { "ue" }, s.noise_variance(link, &cfg));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Bs(a) => bs(a),
        Cmd::Ue(a) => ue(a),
        Cmd::Loopback(a) => loopback(a),
        Cmd::Oracle { scenario, config } => oracle(&scenario, config.as_deref()),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("openisac: {e}");
            ExitCode::FAILURE
        }
    }
}
