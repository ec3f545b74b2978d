//! Live control: shared parameter record read by the stages and a line-based TCP server.
//!
//! Requests: `SET <key> <value>`, `GET <key>`, `MODE <normal|bypass>`, `STAT`. Replies are
//! `OK`, `ERR <reason>` or `key=value` lines; `STAT` ends its listing with `END`.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;

use super::queue::QueueHandle;
use crate::cfg::SystemConfig;

pub const SETTABLE_KEYS: &[&str] = &["stride", "mti", "rel_threshold_db", "mu_default", "sync.threshold"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControlError {
    #[error("UnknownKey")]
    UnknownKey,
    #[error("ParseError")]
    ParseError,
    #[error("InvalidValue")]
    InvalidValue,
    #[error("UnknownCommand")]
    UnknownCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Set,
    Get,
    Mode,
    Stat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlCommand {
    pub verb: Verb,
    pub key: String,
    pub value: String,
}

impl ControlCommand {
    pub fn parse(line: &str) -> Result<Self, ControlError> {
        let mut it = line.split_whitespace();
        let verb = match it.next().map(str::to_ascii_uppercase).as_deref() {
            Some("SET") => Verb::Set,
            Some("GET") => Verb::Get,
            Some("MODE") => Verb::Mode,
            Some("STAT") => Verb::Stat,
            _ => return Err(ControlError::UnknownCommand),
        };
        let key = it.next().unwrap_or("").to_string();
        let value = it.next().unwrap_or("").to_string();
        let arity_ok = match verb {
            Verb::Set => !key.is_empty() && !value.is_empty(),
            Verb::Get | Verb::Mode => !key.is_empty() && value.is_empty(),
            Verb::Stat => key.is_empty(),
        };
        if !arity_ok || it.next().is_some() {
            return Err(ControlError::ParseError);
        }
        Ok(Self { verb, key, value })
    }
}

#[derive(Debug, Default)]
struct AtomicF64(AtomicU64);

impl AtomicF64 {
    fn new(v: f64) -> Self {
        Self(AtomicU64::new(v.to_bits()))
    }

    fn load(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Acquire))
    }

    fn store(&self, v: f64) {
        self.0.store(v.to_bits(), Ordering::Release)
    }
}

fn parse_bool(v: &str) -> Result<bool, ControlError> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "on" | "true" => Ok(true),
        "0" | "off" | "false" => Ok(false),
        _ => Err(ControlError::ParseError),
    }
}

fn parse_real(v: &str) -> Result<f64, ControlError> {
    let x: f64 = v.parse().map_err(|_| ControlError::ParseError)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ControlError::InvalidValue)
    }
}

/// Parameters the stages poll once per frame, plus the status record `STAT` reports.
pub struct ControlState {
    stride: AtomicUsize,
    mti: AtomicBool,
    rel_threshold_db: AtomicF64,
    mu_default: AtomicF64,
    sync_threshold: AtomicF64,
    bypass: AtomicBool,
    status: RwLock<BTreeMap<String, String>>,
    queues: RwLock<Vec<(String, Arc<dyn QueueHandle>)>>,
}

impl ControlState {
    pub fn new(cfg: &SystemConfig) -> Arc<Self> {
        Arc::new(Self {
            stride: AtomicUsize::new(cfg.stride),
            mti: AtomicBool::new(true),
            rel_threshold_db: AtomicF64::new(20.0),
            mu_default: AtomicF64::new(cfg.tracker.mu_default),
            sync_threshold: AtomicF64::new(cfg.sync_threshold),
            bypass: AtomicBool::new(false),
            status: RwLock::new(BTreeMap::new()),
            queues: RwLock::new(Vec::new()),
        })
    }

    pub fn stride(&self) -> usize {
        self.stride.load(Ordering::Acquire)
    }

    pub fn mti(&self) -> bool {
        self.mti.load(Ordering::Acquire)
    }

    pub fn rel_threshold_db(&self) -> f64 {
        self.rel_threshold_db.load()
    }

    pub fn mu_default(&self) -> f64 {
        self.mu_default.load()
    }

    pub fn sync_threshold(&self) -> f64 {
        self.sync_threshold.load()
    }

    pub fn bypass(&self) -> bool {
        self.bypass.load(Ordering::Acquire)
    }

    pub fn set_bypass(&self, on: bool) {
        self.bypass.store(on, Ordering::Release)
    }

    pub fn set(&self, key: &str, value: &str) -> Result<(), ControlError> {
        match key {
            "stride" => {
                let s: usize = value.parse().map_err(|_| ControlError::ParseError)?;
                if s == 0 {
                    return Err(ControlError::InvalidValue);
                }
                self.stride.store(s, Ordering::Release);
            }
            "mti" => self.mti.store(parse_bool(value)?, Ordering::Release),
            "rel_threshold_db" => self.rel_threshold_db.store(parse_real(value)?),
            "mu_default" => {
                let mu = parse_real(value)?;
                if !(0.0..=1.0).contains(&mu) {
                    return Err(ControlError::InvalidValue);
                }
                self.mu_default.store(mu);
            }
            "sync.threshold" => {
                let t = parse_real(value)?;
                if !(0.0..=1.0).contains(&t) {
                    return Err(ControlError::InvalidValue);
                }
                self.sync_threshold.store(t);
            }
            _ => return Err(ControlError::UnknownKey),
        }
        log::info!("control: {key} = {value}");
        Ok(())
    }

    /// Settable parameters, then the `mode`, then anything a stage has published.
    pub fn get(&self, key: &str) -> Result<String, ControlError> {
        let v = match key {
            "stride" => self.stride().to_string(),
            "mti" => if self.mti() { "on" } else { "off" }.to_string(),
            "rel_threshold_db" => self.rel_threshold_db().to_string(),
            "mu_default" => self.mu_default().to_string(),
            "sync.threshold" => self.sync_threshold().to_string(),
            "mode" => if self.bypass() { "bypass" } else { "normal" }.to_string(),
            _ => self
                .status
                .read()
                .unwrap()
                .get(key)
                .cloned()
                .ok_or(ControlError::UnknownKey)?,
        };
        Ok(v)
    }

    pub fn publish(&self, key: &str, value: impl ToString) {
        self.status.write().unwrap().insert(key.to_string(), value.to_string());
    }

    pub fn publish_all<I, K, V>(&self, entries: I)
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: ToString,
    {
        let mut g = self.status.write().unwrap();
        for (k, v) in entries {
            g.insert(k.into(), v.to_string());
        }
    }

    /// Adds a FIFO to the `STAT` listing.
    pub fn register_queue(&self, name: &str, q: Arc<dyn QueueHandle>) {
        self.queues.write().unwrap().push((name.to_string(), q));
    }

    pub fn stat_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = SETTABLE_KEYS
            .iter()
            .chain(&["mode"])
            .map(|k| format!("{k}={}", self.get(k).unwrap()))
            .collect();
        for (name, q) in self.queues.read().unwrap().iter() {
            let st = q.stats();
            lines.push(format!("queue.{name}.depth={}", st.depth));
            lines.push(format!("queue.{name}.capacity={}", st.capacity));
            lines.push(format!("queue.{name}.max_depth={}", st.max_depth));
            lines.push(format!("queue.{name}.dropped={}", st.dropped));
        }
        lines.extend(self.status.read().unwrap().iter().map(|(k, v)| format!("{k}={v}")));
        lines
    }

    pub fn execute(&self, cmd: &ControlCommand) -> Vec<String> {
        let r = match cmd.verb {
            Verb::Set => self.set(&cmd.key, &cmd.value).map(|_| vec!["OK".to_string()]),
            Verb::Get => self.get(&cmd.key).map(|v| vec![format!("{}={v}", cmd.key)]),
            Verb::Mode => match cmd.key.to_ascii_lowercase().as_str() {
                "normal" => Ok(false),
                "bypass" => Ok(true),
                _ => Err(ControlError::ParseError),
            }
            .map(|on| {
                self.set_bypass(on);
                vec!["OK".to_string()]
            }),
            Verb::Stat => {
                let mut l = self.stat_lines();
                l.push("END".to_string());
                Ok(l)
            }
        };
        r.unwrap_or_else(|e| vec![format!("ERR {e}")])
    }

    /// Reply lines for one request line.
    pub fn handle_line(&self, line: &str) -> Vec<String> {
        match ControlCommand::parse(line) {
            Ok(cmd) => self.execute(&cmd),
            Err(e) => vec![format!("ERR {e}")],
        }
    }
}

fn serve_client(stream: TcpStream, state: Arc<ControlState>) -> io::Result<()> {
    let mut out = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut reply = state.handle_line(&line).join("\n");
        reply.push('\n');
        out.write_all(reply.as_bytes())?;
    }
    Ok(())
}

/// Accept loop on its own thread; one thread per connected client.
pub struct ControlServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl ControlServer {
    pub fn bind(addr: impl ToSocketAddrs, state: Arc<ControlState>) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = thread::Builder::new().name("control".into()).spawn(move || {
            while !flag.load(Ordering::Acquire) {
                match listener.accept() {
                    Ok((s, peer)) => {
                        let st = state.clone();
                        let _ = s.set_nonblocking(false);
                        thread::spawn(move || {
                            if let Err(e) = serve_client(s, st) {
                                log::debug!("control client {peer}: {e}");
                            }
                        });
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                        thread::sleep(Duration::from_millis(20))
                    }
                    Err(e) => {
                        log::warn!("control accept: {e}");
                        thread::sleep(Duration::from_millis(20))
                    }
                }
            }
        })?;
        Ok(Self { addr, stop, handle: Some(handle) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ControlServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Minimal blocking client, used by tests and the CLI.
pub struct ControlClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl ControlClient {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let s = TcpStream::connect(addr)?;
        s.set_read_timeout(Some(Duration::from_secs(5)))?;
        Ok(Self { reader: BufReader::new(s.try_clone()?), writer: s })
    }

    /// Sends one request and collects its reply lines.
    pub fn request(&mut self, line: &str) -> io::Result<Vec<String>> {
        self.writer.write_all(format!("{line}\n").as_bytes())?;
        let multi = line.trim().eq_ignore_ascii_case("STAT");
        let mut out = Vec::new();
        loop {
            let mut l = String::new();
            if self.reader.read_line(&mut l)? == 0 {
                return Err(io::ErrorKind::UnexpectedEof.into());
            }
            let l = l.trim_end().to_string();
            if multi && l == "END" {
                return Ok(out);
            }
            let last = !multi || l.starts_with("ERR ");
            out.push(l);
            if last {
                return Ok(out);
            }
        }
    }
}
