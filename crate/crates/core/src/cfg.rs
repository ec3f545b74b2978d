//! System configuration, derived waveform constants and the frame plan.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dsp::gcd;
use crate::mono::mti::SosCascade;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config document does not parse: {0}")]
    Parse(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreqCorrectionMode {
    /// Residual CFO is removed by a digital NCO at the receiver.
    DigitalRetune,
    /// Residual CFO trims the (simulated) reference oscillator.
    ReferenceClock,
}

impl FreqCorrectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DigitalRetune => "digital_retune",
            Self::ReferenceClock => "reference_clock",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftParams {
    pub window_len: usize,
    pub hop: usize,
    pub dft_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerGains {
    pub mu_default: f64,
    pub mu_boost: f64,
    pub error_threshold_samples: f64,
    pub escalation_frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockParams {
    /// Consecutive frames with |timing correction| above CP/2 before lock is dropped.
    pub timing_frames: usize,
    /// SNR floor in dB.
    pub snr_db: f64,
    /// Consecutive frames below the SNR floor before lock is dropped.
    pub snr_frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub num_subcarriers: usize,
    pub cp_len: usize,
    pub symbols_per_frame: usize,
    pub sync_symbol_index: usize,
    pub pilot_spacing: usize,
    pub pilot_offset: usize,
    pub pilot_indices: Vec<usize>,
    pub null_subcarriers: Vec<usize>,
    pub zc_root: u64,
    pub sensing_symbols: usize,
    pub stride: usize,
    pub periodogram_sizes: (usize, usize),
    pub stft: StftParams,
    pub sio_window_frames: usize,
    pub n_lag: usize,
    pub tx_power: f64,
    pub mti_sos: SosCascade,
    pub mti_sos_path: Option<PathBuf>,
    pub tracker: TrackerGains,
    pub sync_threshold: f64,
    pub freq_mode: FreqCorrectionMode,
    /// First-order loop gain used when trimming the reference clock.
    pub freq_trim_gain: f64,
    pub lock: LockParams,
}

pub fn pilot_set(n: usize, spacing: usize, offset: usize) -> Vec<usize> {
    if spacing == 0 {
        return Vec::new();
    }
    (offset..n).step_by(spacing).collect()
}

impl SystemConfig {
    /// Experimental parameter set used throughout the test-suite (N=1024, B=50 MHz).
    pub fn table2() -> Self {
        Self::with_waveform(1024, 128, 100, 50e6, 3.1e9)
    }

    /// Fills every non-waveform field with its default.
    pub fn with_waveform(n: usize, cp: usize, m: usize, bandwidth_hz: f64, fc_hz: f64) -> Self {
        Self {
            carrier_freq_hz: fc_hz,
            bandwidth_hz,
            num_subcarriers: n,
            cp_len: cp,
            symbols_per_frame: m,
            sync_symbol_index: 0,
            pilot_spacing: 8,
            pilot_offset: 0,
            pilot_indices: pilot_set(n, 8, 0),
            null_subcarriers: Vec::new(),
            zc_root: 29,
            sensing_symbols: 100,
            stride: 20,
            periodogram_sizes: (n, 128),
            stft: StftParams {
                window_len: 256,
                hop: 64,
                dft_size: 256,
            },
            sio_window_frames: 100,
            n_lag: cp / 4,
            tx_power: 1.0,
            mti_sos: SosCascade::default_highpass(),
            mti_sos_path: None,
            tracker: TrackerGains {
                mu_default: 1e-5,
                mu_boost: 1e-2,
                error_threshold_samples: 0.1,
                escalation_frames: 50,
            },
            sync_threshold: 0.25,
            freq_mode: FreqCorrectionMode::DigitalRetune,
            freq_trim_gain: 0.05,
            lock: LockParams {
                timing_frames: 3,
                snr_db: 0.0,
                snr_frames: 10,
            },
        }
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.num_subcarriers as f64
    }

    pub fn sample_period_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// Samples per OFDM symbol including the CP.
    pub fn symbol_len(&self) -> usize {
        self.num_subcarriers + self.cp_len
    }

    pub fn symbol_duration_s(&self) -> f64 {
        self.symbol_len() as f64 * self.sample_period_s()
    }

    /// Samples per frame.
    pub fn frame_len(&self) -> usize {
        self.symbols_per_frame * self.symbol_len()
    }

    pub fn frame_duration_s(&self) -> f64 {
        self.symbols_per_frame as f64 * self.symbol_duration_s()
    }

    pub fn cp_duration_s(&self) -> f64 {
        self.cp_len as f64 * self.sample_period_s()
    }

    /// Slow-time sampling rate after stride downsampling.
    pub fn effective_prf_hz(&self) -> f64 {
        1.0 / (self.stride as f64 * self.symbol_duration_s())
    }

    /// Cell amplitude that meets the per-cell power normalization.
    pub fn cell_amplitude(&self) -> f64 {
        (self.tx_power / self.num_subcarriers as f64).sqrt()
    }

    pub fn frame_plan(&self) -> FramePlan {
        FramePlan::new(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |msg: String| Err(ConfigError::InvariantViolation(msg));
        let n = self.num_subcarriers;
        if n < 2 {
            return inv("N >= 2".into());
        }
        if self.cp_len > n {
            return inv("N_CP <= N".into());
        }
        if self.symbols_per_frame < 2 {
            return inv("M >= 2".into());
        }
        if self.sync_symbol_index >= self.symbols_per_frame {
            return inv(format!(
                "0 <= m_sync < M (m_sync={}, M={})",
                self.sync_symbol_index, self.symbols_per_frame
            ));
        }
        if !(self.bandwidth_hz > 0.0) || !self.bandwidth_hz.is_finite() {
            return inv("bandwidth > 0".into());
        }
        if !(self.carrier_freq_hz > 0.0) || !self.carrier_freq_hz.is_finite() {
            return inv("carrier frequency > 0".into());
        }
        if !(self.tx_power > 0.0) {
            return inv("tx power > 0".into());
        }
        if self.pilot_indices.len() < 2 {
            return inv(format!("|pilots| >= 2 (got {})", self.pilot_indices.len()));
        }
        if self.pilot_indices.iter().any(|&p| p >= n) {
            return inv("pilot indices within 0..N".into());
        }
        if self.pilot_indices.windows(2).any(|w| w[0] >= w[1]) {
            return inv("pilot indices strictly ascending".into());
        }
        if self.null_subcarriers.iter().any(|&p| p >= n) {
            return inv("null subcarriers within 0..N".into());
        }
        if self
            .null_subcarriers
            .iter()
            .any(|k| self.pilot_indices.binary_search(k).is_ok())
        {
            return inv("null subcarriers disjoint from pilots".into());
        }
        if self.zc_root == 0 || gcd(self.zc_root, n as u64) != 1 {
            return inv(format!("gcd(q, N) = 1 (q={}, N={})", self.zc_root, n));
        }
        if self.sensing_symbols < 1 {
            return inv("M_s >= 1".into());
        }
        if self.stride < 1 {
            return inv("M_D >= 1".into());
        }
        let (nper, mper) = self.periodogram_sizes;
        if nper < n {
            return inv(format!("N_Per >= N (N_Per={nper}, N={n})"));
        }
        if mper < self.sensing_symbols {
            return inv(format!(
                "M_Per >= M_s (M_Per={mper}, M_s={})",
                self.sensing_symbols
            ));
        }
        if self.stft.window_len < 1 || self.stft.hop < 1 {
            return inv("STFT window and hop >= 1".into());
        }
        if self.stft.dft_size < self.stft.window_len {
            return inv(format!(
                "M_md >= M_w (M_md={}, M_w={})",
                self.stft.dft_size, self.stft.window_len
            ));
        }
        if self.sio_window_frames < 2 {
            return inv("SIO window >= 2 frames".into());
        }
        if self.n_lag >= n {
            return inv("N_lag < N".into());
        }
        if !(self.sync_threshold > 0.0 && self.sync_threshold <= 1.0) {
            return inv("sync threshold in (0, 1]".into());
        }
        let t = &self.tracker;
        if !(t.mu_default > 0.0 && t.mu_default <= 1.0 && t.mu_boost > 0.0 && t.mu_boost <= 1.0)
        {
            return inv("tracker gains in (0, 1]".into());
        }
        if !(t.error_threshold_samples > 0.0) || t.escalation_frames < 1 {
            return inv("tracker error threshold > 0 and escalation frames >= 1".into());
        }
        if !(self.freq_trim_gain > 0.0 && self.freq_trim_gain <= 1.0) {
            return inv("trim gain in (0, 1]".into());
        }
        self.mti_sos
            .validate()
            .map_err(|e| ConfigError::InvariantViolation(format!("MTI filter stable: {e}")))?;
        Ok(())
    }

    /// Emits a document that reloads to an identical config.
    pub fn to_document(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[waveform]");
        let _ = writeln!(s, "n = {}", self.num_subcarriers);
        let _ = writeln!(s, "cp = {}", self.cp_len);
        let _ = writeln!(s, "m = {}", self.symbols_per_frame);
        let _ = writeln!(s, "bandwidth_hz = {:?}", self.bandwidth_hz);
        let _ = writeln!(s, "fc_hz = {:?}", self.carrier_freq_hz);
        let _ = writeln!(s, "tx_power = {:?}", self.tx_power);
        let _ = writeln!(s, "\n[frame]");
        let _ = writeln!(s, "sync_index = {}", self.sync_symbol_index);
        let _ = writeln!(s, "pilot_spacing = {}", self.pilot_spacing);
        let _ = writeln!(s, "pilot_offset = {}", self.pilot_offset);
        let _ = writeln!(s, "zc_root = {}", self.zc_root);
        let _ = writeln!(s, "null_subcarriers = {:?}", self.null_subcarriers);
        let _ = writeln!(s, "\n[sense]");
        let _ = writeln!(s, "ms = {}", self.sensing_symbols);
        let _ = writeln!(s, "stride = {}", self.stride);
        let _ = writeln!(s, "nper = {}", self.periodogram_sizes.0);
        let _ = writeln!(s, "mper = {}", self.periodogram_sizes.1);
        let _ = writeln!(s, "\n[stft]");
        let _ = writeln!(s, "win = {}", self.stft.window_len);
        let _ = writeln!(s, "hop = {}", self.stft.hop);
        let _ = writeln!(s, "nfft = {}", self.stft.dft_size);
        let _ = writeln!(s, "\n[sync]");
        let _ = writeln!(s, "nlag = {}", self.n_lag);
        let _ = writeln!(s, "threshold = {:?}", self.sync_threshold);
        let _ = writeln!(s, "gamma_w = {}", self.sio_window_frames);
        let _ = writeln!(s, "mu_default = {:?}", self.tracker.mu_default);
        let _ = writeln!(s, "mu_boost = {:?}", self.tracker.mu_boost);
        let _ = writeln!(s, "err_thresh = {:?}", self.tracker.error_threshold_samples);
        let _ = writeln!(s, "escalation_frames = {}", self.tracker.escalation_frames);
        let _ = writeln!(s, "freq_mode = \"{}\"", self.freq_mode.as_str());
        let _ = writeln!(s, "trim_gain = {:?}", self.freq_trim_gain);
        let _ = writeln!(s, "\n[lock]");
        let _ = writeln!(s, "timing_frames = {}", self.lock.timing_frames);
        let _ = writeln!(s, "snr_db = {:?}", self.lock.snr_db);
        let _ = writeln!(s, "snr_frames = {}", self.lock.snr_frames);
        if let Some(p) = &self.mti_sos_path {
            let _ = writeln!(s, "\n[mti]");
            let _ = writeln!(s, "sos = {:?}", p.display().to_string());
        }
        s
    }
}

const KNOWN_KEYS: &[&str] = &[
    "waveform.n",
    "waveform.cp",
    "waveform.m",
    "waveform.bandwidth_hz",
    "waveform.fc_hz",
    "waveform.tx_power",
    "frame.sync_index",
    "frame.pilot_spacing",
    "frame.pilot_offset",
    "frame.zc_root",
    "frame.null_subcarriers",
    "sense.ms",
    "sense.stride",
    "sense.nper",
    "sense.mper",
    "stft.win",
    "stft.hop",
    "stft.nfft",
    "sync.nlag",
    "sync.threshold",
    "sync.gamma_w",
    "sync.mu_default",
    "sync.mu_boost",
    "sync.err_thresh",
    "sync.escalation_frames",
    "sync.freq_mode",
    "sync.trim_gain",
    "lock.timing_frames",
    "lock.snr_db",
    "lock.snr_frames",
    "mti.sos",
];

/// Flattens nested tables into dotted keys.
pub(crate) fn flatten(
    prefix: &str,
    table: &toml::Table,
    out: &mut BTreeMap<String, toml::Value>,
) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

pub(crate) struct KeyMap {
    map: BTreeMap<String, toml::Value>,
}

impl KeyMap {
    pub(crate) fn new(map: BTreeMap<String, toml::Value>) -> Self {
        Self { map }
    }

    pub(crate) fn get(&self, key: &str) -> Option<&toml::Value> {
        self.map.get(key)
    }

    fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::InvalidValue {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn uint(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(v) => Err(Self::invalid(key, format!("expected non-negative integer, got {v}"))),
        }
    }

    pub(crate) fn real(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(toml::Value::Float(f)) if f.is_finite() => Ok(Some(*f)),
            Some(v) => Err(Self::invalid(key, format!("expected finite number, got {v}"))),
        }
    }

    pub(crate) fn string(&self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(Self::invalid(key, format!("expected string, got {v}"))),
        }
    }

    fn uint_list(&self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    other => Err(Self::invalid(key, format!("expected integer entry, got {other}"))),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(v) => Err(Self::invalid(key, format!("expected array, got {v}"))),
        }
    }

    fn required_uint(&self, key: &str) -> Result<usize, ConfigError> {
        self.uint(key)?
            .ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    fn required_real(&self, key: &str) -> Result<f64, ConfigError> {
        self.real(key)?
            .ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }
}

pub(crate) fn parse_document(text: &str) -> Result<BTreeMap<String, toml::Value>, ConfigError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let mut map = BTreeMap::new();
    flatten("", &table, &mut map);
    Ok(map)
}

/// Parses a config document; a relative `mti.sos` path resolves against the working directory.
pub fn load_config(text: &str) -> Result<SystemConfig, ConfigError> {
    load_config_in(text, None)
}

/// Reads a config file; a relative `mti.sos` path resolves against the file's directory.
pub fn load_config_file(path: &Path) -> Result<SystemConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    load_config_in(&text, path.parent())
}

pub fn load_config_in(text: &str, base_dir: Option<&Path>) -> Result<SystemConfig, ConfigError> {
    let map = parse_document(text)?;
    if let Some(k) = map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(ConfigError::UnknownKey(k.clone()));
    }
    let km = KeyMap::new(map);

    let n = km.required_uint("waveform.n")?;
    let cp = km.required_uint("waveform.cp")?;
    let m = km.required_uint("waveform.m")?;
    let b = km.required_real("waveform.bandwidth_hz")?;
    let fc = km.required_real("waveform.fc_hz")?;
    let mut c = SystemConfig::with_waveform(n, cp, m, b, fc);

    if let Some(v) = km.real("waveform.tx_power")? {
        c.tx_power = v;
    }
    if let Some(v) = km.uint("frame.sync_index")? {
        c.sync_symbol_index = v;
    }
    if let Some(v) = km.uint("frame.pilot_spacing")? {
        if v == 0 {
            return Err(KeyMap::invalid("frame.pilot_spacing", "must be >= 1"));
        }
        c.pilot_spacing = v;
    }
    if let Some(v) = km.uint("frame.pilot_offset")? {
        c.pilot_offset = v;
    }
    c.pilot_indices = pilot_set(n, c.pilot_spacing, c.pilot_offset);
    if let Some(v) = km.uint("frame.zc_root")? {
        c.zc_root = v as u64;
    }
    if let Some(mut v) = km.uint_list("frame.null_subcarriers")? {
        v.sort_unstable();
        v.dedup();
        c.null_subcarriers = v;
    }
    if let Some(v) = km.uint("sense.ms")? {
        c.sensing_symbols = v;
    }
    if let Some(v) = km.uint("sense.stride")? {
        c.stride = v;
    }
    if let Some(v) = km.uint("sense.nper")? {
        c.periodogram_sizes.0 = v;
    }
    if let Some(v) = km.uint("sense.mper")? {
        c.periodogram_sizes.1 = v;
    }
    if let Some(v) = km.uint("stft.win")? {
        c.stft.window_len = v;
        c.stft.dft_size = v;
    }
    if let Some(v) = km.uint("stft.hop")? {
        c.stft.hop = v;
    }
    if let Some(v) = km.uint("stft.nfft")? {
        c.stft.dft_size = v;
    }
    if let Some(v) = km.uint("sync.nlag")? {
        c.n_lag = v;
    }
    if let Some(v) = km.real("sync.threshold")? {
        c.sync_threshold = v;
    }
    if let Some(v) = km.uint("sync.gamma_w")? {
        c.sio_window_frames = v;
    }
    if let Some(v) = km.real("sync.mu_default")? {
        c.tracker.mu_default = v;
    }
    if let Some(v) = km.real("sync.mu_boost")? {
        c.tracker.mu_boost = v;
    }
    if let Some(v) = km.real("sync.err_thresh")? {
        c.tracker.error_threshold_samples = v;
    }
    if let Some(v) = km.uint("sync.escalation_frames")? {
        c.tracker.escalation_frames = v;
    }
    if let Some(v) = km.string("sync.freq_mode")? {
        c.freq_mode = match v.as_str() {
            "digital_retune" => FreqCorrectionMode::DigitalRetune,
            "reference_clock" => FreqCorrectionMode::ReferenceClock,
            other => {
                return Err(KeyMap::invalid(
                    "sync.freq_mode",
                    format!("`{other}` is not digital_retune or reference_clock"),
                ))
            }
        };
    }
    if let Some(v) = km.real("sync.trim_gain")? {
        c.freq_trim_gain = v;
    }
    if let Some(v) = km.uint("lock.timing_frames")? {
        c.lock.timing_frames = v;
    }
    if let Some(v) = km.real("lock.snr_db")? {
        c.lock.snr_db = v;
    }
    if let Some(v) = km.uint("lock.snr_frames")? {
        c.lock.snr_frames = v;
    }
    if let Some(p) = km.string("mti.sos")? {
        let mut path = PathBuf::from(&p);
        if path.is_relative() {
            if let Some(base) = base_dir {
                path = base.join(path);
            }
        }
        let text = std::fs::read_to_string(&path).map_err(|e| {
            KeyMap::invalid("mti.sos", format!("cannot read {}: {e}", path.display()))
        })?;
        c.mti_sos = SosCascade::parse(&text)
            .map_err(|e| KeyMap::invalid("mti.sos", e.to_string()))?;
        c.mti_sos_path = Some(path);
    }
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Sync,
    Pilot,
    Data,
    /// Unused guard subcarrier, transmitted as zero.
    Null,
}

/// Which grid cell carries sync, pilot or data.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePlan {
    pub num_subcarriers: usize,
    pub symbols_per_frame: usize,
    pub sync_symbol_index: usize,
    subcarrier_kind: Vec<CellKind>,
    /// Subcarriers carrying data on non-sync symbols, ascending.
    pub data_subcarriers: Vec<usize>,
    pub pilot_subcarriers: Vec<usize>,
    /// Symbol indices other than the sync symbol, ascending.
    pub data_symbols: Vec<usize>,
}

impl FramePlan {
    pub fn new(cfg: &SystemConfig) -> Self {
        let n = cfg.num_subcarriers;
        let mut kind = vec![CellKind::Data; n];
        for &p in &cfg.pilot_indices {
            kind[p] = CellKind::Pilot;
        }
        for &z in &cfg.null_subcarriers {
            kind[z] = CellKind::Null;
        }
        let data_subcarriers = (0..n).filter(|&i| kind[i] == CellKind::Data).collect();
        let data_symbols = (0..cfg.symbols_per_frame)
            .filter(|&m| m != cfg.sync_symbol_index)
            .collect();
        Self {
            num_subcarriers: n,
            symbols_per_frame: cfg.symbols_per_frame,
            sync_symbol_index: cfg.sync_symbol_index,
            subcarrier_kind: kind,
            data_subcarriers,
            pilot_subcarriers: cfg.pilot_indices.clone(),
            data_symbols,
        }
    }

    /// Null subcarriers stay empty in every symbol, the sync symbol included.
    pub fn cell_kind(&self, n: usize, m: usize) -> CellKind {
        match self.subcarrier_kind[n] {
            CellKind::Null => CellKind::Null,
            _ if m == self.sync_symbol_index => CellKind::Sync,
            k => k,
        }
    }

    pub fn data_cells_per_frame(&self) -> usize {
        self.data_symbols.len() * self.data_subcarriers.len()
    }

    /// DATA cells in fill order: symbol ascending, then subcarrier ascending.
    pub fn data_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data_symbols
            .iter()
            .flat_map(move |&m| self.data_subcarriers.iter().map(move |&n| (n, m)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TABLE2: &str = r#"
[waveform]
n = 1024
cp = 128
m = 100
bandwidth_hz = 50e6
fc_hz = 3.1e9

[sense]
ms = 100
stride = 20

[stft]
win = 256
hop = 64
"#;

    #[test]
    fn table2_document_loads() {
        let c = load_config(TABLE2).unwrap();
        assert_eq!(c, SystemConfig::table2());
        assert_eq!(c.symbol_len(), 1152);
        assert_eq!(c.frame_len(), 115_200);
        assert!((c.subcarrier_spacing_hz() - 48_828.125).abs() < 1e-9);
        assert!((c.symbol_duration_s() - 23.04e-6).abs() < 1e-15);
        assert!((c.frame_duration_s() - 2.304e-3).abs() < 1e-12);
    }

    #[test]
    fn non_coprime_root_rejected() {
        let doc = format!("{TABLE2}\n[frame]\nzc_root = 2\n");
        match load_config(&doc) {
            Err(ConfigError::InvariantViolation(msg)) => assert!(msg.contains("gcd")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_periodogram_rejected() {
        let doc = r#"
waveform.n = 256
waveform.cp = 32
waveform.m = 100
waveform.bandwidth_hz = 10e6
waveform.fc_hz = 3.1e9
sense.mper = 64
sense.ms = 100
"#;
        match load_config(doc) {
            Err(ConfigError::InvariantViolation(msg)) => assert!(msg.contains("M_Per")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_missing_and_invalid_keys() {
        let doc = format!("{TABLE2}\n[sync]\nbogus = 1\n");
        assert_eq!(
            load_config(&doc),
            Err(ConfigError::UnknownKey("sync.bogus".into()))
        );
        let doc = "waveform.n = 64\nwaveform.cp = 16\nwaveform.m = 10\nwaveform.fc_hz = 1e9\n";
        assert_eq!(
            load_config(doc),
            Err(ConfigError::MissingKey("waveform.bandwidth_hz".into()))
        );
        let doc = format!("{TABLE2}\n[sync]\nthreshold = \"high\"\n");
        match load_config(&doc) {
            Err(ConfigError::InvalidValue { key, .. }) => assert_eq!(key, "sync.threshold"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_config("waveform = ["), Err(ConfigError::Parse(_))));
    }

    fn fig3() -> SystemConfig {
        let mut c = SystemConfig::with_waveform(32, 8, 14, 1e6, 1e9);
        c.sync_symbol_index = 2;
        c.pilot_spacing = 4;
        c.pilot_indices = pilot_set(32, 4, 0);
        c.zc_root = 1;
        c.sensing_symbols = 14;
        c.periodogram_sizes = (32, 16);
        c.n_lag = 2;
        c.validate().unwrap();
        c
    }

    #[test]
    fn fig3_plan_counts() {
        let c = fig3();
        let p = c.frame_plan();
        let mut sync = 0;
        let mut per_symbol_pilots = vec![0; 14];
        let mut data = 0;
        for m in 0..14 {
            for n in 0..32 {
                match p.cell_kind(n, m) {
                    CellKind::Sync => sync += 1,
                    CellKind::Pilot => per_symbol_pilots[m] += 1,
                    CellKind::Data => data += 1,
                    CellKind::Null => unreachable!(),
                }
            }
        }
        assert_eq!(sync, 32);
        assert!(sync == 32 && (0..32).all(|n| p.cell_kind(n, 2) == CellKind::Sync));
        for (m, &k) in per_symbol_pilots.iter().enumerate() {
            assert_eq!(k, if m == 2 { 0 } else { 8 });
        }
        assert_eq!(data, 312);
        assert_eq!(p.data_cells_per_frame(), 312);
        assert_eq!(p.data_cells().next(), Some((1, 0)));
    }

    #[test]
    fn too_few_pilots_rejected() {
        let mut c = fig3();
        c.pilot_indices = vec![0];
        assert!(matches!(c.validate(), Err(ConfigError::InvariantViolation(_))));
    }

    #[test]
    fn emitted_document_round_trips() {
        let mut c = fig3();
        c.null_subcarriers = vec![3, 5];
        c.freq_mode = FreqCorrectionMode::ReferenceClock;
        c.tracker.mu_boost = 0.02;
        let back = load_config(&c.to_document()).unwrap();
        assert_eq!(back, c);
    }

    proptest! {
        #[test]
        fn plan_partitions_grid(
            n in 8usize..96,
            m in 2usize..20,
            spacing in 1usize..8,
            sync_frac in 0.0f64..1.0,
        ) {
            let mut c = SystemConfig::with_waveform(n, n / 4, m, 1e6, 1e9);
            c.sync_symbol_index = ((m as f64) * sync_frac) as usize % m;
            c.pilot_spacing = spacing;
            c.pilot_indices = pilot_set(n, spacing, 0);
            prop_assume!(c.pilot_indices.len() >= 2);
            let p = c.frame_plan();
            let mut counts = std::collections::HashMap::new();
            for mm in 0..m {
                for nn in 0..n {
                    *counts.entry(p.cell_kind(nn, mm)).or_insert(0usize) += 1;
                }
            }
            let total: usize = counts.values().sum();
            prop_assert_eq!(total, n * m);
            prop_assert_eq!(counts.get(&CellKind::Sync).copied().unwrap_or(0), n);
            prop_assert_eq!(
                counts.get(&CellKind::Data).copied().unwrap_or(0),
                (m - 1) * (n - c.pilot_indices.len())
            );
            prop_assert_eq!(p.data_cells().count(), p.data_cells_per_frame());
        }
    }
}
