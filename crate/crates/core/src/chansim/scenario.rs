//! Scenario documents.
//!
//! ```toml
//! [scenario]
//! seed = 7
//! snr_db = 20.0            # or noise_psd = 1e-20
//! clutter_doppler_max_hz = 2.0
//! strict_cp = false
//!
//! [scenario.clocks]
//! timing_offset_ns = 120.0
//! cfo_hz = 500.0
//! sio_s = 2e-14
//! drift = "constant"       # or "linear_ramp" with sio_rate (s/s per s)
//!
//! [[scenario.path]]
//! link = "ue"              # "ue" or "mono"
//! kind = "los"             # "los", "clutter" or "target"
//! gain_db = 0.0
//! phase_deg = 0.0          # drawn from the seed when absent
//! delay_ns = 0.0
//! doppler_hz = 0.0
//! ```
//!
//! A `target` path may instead give `rcs_m2`, `range_m` and `velocity_mps`.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    target_params, ChanError, ChannelScenario, ClockImpairments, DriftModel, NoiseSpec, PathKind,
    PathSpec,
};
use crate::cfg::{ConfigError, KeyMap, SystemConfig};
use crate::dsp::Cf;

const SCENARIO_KEYS: &[&str] = &[
    "seed",
    "snr_db",
    "noise_psd",
    "clutter_doppler_max_hz",
    "strict_cp",
    "clocks.timing_offset_ns",
    "clocks.cfo_hz",
    "clocks.sio_s",
    "clocks.drift",
    "clocks.sio_rate",
];

const PATH_KEYS: &[&str] = &[
    "link",
    "kind",
    "gain_db",
    "phase_deg",
    "delay_ns",
    "doppler_hz",
    "rcs_m2",
    "range_m",
    "velocity_mps",
];

fn invalid(key: &str, reason: impl Into<String>) -> ChanError {
    ChanError::Config(ConfigError::InvalidValue {
        key: key.to_string(),
        reason: reason.into(),
    })
}

fn keymap(table: &toml::Table, prefix: &str, allowed: &[&str]) -> Result<KeyMap, ChanError> {
    let mut flat = std::collections::BTreeMap::new();
    for (k, v) in table {
        if k == "path" && prefix == "scenario" {
            continue;
        }
        match v {
            toml::Value::Table(t) => crate::cfg::flatten(k, t, &mut flat),
            other => {
                flat.insert(k.clone(), other.clone());
            }
        }
    }
    if let Some(k) = flat.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(ChanError::Config(ConfigError::UnknownKey(format!("{prefix}.{k}"))));
    }
    Ok(KeyMap::new(flat))
}

pub fn load_scenario(text: &str, cfg: &SystemConfig) -> Result<ChannelScenario, ChanError> {
    let doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ChanError::Config(ConfigError::Parse(e.to_string())))?;
    if let Some(k) = doc.keys().find(|k| k.as_str() != "scenario") {
        return Err(ChanError::Config(ConfigError::UnknownKey(k.clone())));
    }
    let root = match doc.get("scenario") {
        Some(toml::Value::Table(t)) => t.clone(),
        Some(_) => return Err(invalid("scenario", "expected a table")),
        None => return Err(ChanError::Config(ConfigError::MissingKey("scenario".into()))),
    };
    let km = keymap(&root, "scenario", SCENARIO_KEYS)?;
    let mut s = ChannelScenario::default();
    if let Some(v) = km.uint("seed")? {
        s.seed = v as u64;
    }
    match (km.real("snr_db")?, km.real("noise_psd")?) {
        (Some(_), Some(_)) => {
            return Err(invalid("scenario.snr_db", "give either snr_db or noise_psd"))
        }
        (Some(snr), None) => s.noise = NoiseSpec::SnrDb(snr),
        (None, Some(n0)) => s.noise = NoiseSpec::Psd(n0),
        (None, None) => {}
    }
    if let Some(v) = km.real("clutter_doppler_max_hz")? {
        s.clutter_doppler_max_hz = v;
    }
    match km.get("strict_cp") {
        None => {}
        Some(toml::Value::Boolean(b)) => s.strict_cp = *b,
        Some(_) => return Err(invalid("scenario.strict_cp", "expected boolean")),
    }
    let mut clocks = ClockImpairments::default();
    if let Some(v) = km.real("clocks.timing_offset_ns")? {
        clocks.timing_offset_s = v * 1e-9;
    }
    if let Some(v) = km.real("clocks.cfo_hz")? {
        clocks.cfo_hz = v;
    }
    if let Some(v) = km.real("clocks.sio_s")? {
        clocks.sio_s = v;
    }
    let rate = km.real("clocks.sio_rate")?.unwrap_or(0.0);
    clocks.drift = match km.string("clocks.drift")?.as_deref() {
        None | Some("constant") => DriftModel::Constant,
        Some("linear_ramp") => DriftModel::LinearRamp { rate },
        Some(other) => {
            return Err(invalid(
                "scenario.clocks.drift",
                format!("`{other}` is not constant or linear_ramp"),
            ))
        }
    };
    s.clocks = clocks;

    let mut phase_rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x9e37_79b9_7f4a_7c15);
    let paths = match root.get("path") {
        None => Vec::new(),
        Some(toml::Value::Array(a)) => a.clone(),
        Some(_) => return Err(invalid("scenario.path", "expected [[scenario.path]] blocks")),
    };
    for (i, p) in paths.iter().enumerate() {
        let toml::Value::Table(t) = p else {
            return Err(invalid("scenario.path", "expected a table"));
        };
        let prefix = format!("scenario.path[{i}]");
        let pk = keymap(t, &prefix, PATH_KEYS)?;
        let kind = match pk.string("kind")?.as_deref() {
            Some("target") | None => PathKind::Target,
            Some("clutter") => PathKind::Clutter,
            Some("los") => PathKind::Los,
            Some(other) => return Err(invalid(&format!("{prefix}.kind"), format!("`{other}`"))),
        };
        let drawn_phase = phase_rng.random_range(0.0..2.0 * PI);
        let phase = pk.real("phase_deg")?.map(|d| d.to_radians()).unwrap_or(drawn_phase);
        let spec = if let Some(range) = pk.real("range_m")? {
            let rcs = pk.real("rcs_m2")?.unwrap_or(1.0);
            let v = pk.real("velocity_mps")?.unwrap_or(0.0);
            let mut t = target_params(rcs, range, v, cfg.carrier_freq_hz, s.seed.wrapping_add(i as u64))?;
            t.kind = kind;
            if let Some(g) = pk.real("gain_db")? {
                t.gain = Cf::from_polar(10f64.powf(g / 20.0), t.gain.arg());
            }
            if pk.real("phase_deg")?.is_some() {
                t.gain = Cf::from_polar(t.gain.norm(), phase);
            }
            t
        } else {
            let g = pk.real("gain_db")?.unwrap_or(0.0);
            PathSpec {
                gain: Cf::from_polar(10f64.powf(g / 20.0), phase),
                delay_s: pk.real("delay_ns")?.unwrap_or(0.0) * 1e-9,
                doppler_hz: pk.real("doppler_hz")?.unwrap_or(0.0),
                kind,
            }
        };
        match pk.string("link")?.as_deref() {
            Some("ue") => s.ue_paths.push(spec),
            Some("mono") => s.mono_paths.push(spec),
            Some(other) => {
                return Err(invalid(&format!("{prefix}.link"), format!("`{other}` is not ue or mono")))
            }
            None => return Err(ChanError::Config(ConfigError::MissingKey(format!("{prefix}.link")))),
        }
    }
    s.validate(cfg)?;
    Ok(s)
}

pub fn load_scenario_file(path: &Path, cfg: &SystemConfig) -> Result<ChannelScenario, ChanError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ChanError::Config(ConfigError::Parse(format!("{}: {e}", path.display())))
    })?;
    load_scenario(&text, cfg)
}
