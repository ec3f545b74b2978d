#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use openisac::cfg::{load_config_file, SystemConfig};
use openisac::chansim::{load_scenario_file, ChannelScenario};
use openisac::runtime::{CallbackSink, EmitSink, Emitted, UeEvent};

pub fn asset(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

pub fn desk() -> SystemConfig {
    load_config_file(&asset("configs/desk.toml")).unwrap()
}

pub fn table2() -> SystemConfig {
    load_config_file(&asset("configs/table2.toml")).unwrap()
}

pub fn desk_scenario(cfg: &SystemConfig) -> ChannelScenario {
    load_scenario_file(&asset("scenarios/desk_clutter.toml"), cfg).unwrap()
}

pub type Shared<T> = Arc<Mutex<Vec<T>>>;

pub fn collector() -> (Shared<Emitted>, Box<dyn EmitSink>) {
    let store: Shared<Emitted> = Arc::default();
    let s = store.clone();
    (store, Box::new(CallbackSink(move |e: &Emitted| s.lock().unwrap().push(e.clone()))))
}

pub fn event_log() -> (Shared<UeEvent>, Box<dyn FnMut(&UeEvent) + Send>) {
    let store: Shared<UeEvent> = Arc::default();
    let s = store.clone();
    (store, Box::new(move |e: &UeEvent| s.lock().unwrap().push(e.clone())))
}

pub fn wait_until(timeout: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let t0 = Instant::now();
    while t0.elapsed() < timeout {
        if cond() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(5));
    }
    cond()
}
