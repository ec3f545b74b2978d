//! OFDM integrated sensing and communication baseband engine with a channel simulator.

pub mod bisense;
pub mod cfg;
pub mod chansim;
pub mod dsp;
pub mod mono;
pub mod phytx;
pub mod runtime;
pub mod uerx;
