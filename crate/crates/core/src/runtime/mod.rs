//! Streaming skeleton: bounded FIFOs, stage threads, UDP payload I/O, live control and
//! binary emission.

pub mod control;
pub mod formats;
pub mod link;
pub mod pipeline;
pub mod queue;
pub mod udp;

pub use control::{ControlClient, ControlCommand, ControlError, ControlServer, ControlState};
pub use formats::{read_map, read_stream, write_map, write_stream, FormatError};
pub use pipeline::{
    default_codec, run_bs, run_loopback, run_ue, BsSinks, CallbackSink, EmitSink, Emitted,
    EmittedMap, FileSink, Pipeline, PipelineError, PipelineOptions, TxBurst, UeEvent, UeSinks,
};
pub use queue::{BoundedQueue, QueueHandle, QueuePolicy, QueueStats};
