//! TCP sample stream between separate BS and UE processes.
//!
//! Record: frame index u64, sample count u32, then (re, im) f32 pairs; little-endian.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use super::pipeline::TxBurst;
use super::queue::BoundedQueue;
use crate::dsp::Cf;

pub fn write_burst(w: &mut impl Write, b: &TxBurst) -> io::Result<()> {
    w.write_all(&b.index.to_le_bytes())?;
    w.write_all(&(b.samples.len() as u32).to_le_bytes())?;
    for s in b.samples.iter() {
        w.write_all(&(s.re as f32).to_le_bytes())?;
        w.write_all(&(s.im as f32).to_le_bytes())?;
    }
    w.flush()
}

/// `Ok(None)` at a clean end of stream.
pub fn read_burst(r: &mut impl Read) -> io::Result<Option<TxBurst>> {
    let mut h = [0u8; 12];
    match r.read_exact(&mut h) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let index = u64::from_le_bytes(h[..8].try_into().unwrap());
    let n = u32::from_le_bytes(h[8..].try_into().unwrap()) as usize;
    let mut b = vec![0u8; 8 * n];
    r.read_exact(&mut b)?;
    let samples = b
        .chunks_exact(8)
        .map(|c| {
            Cf::new(
                f32::from_le_bytes(c[..4].try_into().unwrap()) as f64,
                f32::from_le_bytes(c[4..].try_into().unwrap()) as f64,
            )
        })
        .collect();
    Ok(Some(TxBurst { index, samples: Arc::new(samples) }))
}

/// Waits for one UE connection, then forwards every burst from `queue` until it closes.
pub fn serve_bursts(
    addr: impl ToSocketAddrs,
    queue: Arc<BoundedQueue<TxBurst>>,
) -> io::Result<(SocketAddr, JoinHandle<io::Result<()>>)> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let h = thread::Builder::new().name("tx_link".into()).spawn(move || {
        let (s, peer) = listener.accept()?;
        log::info!("sample stream to {peer}");
        let mut w = BufWriter::new(s);
        while let Some(b) = queue.pop() {
            if let Err(e) = write_burst(&mut w, &b) {
                queue.close();
                return Err(e);
            }
        }
        Ok(())
    })?;
    Ok((local, h))
}

/// Reads bursts from a BS sample stream into `queue`; closes it at end of stream.
pub fn receive_bursts(
    addr: impl ToSocketAddrs,
    queue: Arc<BoundedQueue<TxBurst>>,
) -> io::Result<JoinHandle<io::Result<()>>> {
    let s = TcpStream::connect(addr)?;
    thread::Builder::new().name("rx_link".into()).spawn(move || {
        let mut r = BufReader::new(s);
        let res = loop {
            match read_burst(&mut r) {
                Ok(Some(b)) => {
                    if queue.push(b).is_err() {
                        break Ok(());
                    }
                }
                Ok(None) => break Ok(()),
                Err(e) => break Err(e),
            }
        };
        queue.close();
        res
    })
}
