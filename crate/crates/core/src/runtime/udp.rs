//! Datagram ingress into a packet FIFO and egress of decoded datagrams.

use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::queue::BoundedQueue;

#[derive(Debug, Default)]
pub struct IngressCounters {
    pub received: AtomicU64,
    pub queued: AtomicU64,
    /// Datagrams larger than one frame's payload, discarded.
    pub oversize: AtomicU64,
}

/// Reader thread: each datagram becomes one FIFO item. Under a blocking FIFO the reader
/// stalls, leaving later datagrams in the socket buffer.
pub struct UdpIngress {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    counters: Arc<IngressCounters>,
    handle: Option<JoinHandle<()>>,
}

impl UdpIngress {
    pub fn spawn(
        bind: impl ToSocketAddrs,
        queue: Arc<BoundedQueue<Vec<u8>>>,
        max_len: usize,
    ) -> io::Result<Self> {
        let socket = UdpSocket::bind(bind)?;
        socket.set_read_timeout(Some(Duration::from_millis(50)))?;
        let addr = socket.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let counters = Arc::new(IngressCounters::default());
        let (flag, cnt) = (stop.clone(), counters.clone());
        let handle = thread::Builder::new().name("udp_in".into()).spawn(move || {
            let mut buf = vec![0u8; 65_536];
            while !flag.load(Ordering::Acquire) {
                let len = match socket.recv(&mut buf) {
                    Ok(len) => len,
                    Err(e)
                        if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) =>
                    {
                        continue
                    }
                    Err(e) => {
                        log::warn!("udp ingress: {e}");
                        continue;
                    }
                };
                cnt.received.fetch_add(1, Ordering::Relaxed);
                if len == 0 || len > max_len {
                    cnt.oversize.fetch_add(1, Ordering::Relaxed);
                    log::warn!("udp ingress: dropping {len}-byte datagram (limit {max_len})");
                    continue;
                }
                if queue.push(buf[..len].to_vec()).is_err() {
                    break;
                }
                cnt.queued.fetch_add(1, Ordering::Relaxed);
            }
        })?;
        Ok(Self { addr, stop, counters, handle: Some(handle) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn counters(&self) -> &Arc<IngressCounters> {
        &self.counters
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for UdpIngress {
    fn drop(&mut self) {
        self.stop();
    }
}

pub struct UdpEgress {
    socket: UdpSocket,
    dest: SocketAddr,
}

impl UdpEgress {
    pub fn new(dest: SocketAddr) -> io::Result<Self> {
        let bind: SocketAddr = if dest.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" }.parse().unwrap();
        Ok(Self { socket: UdpSocket::bind(bind)?, dest })
    }

    pub fn send(&self, datagram: &[u8]) -> io::Result<()> {
        self.socket.send_to(datagram, self.dest).map(|_| ())
    }
}
