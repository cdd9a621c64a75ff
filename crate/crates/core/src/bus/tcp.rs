//! NDJSON-over-TCP endpoints for a [`Bus`].
//!
//! A client opens a connection and sends one subscription line,
//! `{"op":"sub","pattern":"csi.>"}`. From then on the server streams every
//! matching bus message to it, and every further line the client sends is
//! decoded and published on the bus. When the connection fails its
//! subscription is dropped; there is no replay.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::message::{decode_at, encode, BusMessage};
use super::Bus;
use crate::error::{Error, Result};

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum ClientOp {
    Sub { pattern: String },
}

/// Accepts subscriber connections for one bus until shut down.
#[derive(Debug)]
pub struct TcpBusServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    active: Arc<AtomicUsize>,
    accept: Option<JoinHandle<()>>,
}

impl TcpBusServer {
    pub fn serve(bus: &Bus, addr: &str) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let active = Arc::new(AtomicUsize::new(0));
        let accept = {
            let (bus, shutdown, active) = (bus.clone(), shutdown.clone(), active.clone());
            thread::spawn(move || accept_loop(listener, bus, shutdown, active))
        };
        log::info!("bus listening on {addr}");
        Ok(Self {
            addr,
            shutdown,
            active,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Connections that have completed their subscription handshake.
    pub fn subscribers(&self) -> usize {
        self.active.load(Ordering::SeqCst)
    }

    pub fn wait_for_subscribers(&self, n: usize, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while self.subscribers() < n {
            if Instant::now() >= deadline {
                return false;
            }
            thread::sleep(Duration::from_millis(2));
        }
        true
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for TcpBusServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(
    listener: TcpListener,
    bus: Bus,
    shutdown: Arc<AtomicBool>,
    active: Arc<AtomicUsize>,
) {
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let (bus, shutdown, active) = (bus.clone(), shutdown.clone(), active.clone());
                thread::spawn(move || {
                    if let Err(e) = serve_connection(stream, bus, shutdown, active) {
                        log::warn!("bus client {peer}: {e}");
                    }
                });
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::error!("bus accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
}

fn serve_connection(
    stream: TcpStream,
    bus: Bus,
    shutdown: Arc<AtomicBool>,
    active: Arc<AtomicUsize>,
) -> Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut first = String::new();
    if reader.read_line(&mut first)? == 0 {
        return Ok(());
    }
    let ClientOp::Sub { pattern } = serde_json::from_str(first.trim_end())
        .map_err(|e| Error::Bus(format!("bad subscription line: {e}")))?;
    let sub = bus.subscribe(&pattern)?;
    let closed = Arc::new(AtomicBool::new(false));
    active.fetch_add(1, Ordering::SeqCst);

    let writer = {
        let closed = closed.clone();
        let mut out = stream.try_clone()?;
        thread::spawn(move || {
            while !closed.load(Ordering::SeqCst) && !shutdown.load(Ordering::SeqCst) {
                match sub.recv_timeout(POLL) {
                    Ok(Some(m)) => {
                        if out.write_all(&encode(&m)).is_err() {
                            break;
                        }
                    }
                    Ok(None) => {}
                    Err(_) => break,
                }
            }
            closed.store(true, Ordering::SeqCst);
            drop(sub);
            active.fetch_sub(1, Ordering::SeqCst);
            let _ = out.shutdown(std::net::Shutdown::Both);
        })
    };

    let mut offset = first.len();
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = match reader.read_until(b'\n', &mut line) {
            Ok(0) | Err(_) => break,
            Ok(n) => n,
        };
        match decode_at(&line, offset).and_then(|m| bus.publish(m)) {
            Ok(_) => {}
            Err(e) => log::warn!("dropping client line: {e}"),
        }
        offset += n;
    }
    closed.store(true, Ordering::SeqCst);
    let _ = writer.join();
    Ok(())
}

/// Client side of a bus connection.
#[derive(Debug)]
pub struct TcpBusClient {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
    partial: Vec<u8>,
    offset: usize,
}

impl TcpBusClient {
    pub fn connect(addr: impl std::net::ToSocketAddrs, pattern: &str) -> Result<Self> {
        super::Pattern::parse(pattern)?;
        let mut writer = TcpStream::connect(addr)?;
        writer.set_nodelay(true)?;
        let mut line = serde_json::to_vec(&ClientOp::Sub {
            pattern: pattern.to_string(),
        })?;
        line.push(b'\n');
        writer.write_all(&line)?;
        let reader = BufReader::new(writer.try_clone()?);
        Ok(Self {
            writer,
            reader,
            partial: Vec::new(),
            offset: 0,
        })
    }

    pub fn set_read_timeout(&self, timeout: Option<Duration>) -> Result<()> {
        self.writer.set_read_timeout(timeout)?;
        Ok(())
    }

    /// Next message; `None` once the server closed the stream or the read
    /// timed out.
    pub fn recv(&mut self) -> Result<Option<BusMessage>> {
        match self.reader.read_until(b'\n', &mut self.partial) {
            Ok(0) => Ok(None),
            Ok(_) if !self.partial.ends_with(b"\n") => Ok(None),
            Ok(n) => {
                let line = std::mem::take(&mut self.partial);
                let m = decode_at(&line, self.offset);
                self.offset += n.max(line.len());
                m.map(Some)
            }
            Err(e)
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                ) =>
            {
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn publish(&mut self, msg: &BusMessage) -> Result<()> {
        msg.validate()?;
        self.writer.write_all(&encode(msg))?;
        Ok(())
    }
}
