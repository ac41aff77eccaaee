//! TCP front end for the gateway and the matching client used by the
//! simulated main modem.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use super::Gateway;
use crate::uplink::{encode_reply, UplinkError, UploadSink};

pub const DEFAULT_PORT: u16 = 7531;
pub const PORT_ENV: &str = "DORI_GATEWAY_PORT";
const MAX_UPLOAD: u64 = 256 << 20;
const IO_TIMEOUT: Duration = Duration::from_secs(10);

/// Port from the environment, else the default.
pub fn gateway_port() -> u16 {
    std::env::var(PORT_ENV)
        .ok()
        .and_then(|p| p.parse().ok())
        .unwrap_or(DEFAULT_PORT)
}

fn wall_clock_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub struct GatewayServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    gateway: Arc<Mutex<Gateway>>,
}

impl GatewayServer {
    /// Listen on `addr`; all connections share one gateway behind a lock.
    pub fn bind(addr: impl ToSocketAddrs, gateway: Gateway) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let gateway = Arc::new(Mutex::new(gateway));
        let accept = {
            let stop = stop.clone();
            let gateway = gateway.clone();
            thread::spawn(move || accept_loop(listener, stop, gateway))
        };
        Ok(GatewayServer {
            addr,
            stop,
            accept: Some(accept),
            gateway,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn gateway(&self) -> Arc<Mutex<Gateway>> {
        self.gateway.clone()
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for GatewayServer {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

fn accept_loop(listener: TcpListener, stop: Arc<AtomicBool>, gateway: Arc<Mutex<Gateway>>) {
    let mut workers = Vec::new();
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = conn else { continue };
        let gw = gateway.clone();
        workers.push(thread::spawn(move || {
            if let Err(e) = serve_connection(stream, &gw) {
                log::debug!("gateway connection ended: {e}");
            }
        }));
    }
    for w in workers {
        let _ = w.join();
    }
}

/// Read whole uploads until the peer closes. A connection that dies inside
/// an upload gets a nack if it is still listening.
fn serve_connection(mut stream: TcpStream, gateway: &Mutex<Gateway>) -> io::Result<()> {
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_write_timeout(Some(IO_TIMEOUT))?;
    loop {
        let mut first = [0u8; 1];
        if stream.read(&mut first)? == 0 {
            return Ok(());
        }
        match read_upload(&mut stream, first[0]) {
            Ok(wire) => {
                let reply = gateway
                    .lock()
                    .expect("gateway lock poisoned")
                    .receive_upload(&wire, wall_clock_ms());
                stream.write_all(&reply)?;
            }
            Err(e) => {
                gateway.lock().expect("gateway lock poisoned").note_malformed();
                let _ = stream.write_all(&encode_reply(false, 0));
                return Err(e);
            }
        }
    }
}

fn read_upload(stream: &mut TcpStream, name_len: u8) -> io::Result<Vec<u8>> {
    let mut wire = vec![name_len];
    let mut head = vec![0u8; name_len as usize + 8];
    stream.read_exact(&mut head)?;
    let size = u64::from_le_bytes(head[name_len as usize..].try_into().unwrap());
    if size > MAX_UPLOAD {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "upload too large"));
    }
    wire.extend_from_slice(&head);
    let start = wire.len();
    wire.resize(start + size as usize + 2, 0);
    stream.read_exact(&mut wire[start..])?;
    Ok(wire)
}

/// Main-modem client that opens one connection per upload.
#[derive(Debug, Clone)]
pub struct TcpSink {
    addr: SocketAddr,
}

impl TcpSink {
    pub fn new(addr: SocketAddr) -> Self {
        TcpSink { addr }
    }

    /// Parse `tcp://host:port`.
    pub fn from_url(url: &str) -> Result<Self, UplinkError> {
        let rest = url
            .strip_prefix("tcp://")
            .ok_or_else(|| UplinkError::Io(format!("gateway url must start with tcp://: {url}")))?;
        let addr = rest
            .to_socket_addrs()
            .map_err(|e| UplinkError::Io(e.to_string()))?
            .next()
            .ok_or_else(|| UplinkError::Io(format!("no address for {rest}")))?;
        Ok(TcpSink { addr })
    }

    fn connect(&self) -> Result<TcpStream, UplinkError> {
        let s = TcpStream::connect_timeout(&self.addr, IO_TIMEOUT).map_err(|e| UplinkError::Io(e.to_string()))?;
        s.set_read_timeout(Some(IO_TIMEOUT))
            .map_err(|e| UplinkError::Io(e.to_string()))?;
        Ok(s)
    }
}

impl UploadSink for TcpSink {
    fn deliver(&mut self, wire: &[u8], _received_at_ms: u64) -> Result<Vec<u8>, UplinkError> {
        let io = |e: io::Error| UplinkError::Io(e.to_string());
        let mut s = self.connect()?;
        s.write_all(wire).map_err(io)?;
        s.shutdown(Shutdown::Write).map_err(io)?;
        let mut reply = [0u8; 3];
        s.read_exact(&mut reply).map_err(io)?;
        Ok(reply.to_vec())
    }

    fn deliver_partial(&mut self, prefix: &[u8]) {
        if let Ok(mut s) = self.connect() {
            let _ = s.write_all(prefix);
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}
