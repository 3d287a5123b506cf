//! Binary request/response protocol for denoisers running in another process.
//!
//! Request: `"SDPS"`, version `u16`, sample count `u32`, noise level `f64`,
//! then the samples as `f32`. Response: a status byte, then (only when the
//! status is 0) the same number of `f32` samples. All integers and floats are
//! little-endian. A request with zero samples is a handshake and is answered
//! with a bare `0` status byte.
//!
//! Endpoints are given as `stdio:<command line>` (the command is spawned and
//! spoken to over its stdin/stdout) or `tcp:<host>:<port>`.

use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::diffusion::Denoiser;

pub const MAGIC: [u8; 4] = *b"SDPS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 8;

pub const STATUS_OK: u8 = 0;
pub const STATUS_DIMENSION: u8 = 1;
pub const STATUS_BAD_REQUEST: u8 = 2;
pub const STATUS_FAILED: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("invalid endpoint URI {0:?}; expected stdio:<command> or tcp:<host>:<port>")]
    InvalidUri(String),
    #[error("failed to start {command:?}: {source}")]
    Spawn { command: String, source: io::Error },
    #[error("failed to connect to {addr}: {source}")]
    Connect { addr: String, source: io::Error },
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("connection closed by the denoiser")]
    Closed,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("denoiser rejected a {actual}-sample request (expects {expected:?})")]
    Dimension { expected: Option<usize>, actual: usize },
    #[error("denoiser reported failure status {0}")]
    Status(u8),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Stdio(String),
    Tcp(String),
}

impl Endpoint {
    pub fn parse(uri: &str) -> Result<Self, TransportError> {
        if let Some(cmd) = uri.strip_prefix("stdio:") {
            if cmd.trim().is_empty() {
                return Err(TransportError::InvalidUri(uri.into()));
            }
            Ok(Self::Stdio(cmd.trim().to_string()))
        } else if let Some(addr) = uri.strip_prefix("tcp:") {
            if !addr.contains(':') {
                return Err(TransportError::InvalidUri(uri.into()));
            }
            Ok(Self::Tcp(addr.to_string()))
        } else {
            Err(TransportError::InvalidUri(uri.into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub version: u16,
    pub sigma: f64,
    pub samples: Vec<f32>,
}

pub fn encode_request(sigma: f64, samples: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * samples.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    out.extend_from_slice(&sigma.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&(*s as f32).to_le_bytes());
    }
    out
}

pub fn encode_response(status: u8, samples: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(1 + 4 * samples.len());
    out.push(status);
    if status == STATUS_OK {
        for s in samples {
            out.extend_from_slice(&(*s as f32).to_le_bytes());
        }
    }
    out
}

fn read_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Reads one request. `Ok(None)` on a clean end of stream before a request.
pub fn read_request<R: Read>(reader: &mut R) -> Result<Option<Request>, TransportError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match reader.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(TransportError::Closed),
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if header[..4] != MAGIC {
        return Err(TransportError::Protocol(format!("bad magic {:?}", &header[..4])));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    let n = u32::from_le_bytes([header[6], header[7], header[8], header[9]]) as usize;
    let sigma = f64::from_le_bytes(header[10..18].try_into().expect("8-byte slice"));
    let mut body = vec![0u8; 4 * n];
    reader.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => TransportError::Closed,
        _ => e.into(),
    })?;
    Ok(Some(Request {
        version,
        sigma,
        samples: read_f32s(&body),
    }))
}

/// Serves requests until the client closes the stream. `dim` restricts the
/// accepted sample count (handshakes excepted).
pub fn serve<R, W, H>(reader: &mut R, writer: &mut W, dim: Option<usize>, mut handler: H) -> Result<(), TransportError>
where
    R: Read,
    W: Write,
    H: FnMut(f64, &[f64]) -> Result<Vec<f64>, u8>,
{
    loop {
        let req = match read_request(reader) {
            Ok(Some(r)) => r,
            Ok(None) => return Ok(()),
            Err(TransportError::Protocol(msg)) => {
                writer.write_all(&[STATUS_BAD_REQUEST])?;
                writer.flush()?;
                return Err(TransportError::Protocol(msg));
            }
            Err(e) => return Err(e),
        };
        let n = req.samples.len();
        let reply = if req.version != VERSION {
            encode_response(STATUS_BAD_REQUEST, &[])
        } else if n == 0 {
            encode_response(STATUS_OK, &[])
        } else if dim.is_some_and(|d| d != n) {
            encode_response(STATUS_DIMENSION, &[])
        } else {
            let x: Vec<f64> = req.samples.iter().map(|&s| s as f64).collect();
            match handler(req.sigma, &x) {
                Ok(out) if out.len() == n => encode_response(STATUS_OK, &out),
                Ok(_) => encode_response(STATUS_FAILED, &[]),
                Err(status) => encode_response(status.max(1), &[]),
            }
        };
        writer.write_all(&reply)?;
        writer.flush()?;
    }
}

/// Echo handler: returns its input.
pub fn echo_handler(_sigma: f64, x: &[f64]) -> Result<Vec<f64>, u8> {
    Ok(x.to_vec())
}

/// Wraps a local denoiser as a server handler.
pub fn denoiser_handler(d: &dyn Denoiser) -> impl FnMut(f64, &[f64]) -> Result<Vec<f64>, u8> + '_ {
    move |sigma, x| d.denoise(x, sigma).map_err(|_| STATUS_FAILED)
}

struct Session {
    writer: Box<dyn Write + Send>,
    incoming: Receiver<io::Result<Vec<u8>>>,
    buffer: Vec<u8>,
    child: Option<Child>,
}

impl Session {
    fn open(endpoint: &Endpoint, timeout: Duration) -> Result<Self, TransportError> {
        match endpoint {
            Endpoint::Stdio(command) => {
                let mut parts = command.split_whitespace();
                let program = parts.next().ok_or_else(|| TransportError::InvalidUri(command.clone()))?;
                let mut child = Command::new(program)
                    .args(parts)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|source| TransportError::Spawn {
                        command: command.clone(),
                        source,
                    })?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Self {
                    writer: Box::new(stdin),
                    incoming: pump(stdout),
                    buffer: Vec::new(),
                    child: Some(child),
                })
            }
            Endpoint::Tcp(addr) => {
                let connect_err = |source| TransportError::Connect {
                    addr: addr.clone(),
                    source,
                };
                let sock = addr
                    .to_socket_addrs()
                    .map_err(connect_err)?
                    .next()
                    .ok_or_else(|| TransportError::InvalidUri(format!("tcp:{addr}")))?;
                let stream = TcpStream::connect_timeout(&sock, timeout).map_err(|source| TransportError::Connect {
                    addr: addr.clone(),
                    source,
                })?;
                stream.set_nodelay(true)?;
                let reader = stream.try_clone()?;
                Ok(Self {
                    writer: Box::new(stream),
                    incoming: pump(reader),
                    buffer: Vec::new(),
                    child: None,
                })
            }
        }
    }

    fn read_exact(&mut self, n: usize, deadline: Instant, timeout: Duration) -> Result<Vec<u8>, TransportError> {
        while self.buffer.len() < n {
            let wait = deadline.saturating_duration_since(Instant::now());
            match self.incoming.recv_timeout(wait) {
                Ok(Ok(chunk)) if chunk.is_empty() => return Err(TransportError::Closed),
                Ok(Ok(chunk)) => self.buffer.extend_from_slice(&chunk),
                Ok(Err(e)) => return Err(e.into()),
                Err(RecvTimeoutError::Timeout) => return Err(TransportError::Timeout(timeout)),
                Err(RecvTimeoutError::Disconnected) => return Err(TransportError::Closed),
            }
        }
        let rest = self.buffer.split_off(n);
        Ok(std::mem::replace(&mut self.buffer, rest))
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Forwards everything read from `reader` to a channel; an empty chunk marks
/// end of stream.
fn pump<R: Read + Send + 'static>(mut reader: R) -> Receiver<io::Result<Vec<u8>>> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut buf = vec![0u8; 1 << 16];
        loop {
            match reader.read(&mut buf) {
                Ok(0) => {
                    let _ = tx.send(Ok(Vec::new()));
                    break;
                }
                Ok(k) => {
                    if tx.send(Ok(buf[..k].to_vec())).is_err() {
                        break;
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });
    rx
}

/// A denoiser behind the wire protocol. Requests are serialized; concurrent
/// samplers should each open their own session. No derivatives are
/// available, so guidance must use the identity-Jacobian mode.
pub struct ExternalDenoiser {
    endpoint: Endpoint,
    session: Mutex<Session>,
    timeout: Duration,
}

impl std::fmt::Debug for ExternalDenoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalDenoiser")
            .field("endpoint", &self.endpoint)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl ExternalDenoiser {
    /// Opens a session and performs the handshake.
    pub fn connect(uri: &str, timeout: Duration) -> Result<Self, TransportError> {
        let endpoint = Endpoint::parse(uri)?;
        let session = Session::open(&endpoint, timeout)?;
        let this = Self {
            endpoint,
            session: Mutex::new(session),
            timeout,
        };
        this.request(0.0, &[])?;
        Ok(this)
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn request(&self, sigma: f64, x: &[f64]) -> Result<Vec<f64>, TransportError> {
        let mut session = self.session.lock().unwrap_or_else(|p| p.into_inner());
        let deadline = Instant::now() + self.timeout;
        session.writer.write_all(&encode_request(sigma, x)).map_err(|e| match e.kind() {
            io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset => TransportError::Closed,
            _ => e.into(),
        })?;
        session.writer.flush()?;
        let status = session.read_exact(1, deadline, self.timeout)?[0];
        match status {
            STATUS_OK => {}
            STATUS_DIMENSION => {
                return Err(TransportError::Dimension {
                    expected: None,
                    actual: x.len(),
                })
            }
            s => return Err(TransportError::Status(s)),
        }
        let body = session.read_exact(4 * x.len(), deadline, self.timeout)?;
        Ok(read_f32s(&body).into_iter().map(f64::from).collect())
    }
}

impl Denoiser for ExternalDenoiser {
    fn denoise(&self, x: &[f64], sigma: f64) -> crate::Result<Vec<f64>> {
        Ok(self.request(sigma, x)?)
    }

    fn name(&self) -> String {
        match &self.endpoint {
            Endpoint::Stdio(c) => format!("external(stdio:{c})"),
            Endpoint::Tcp(a) => format!("external(tcp:{a})"),
        }
    }
}
