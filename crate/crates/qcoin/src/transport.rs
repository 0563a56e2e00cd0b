//! Wire encoding of protocol messages plus two interchangeable channels: an
//! in-memory loopback for tests and a TCP channel for the bank daemon and
//! the holder client.
//!
//! Frames are newline-delimited JSON, one message per line, with a `type`
//! discriminator. Human-auditable transcripts beat throughput at six
//! messages per session. Both channels push bytes through the same codec,
//! so a loopback run and a socket run of the same seeds produce identical
//! frames.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coin::{BankLedger, CoinId};
use crate::hmp::{HmpQuery, MeasurementOutcome};
use crate::protocol::{BankSession, HolderRole, ProtocolMessage, ProtocolParams, Reason, Verdict};

/// Name of the environment variable holding the default bank endpoint.
pub const BANK_ADDR_ENV: &str = "QCOIN_BANK_ADDR";

/// How long a session may sit idle before the bank gives up on it.
pub const SESSION_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum WireError {
    #[error("invalid message: {0}")]
    Invalid(String),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("connection closed mid-session")]
    Disconnected,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl WireError {
    fn invalid(msg: impl Into<String>) -> Self {
        WireError::Invalid(msg.into())
    }

    fn malformed(msg: impl Into<String>) -> Self {
        WireError::Malformed(msg.into())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum WireMessage {
    VerifyRequest { coin_id: String },
    BankChallenge { indices: Vec<u64> },
    HolderSelection { indices: Vec<u64> },
    BankBits { m: Vec<u8> },
    HolderResults { pairs: Vec<[u8; 2]> },
    Verdict { valid: bool, reason: String },
}

fn check_distinct(indices: &[u64], field: &str) -> Result<(), WireError> {
    for (position, index) in indices.iter().enumerate() {
        if indices[..position].contains(index) {
            return Err(WireError::malformed(format!(
                "duplicate index {index} in {field}"
            )));
        }
    }
    Ok(())
}

fn to_wire(msg: &ProtocolMessage) -> Result<WireMessage, WireError> {
    Ok(match msg {
        ProtocolMessage::VerifyRequest { coin_id } => WireMessage::VerifyRequest {
            coin_id: coin_id.to_string(),
        },
        ProtocolMessage::BankChallenge { indices } => {
            let indices: Vec<u64> = indices.iter().map(|&i| i as u64).collect();
            check_distinct(&indices, "bank_challenge.indices")
                .map_err(|e| WireError::invalid(e.to_string()))?;
            WireMessage::BankChallenge { indices }
        }
        ProtocolMessage::HolderSelection { indices } => {
            let indices: Vec<u64> = indices.iter().map(|&i| i as u64).collect();
            check_distinct(&indices, "holder_selection.indices")
                .map_err(|e| WireError::invalid(e.to_string()))?;
            WireMessage::HolderSelection { indices }
        }
        ProtocolMessage::BankBits { m } => WireMessage::BankBits {
            m: m.iter().map(|q| q.bit()).collect(),
        },
        ProtocolMessage::HolderResults { pairs } => WireMessage::HolderResults {
            pairs: pairs
                .iter()
                .map(|pair| [u8::from(pair.a), u8::from(pair.b)])
                .collect(),
        },
        ProtocolMessage::Verdict(verdict) => WireMessage::Verdict {
            valid: verdict.valid,
            reason: verdict.reason.code().to_string(),
        },
    })
}

fn from_wire(msg: WireMessage) -> Result<ProtocolMessage, WireError> {
    Ok(match msg {
        WireMessage::VerifyRequest { coin_id } => ProtocolMessage::VerifyRequest {
            coin_id: CoinId::new(coin_id),
        },
        WireMessage::BankChallenge { indices } => {
            check_distinct(&indices, "bank_challenge.indices")?;
            ProtocolMessage::BankChallenge {
                indices: indices.into_iter().map(|i| i as usize).collect(),
            }
        }
        WireMessage::HolderSelection { indices } => {
            check_distinct(&indices, "holder_selection.indices")?;
            ProtocolMessage::HolderSelection {
                indices: indices.into_iter().map(|i| i as usize).collect(),
            }
        }
        WireMessage::BankBits { m } => {
            let m = m
                .into_iter()
                .map(|bit| match bit {
                    0 => Ok(HmpQuery::M0),
                    1 => Ok(HmpQuery::M1),
                    other => Err(WireError::malformed(format!(
                        "bank_bits.m entry {other} is not a bit"
                    ))),
                })
                .collect::<Result<_, _>>()?;
            ProtocolMessage::BankBits { m }
        }
        WireMessage::HolderResults { pairs } => {
            let pairs = pairs
                .into_iter()
                .map(|[a, b]| {
                    if a > 1 || b > 1 {
                        return Err(WireError::malformed(format!(
                            "holder_results.pairs entry [{a},{b}] is not a bit pair"
                        )));
                    }
                    Ok(MeasurementOutcome::new(a == 1, b == 1))
                })
                .collect::<Result<_, _>>()?;
            ProtocolMessage::HolderResults { pairs }
        }
        WireMessage::Verdict { valid, reason } => {
            let reason: Reason = reason.parse().map_err(WireError::Malformed)?;
            ProtocolMessage::Verdict(Verdict { valid, reason })
        }
    })
}

/// Encodes one message as a JSON line terminated by a single `\n`.
/// Messages violating their structural invariants are rejected first.
pub fn encode_message(msg: &ProtocolMessage) -> Result<Vec<u8>, WireError> {
    let wire = to_wire(msg)?;
    let mut bytes = serde_json::to_vec(&wire).map_err(|e| WireError::invalid(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Decodes one frame. The trailing newline may be present or already split
/// off; bytes after the first newline belong to the next frame and are an
/// error here.
pub fn decode_frame(frame: &[u8]) -> Result<ProtocolMessage, WireError> {
    let line = match frame.iter().position(|&b| b == b'\n') {
        Some(pos) if pos == frame.len() - 1 => &frame[..pos],
        Some(_) => return Err(WireError::malformed("more than one frame")),
        None => frame,
    };
    let wire: WireMessage =
        serde_json::from_slice(line).map_err(|e| WireError::malformed(e.to_string()))?;
    from_wire(wire)
}

/// Incremental splitter for a byte stream of newline-delimited frames.
/// [`FrameBuffer::next_frame`] returns `None` while a frame is incomplete.
#[derive(Debug, Default)]
pub struct FrameBuffer {
    buf: VecDeque<u8>,
}

impl FrameBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend(bytes);
    }

    /// The next complete line, newline stripped, or `None` for more bytes.
    pub fn next_frame(&mut self) -> Option<Vec<u8>> {
        let pos = self.buf.iter().position(|&b| b == b'\n')?;
        let mut frame: Vec<u8> = self.buf.drain(..=pos).collect();
        frame.pop();
        Some(frame)
    }
}

/// A bidirectional message channel. Both implementations move encoded bytes,
/// so every message crosses the codec no matter the transport.
pub trait Channel {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), WireError>;
    fn recv(&mut self) -> Result<ProtocolMessage, WireError>;
}

/// In-memory byte-stream channel; [`loopback`] builds a connected pair.
pub struct LoopbackChannel {
    outgoing: Sender<Vec<u8>>,
    incoming: Receiver<Vec<u8>>,
    frames: FrameBuffer,
}

/// A connected pair of in-memory channels.
pub fn loopback() -> (LoopbackChannel, LoopbackChannel) {
    let (a_to_b, from_a) = std::sync::mpsc::channel();
    let (b_to_a, from_b) = std::sync::mpsc::channel();
    (
        LoopbackChannel {
            outgoing: a_to_b,
            incoming: from_b,
            frames: FrameBuffer::new(),
        },
        LoopbackChannel {
            outgoing: b_to_a,
            incoming: from_a,
            frames: FrameBuffer::new(),
        },
    )
}

impl Channel for LoopbackChannel {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), WireError> {
        let bytes = encode_message(msg)?;
        self.outgoing
            .send(bytes)
            .map_err(|_| WireError::Disconnected)
    }

    fn recv(&mut self) -> Result<ProtocolMessage, WireError> {
        loop {
            if let Some(frame) = self.frames.next_frame() {
                return decode_frame(&frame);
            }
            let chunk = self
                .incoming
                .recv_timeout(SESSION_TIMEOUT)
                .map_err(|_| WireError::Disconnected)?;
            self.frames.push(&chunk);
        }
    }
}

/// TCP stream channel with an inactivity timeout on reads.
pub struct TcpChannel {
    stream: TcpStream,
    frames: FrameBuffer,
}

impl TcpChannel {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, WireError> {
        let stream = TcpStream::connect(addr)?;
        Self::from_stream(stream)
    }

    pub fn from_stream(stream: TcpStream) -> Result<Self, WireError> {
        stream.set_read_timeout(Some(SESSION_TIMEOUT))?;
        stream.set_nodelay(true)?;
        Ok(TcpChannel {
            stream,
            frames: FrameBuffer::new(),
        })
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), WireError> {
        let bytes = encode_message(msg)?;
        self.stream.write_all(&bytes)?;
        Ok(())
    }

    fn recv(&mut self) -> Result<ProtocolMessage, WireError> {
        let mut chunk = [0u8; 1024];
        loop {
            if let Some(frame) = self.frames.next_frame() {
                return decode_frame(&frame);
            }
            let read = self.stream.read(&mut chunk)?;
            if read == 0 {
                return Err(WireError::Disconnected);
            }
            self.frames.push(&chunk[..read]);
        }
    }
}

/// Runs one bank session over a channel. Returns the verdict sent and the
/// session transcript as this side saw it.
///
/// A malformed or mistimed frame draws a PROTOCOL_VIOLATION verdict; a read
/// timeout draws TIMEOUT. The loop ends as soon as a verdict leaves.
pub fn serve_session<C: Channel>(
    channel: &mut C,
    bank: &mut BankSession,
) -> Result<(Verdict, Vec<ProtocolMessage>), WireError> {
    let mut transcript = Vec::with_capacity(6);
    loop {
        let incoming = match channel.recv() {
            Ok(message) => message,
            Err(WireError::Malformed(_)) => {
                let verdict = Verdict::invalid(Reason::ProtocolViolation);
                channel.send(&ProtocolMessage::Verdict(verdict))?;
                transcript.push(ProtocolMessage::Verdict(verdict));
                return Ok((verdict, transcript));
            }
            Err(WireError::Io(e)) if e.kind() == std::io::ErrorKind::WouldBlock => {
                let verdict = Verdict::invalid(Reason::Timeout);
                channel.send(&ProtocolMessage::Verdict(verdict))?;
                transcript.push(ProtocolMessage::Verdict(verdict));
                return Ok((verdict, transcript));
            }
            Err(other) => return Err(other),
        };
        transcript.push(incoming.clone());
        let reply = bank.step(&incoming);
        channel.send(&reply)?;
        transcript.push(reply.clone());
        if let ProtocolMessage::Verdict(verdict) = reply {
            return Ok((verdict, transcript));
        }
    }
}

/// Drives a holder role against a bank on the far side of a channel.
/// Returns the verdict (the bank's, or the local abort reason) and the
/// transcript as this side saw it.
pub fn drive_holder<C: Channel, H: HolderRole>(
    channel: &mut C,
    holder: &mut H,
) -> Result<(Verdict, Vec<ProtocolMessage>), WireError> {
    let mut transcript = Vec::with_capacity(6);
    let opening = holder.begin();
    channel.send(&opening)?;
    transcript.push(opening);
    loop {
        let incoming = channel.recv()?;
        transcript.push(incoming.clone());
        match holder.step(&incoming) {
            Ok(Some(reply)) => {
                channel.send(&reply)?;
                transcript.push(reply);
            }
            Ok(None) => {
                let verdict = match &incoming {
                    ProtocolMessage::Verdict(verdict) => *verdict,
                    _ => Verdict::invalid(Reason::ProtocolViolation),
                };
                return Ok((verdict, transcript));
            }
            Err(abort) => return Ok((Verdict::invalid(abort.reason), transcript)),
        }
    }
}

/// Handle on a running bank service. Dropping it leaves the service running;
/// call [`BankServer::shutdown`] to stop accepting and join the accept loop.
pub struct BankServer {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_loop: Option<JoinHandle<()>>,
}

impl BankServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(handle) = self.accept_loop.take() {
            let _ = handle.join();
        }
    }
}

/// Binds `addr` and serves one verification session per connection,
/// concurrently, against a shared read-only ledger.
///
/// Session RNGs derive from `base_seed` and a per-connection counter, so a
/// given connection index replays exactly. The service logs one line per
/// session to stderr and never transmits secret-record material: the only
/// bank-emitted frames are challenges, basis bits, and verdicts.
pub fn serve_bank(
    ledger: Arc<BankLedger>,
    addr: impl ToSocketAddrs,
    params: ProtocolParams,
    base_seed: u64,
) -> Result<BankServer, WireError> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local_addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = Arc::clone(&stop);
    let sessions = Arc::new(AtomicU64::new(0));

    let accept_loop = std::thread::spawn(move || {
        while !stop_flag.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    let ledger = Arc::clone(&ledger);
                    let session_index = sessions.fetch_add(1, Ordering::SeqCst);
                    std::thread::spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
                        rng.set_stream(session_index);
                        let mut bank = BankSession::new(&ledger, params, rng);
                        match TcpChannel::from_stream(stream) {
                            Ok(mut channel) => match serve_session(&mut channel, &mut bank) {
                                Ok((verdict, transcript)) => {
                                    let coin_id = transcript
                                        .iter()
                                        .find_map(|message| match message {
                                            ProtocolMessage::VerifyRequest { coin_id } => {
                                                Some(coin_id.to_string())
                                            }
                                            _ => None,
                                        })
                                        .unwrap_or_else(|| "?".to_string());
                                    eprintln!(
                                        "session {session_index} peer {peer} coin {coin_id}: valid={} reason={}",
                                        verdict.valid, verdict.reason
                                    );
                                }
                                Err(error) => {
                                    eprintln!("session {session_index} peer {peer}: {error}");
                                }
                            },
                            Err(error) => {
                                eprintln!("session {session_index} peer {peer}: {error}");
                            }
                        }
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => {
                    eprintln!("accept failed: {e}");
                    break;
                }
            }
        }
    });

    Ok(BankServer {
        local_addr,
        stop,
        accept_loop: Some(accept_loop),
    })
}
