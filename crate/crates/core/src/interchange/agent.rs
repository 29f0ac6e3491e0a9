//! TCP node agents. Each node listens on `base_port + node_id`, streams STAT
//! frames to a single connected orchestrator and forwards MODE/SET frames to
//! the simulation loop as [`ControlInput`]s.
//!
//! Threads per agent: an accept loop, one reader for the live connection and
//! a writer that owns the outbound side. They talk through channels only.

use std::io::{self, ErrorKind, Read, Write};
use std::net::{Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;

use crate::sim::{ControlInput, ControlLink, InjectionCommand, ParamRegistry};

use super::codec::{
    check_framing, decode_frame, encode_frame, AckMsg, ErrMsg, Frame, NodeStatusMsg, MAX_FRAME_LEN,
};

/// Consecutive framing errors after which the connection is dropped.
pub const MAX_FRAMING_ERRORS: u32 = 10;
pub const DEFAULT_BASE_PORT: u16 = 44380;
pub const DEFAULT_COMMAND_PORT: u16 = 44379;

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Error)]
#[error("cannot listen on port {port}: {source}")]
pub struct BindError {
    pub port: u16,
    #[source]
    pub source: io::Error,
}

enum Outbound {
    Attach(TcpStream),
    Detach,
    Line(String),
}

/// What a connection is allowed to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Node(u32),
    /// Accepts SET only.
    Command,
}

struct Shared {
    role: Role,
    registry: ParamRegistry,
    inbound: Sender<ControlInput>,
    shutdown: Arc<AtomicBool>,
    busy: AtomicBool,
}

/// One listening endpoint with its threads.
struct Endpoint {
    addr: SocketAddr,
    outbound: Sender<Outbound>,
    accept: Option<JoinHandle<()>>,
    writer: Option<JoinHandle<()>>,
}

impl Endpoint {
    fn bind(port: u16, shared: Shared) -> Result<Self, BindError> {
        let listener = TcpListener::bind((Ipv4Addr::LOCALHOST, port))
            .and_then(|l| l.set_nonblocking(true).map(|_| l))
            .map_err(|source| BindError { port, source })?;
        let addr = listener.local_addr().map_err(|source| BindError { port, source })?;
        let (tx, rx) = mpsc::channel();
        let writer = thread::spawn(move || writer_loop(rx));
        let out = tx.clone();
        let accept = thread::spawn(move || accept_loop(listener, Arc::new(shared), out));
        Ok(Self {
            addr,
            outbound: tx,
            accept: Some(accept),
            writer: Some(writer),
        })
    }

    fn send(&self, line: String) {
        let _ = self.outbound.send(Outbound::Line(line));
    }

    fn join(&mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        // The writer exits once every sender is gone; ours goes with `self`.
        let (dead, _) = mpsc::channel();
        drop(std::mem::replace(&mut self.outbound, dead));
        if let Some(h) = self.writer.take() {
            let _ = h.join();
        }
    }
}

fn writer_loop(rx: Receiver<Outbound>) {
    let mut conn: Option<TcpStream> = None;
    for msg in rx {
        match msg {
            Outbound::Attach(s) => conn = Some(s),
            Outbound::Detach => conn = None,
            Outbound::Line(line) => {
                if let Some(s) = conn.as_mut() {
                    if s.write_all(line.as_bytes()).is_err() {
                        conn = None;
                    }
                }
            }
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, out: Sender<Outbound>) {
    let mut readers: Vec<JoinHandle<()>> = Vec::new();
    while !shared.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let _ = stream.set_nonblocking(false);
                // Frames are small request/reply lines; don't let Nagle hold them.
                let _ = stream.set_nodelay(true);
                if shared.busy.swap(true, Ordering::SeqCst) {
                    let who = match shared.role {
                        Role::Node(id) => format!("node {id} already has a client"),
                        Role::Command => "command port already has a client".into(),
                    };
                    let mut s = stream;
                    let _ = s.write_all(encode_frame(&Frame::Err(ErrMsg::new("busy", who))).as_bytes());
                    continue;
                }
                log::info!("{:?}: connection from {peer}", shared.role);
                let (Ok(write_half), Ok(())) = (
                    stream.try_clone(),
                    stream.set_read_timeout(Some(POLL)),
                ) else {
                    shared.busy.store(false, Ordering::SeqCst);
                    continue;
                };
                let _ = write_half.set_write_timeout(Some(Duration::from_secs(1)));
                let _ = out.send(Outbound::Attach(write_half));
                let shared = Arc::clone(&shared);
                let out = out.clone();
                readers.retain(|h| !h.is_finished());
                readers.push(thread::spawn(move || {
                    serve_connection(stream, &shared, &out);
                    let _ = out.send(Outbound::Detach);
                    shared.busy.store(false, Ordering::SeqCst);
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("{:?}: accept failed: {e}", shared.role);
                thread::sleep(POLL);
            }
        }
    }
    for h in readers {
        let _ = h.join();
    }
}

enum LineEvent {
    Line(Vec<u8>),
    Oversize,
    Idle,
    Closed,
}

/// Newline splitter that never buffers more than one frame's worth.
struct LineReader {
    stream: TcpStream,
    pending: Vec<u8>,
    overflow: bool,
}

impl LineReader {
    fn next(&mut self) -> LineEvent {
        loop {
            if let Some(pos) = self.pending.iter().position(|&b| b == b'\n') {
                let line: Vec<u8> = self.pending.drain(..=pos).collect();
                if std::mem::take(&mut self.overflow) {
                    return LineEvent::Oversize;
                }
                return LineEvent::Line(line);
            }
            if self.pending.len() > MAX_FRAME_LEN {
                self.overflow = true;
                self.pending.clear();
            }
            let mut chunk = [0u8; 512];
            match self.stream.read(&mut chunk) {
                Ok(0) => return LineEvent::Closed,
                Ok(n) => self.pending.extend_from_slice(&chunk[..n]),
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    return LineEvent::Idle
                }
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(_) => return LineEvent::Closed,
            }
        }
    }
}

fn serve_connection(stream: TcpStream, shared: &Shared, out: &Sender<Outbound>) {
    let mut reader = LineReader {
        stream,
        pending: Vec::new(),
        overflow: false,
    };
    let reply = |frame: Frame| {
        let _ = out.send(Outbound::Line(encode_frame(&frame)));
    };
    let mut framing_errors = 0u32;
    loop {
        if shared.shutdown.load(Ordering::SeqCst) {
            return;
        }
        let line = match reader.next() {
            LineEvent::Idle => continue,
            LineEvent::Closed => return,
            LineEvent::Oversize => {
                framing_errors += 1;
                reply(Frame::Err(ErrMsg::new(
                    "framing",
                    format!("frame longer than {MAX_FRAME_LEN} bytes"),
                )));
                if framing_errors > MAX_FRAMING_ERRORS {
                    return;
                }
                continue;
            }
            LineEvent::Line(l) => l,
        };
        let text = match check_framing(&line) {
            Ok(t) => t,
            Err(e) => {
                framing_errors += 1;
                reply(Frame::Err(ErrMsg::new("framing", e)));
                if framing_errors > MAX_FRAMING_ERRORS {
                    return;
                }
                continue;
            }
        };
        framing_errors = 0;
        let body = text.trim_end_matches('\r');
        if body.trim().is_empty() {
            continue;
        }
        let frame = match decode_frame(&format!("{body}\n")) {
            Ok(f) => f,
            Err(e) => {
                reply(Frame::Err(ErrMsg::new("decode", e)));
                continue;
            }
        };
        reply(handle_frame(frame, shared));
    }
}

fn ack(kind: &str, id: impl ToString) -> Frame {
    Frame::Ack(AckMsg {
        ref_kind: kind.to_string(),
        ref_id: id.to_string(),
    })
}

fn handle_frame(frame: Frame, shared: &Shared) -> Frame {
    match (frame, shared.role) {
        (Frame::Mode(m), Role::Node(id)) => {
            if m.node_id != id {
                return Frame::Err(ErrMsg::new(
                    "node",
                    format!("this port serves node {id}, not {}", m.node_id),
                ));
            }
            let _ = shared.inbound.send(ControlInput::Mode {
                node_id: id as usize,
                mode: m.mode,
            });
            ack("MODE", id)
        }
        (Frame::Set(s), _) => match shared.registry.validate(&s.path, s.value) {
            Ok(_) => {
                let _ = shared.inbound.send(ControlInput::Inject(InjectionCommand {
                    path: s.path.clone(),
                    value: s.value,
                    apply_at: 0.0,
                }));
                ack("SET", s.path)
            }
            Err(e) => Frame::Err(ErrMsg::new("param", e)),
        },
        (Frame::Deal(d), Role::Node(_)) => ack("DEAL", d.deal_id),
        (other, _) => Frame::Err(ErrMsg::new(
            "unexpected",
            format!("{} frames are not accepted here", other.kind()),
        )),
    }
}

/// Listener configuration for [`AgentHub::start`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubConfig {
    pub node_count: usize,
    /// 0 binds every endpoint to an ephemeral port.
    pub base_port: u16,
    pub command_port: Option<u16>,
    /// s of simulated time between STAT frames.
    pub status_interval: f64,
}

/// The set of node agents (plus an optional command port) attached to a run.
pub struct AgentHub {
    nodes: Vec<Endpoint>,
    command: Option<Endpoint>,
    inbound: Receiver<ControlInput>,
    shutdown: Arc<AtomicBool>,
    status_interval: f64,
}

impl AgentHub {
    pub fn start(cfg: HubConfig, registry: ParamRegistry) -> Result<Self, BindError> {
        let shutdown = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel();
        let shared = |role| Shared {
            role,
            registry,
            inbound: tx.clone(),
            shutdown: Arc::clone(&shutdown),
            busy: AtomicBool::new(false),
        };
        let mut hub = Self {
            nodes: Vec::new(),
            command: None,
            inbound: rx,
            shutdown: Arc::clone(&shutdown),
            status_interval: cfg.status_interval,
        };
        for id in 0..cfg.node_count {
            let port = if cfg.base_port == 0 {
                0
            } else {
                let port = cfg.base_port as usize + id;
                u16::try_from(port).map_err(|_| BindError {
                    port: u16::MAX,
                    source: io::Error::new(ErrorKind::InvalidInput, "port out of range"),
                })?
            };
            // On error `hub` drops and stops the endpoints bound so far.
            hub.nodes.push(Endpoint::bind(port, shared(Role::Node(id as u32)))?);
        }
        if let Some(port) = cfg.command_port {
            hub.command = Some(Endpoint::bind(port, shared(Role::Command))?);
        }
        Ok(hub)
    }

    /// Bound node ports, indexed by node id.
    pub fn ports(&self) -> Vec<u16> {
        self.nodes.iter().map(|e| e.addr.port()).collect()
    }

    pub fn command_port(&self) -> Option<u16> {
        self.command.as_ref().map(|e| e.addr.port())
    }

    pub fn publish(&self, statuses: &[NodeStatusMsg]) {
        for s in statuses {
            if let Some(ep) = self.nodes.get(s.node_id as usize) {
                ep.send(encode_frame(&Frame::Stat(*s)));
            }
        }
    }

    pub fn shutdown(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        for ep in self.nodes.iter_mut().chain(self.command.as_mut()) {
            ep.join();
        }
    }
}

impl Drop for AgentHub {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl ControlLink for AgentHub {
    fn status_interval(&self) -> f64 {
        self.status_interval
    }

    fn poll(&mut self, _t: f64) -> Vec<ControlInput> {
        self.inbound.try_iter().collect()
    }

    fn exchange(&mut self, _t: f64, statuses: &[NodeStatusMsg]) -> Vec<ControlInput> {
        self.publish(statuses);
        Vec::new()
    }
}
