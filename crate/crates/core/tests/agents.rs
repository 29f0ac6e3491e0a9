use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use dcgrid_core::interchange::agent::MAX_FRAMING_ERRORS;
use dcgrid_core::interchange::client::{send_set, ClientError};
use dcgrid_core::interchange::{
    decode_frame, AgentHub, Frame, HubConfig, NodeStatusMsg, StatusMode,
};
use dcgrid_core::sim::{ControlInput, ControlLink, ParamRegistry};

const TIMEOUT: Duration = Duration::from_secs(5);

fn hub(nodes: usize, command: bool) -> AgentHub {
    AgentHub::start(
        HubConfig {
            node_count: nodes,
            base_port: 0,
            command_port: command.then_some(0),
            status_interval: 1.0,
        },
        ParamRegistry::new(nodes),
    )
    .unwrap()
}

fn status(id: u32) -> NodeStatusMsg {
    NodeStatusMsg {
        node_id: id,
        soc: 42.0,
        voltage: 69.5,
        current: 1.5,
        mode: StatusMode::Idle,
    }
}

struct Peer {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Peer {
    fn connect(port: u16) -> Self {
        let s = TcpStream::connect(("127.0.0.1", port)).unwrap();
        s.set_read_timeout(Some(TIMEOUT)).unwrap();
        s.set_nodelay(true).unwrap();
        Peer {
            reader: BufReader::new(s.try_clone().unwrap()),
            writer: s,
        }
    }

    fn send(&mut self, line: &str) {
        self.writer.write_all(line.as_bytes()).unwrap();
    }

    /// Next non-STAT frame, or `None` once the agent hangs up.
    fn reply(&mut self) -> Option<Frame> {
        loop {
            let mut line = String::new();
            if self.reader.read_line(&mut line).ok()? == 0 {
                return None;
            }
            match decode_frame(&line).unwrap() {
                Frame::Stat(_) => continue,
                f => return Some(f),
            }
        }
    }

    fn stat(&mut self) -> NodeStatusMsg {
        loop {
            let mut line = String::new();
            assert!(self.reader.read_line(&mut line).unwrap() > 0, "agent hung up");
            if let Ok(Frame::Stat(s)) = decode_frame(&line) {
                return s;
            }
        }
    }
}

/// Publishes until the peer has evidently been attached.
fn publish_until_seen(hub: &AgentHub, peer: &mut Peer, id: u32) -> NodeStatusMsg {
    let statuses: Vec<_> = (0..hub.ports().len() as u32).map(status).collect();
    // Attachment is asynchronous; frames published before it are dropped.
    for _ in 0..15 {
        hub.publish(&statuses);
        std::thread::sleep(Duration::from_millis(20));
    }
    let s = peer.stat();
    assert_eq!(s.node_id, id);
    s
}

#[test]
fn second_client_is_refused_busy() {
    let hub = hub(2, false);
    let port = hub.ports()[1];
    let _first = Peer::connect(port);
    std::thread::sleep(Duration::from_millis(50));
    let mut second = Peer::connect(port);
    match second.reply() {
        Some(Frame::Err(e)) => assert_eq!(e.code, "busy"),
        other => panic!("expected busy refusal, got {other:?}"),
    }
}

#[test]
fn reconnecting_client_receives_status_again() {
    let hub = hub(3, false);
    let port = hub.ports()[2];
    {
        let mut p = Peer::connect(port);
        publish_until_seen(&hub, &mut p, 2);
    }
    std::thread::sleep(Duration::from_millis(100));
    let mut p = Peer::connect(port);
    let s = publish_until_seen(&hub, &mut p, 2);
    assert_eq!(s, status(2));
}

#[test]
fn mode_commands_reach_the_simulation() {
    let mut hub = hub(2, false);
    let mut p = Peer::connect(hub.ports()[1]);
    p.send("MODE,1,CC,12.5,charge\n");
    match p.reply() {
        Some(Frame::Ack(a)) => assert_eq!((a.ref_kind.as_str(), a.ref_id.as_str()), ("MODE", "1")),
        other => panic!("{other:?}"),
    }
    p.send("MODE,0,IDLE,0.0,none\n");
    assert!(matches!(p.reply(), Some(Frame::Err(e)) if e.code == "node"));
    let got = hub.poll(0.0);
    assert_eq!(got.len(), 1);
    assert!(matches!(got[0], ControlInput::Mode { node_id: 1, .. }));
}

#[test]
fn set_is_validated_against_the_registry() {
    let mut hub = hub(2, true);
    let cmd = hub.command_port().unwrap();
    send_set(("127.0.0.1", cmd), "env.irradiance", 400.0, TIMEOUT).unwrap();
    match send_set(("127.0.0.1", cmd), "node.9.soc", 0.5, TIMEOUT) {
        Err(ClientError::Refused { code, .. }) => assert_eq!(code, "param"),
        other => panic!("{other:?}"),
    }
    match send_set(("127.0.0.1", cmd), "no.such.path", 1.0, TIMEOUT) {
        Err(ClientError::Refused { .. }) => {}
        other => panic!("{other:?}"),
    }
    let got = hub.poll(0.0);
    assert_eq!(got.len(), 1);
    assert!(matches!(&got[0], ControlInput::Inject(c) if c.path == "env.irradiance" && c.value == 400.0));
}

#[test]
fn garbage_gets_errors_and_persistent_framing_errors_close() {
    let hub = hub(1, false);
    let mut p = Peer::connect(hub.ports()[0]);
    p.send("NOPE,1\n");
    assert!(matches!(p.reply(), Some(Frame::Err(e)) if e.code == "decode"));
    p.send("\n");
    p.send("DEAL,5,0,1,1.0,1.0,proposed\n");
    assert!(matches!(p.reply(), Some(Frame::Ack(a)) if a.ref_id == "5"));

    let bad = [0xffu8, 0xfe, b'\n'];
    for _ in 0..=MAX_FRAMING_ERRORS {
        p.writer.write_all(&bad).unwrap();
    }
    for _ in 0..=MAX_FRAMING_ERRORS {
        assert!(matches!(p.reply(), Some(Frame::Err(e)) if e.code == "framing"));
    }
    assert_eq!(p.reply(), None, "connection should close");

    // The endpoint itself survives and accepts a new client.
    std::thread::sleep(Duration::from_millis(100));
    let mut q = Peer::connect(hub.ports()[0]);
    q.send("DEAL,6,0,1,1.0,1.0,proposed\n");
    assert!(matches!(q.reply(), Some(Frame::Ack(_))));
}

#[test]
fn oversize_line_is_a_framing_error() {
    let hub = hub(1, false);
    let mut p = Peer::connect(hub.ports()[0]);
    p.send(&format!("SET,env.irradiance,{}\n", "9".repeat(4096)));
    assert!(matches!(p.reply(), Some(Frame::Err(e)) if e.code == "framing"));
    p.send("DEAL,1,0,1,1.0,1.0,proposed\n");
    assert!(matches!(p.reply(), Some(Frame::Ack(_))));
}

#[test]
fn taken_port_is_reported() {
    let first = hub(1, false);
    let port = first.ports()[0];
    let err = AgentHub::start(
        HubConfig {
            node_count: 1,
            base_port: port,
            command_port: None,
            status_interval: 1.0,
        },
        ParamRegistry::new(1),
    )
    .err()
    .expect("bind must fail");
    assert_eq!(err.port, port);
    assert!(err.to_string().contains(&port.to_string()));
}
