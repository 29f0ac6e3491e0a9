//! Newline-delimited ASCII frames exchanged between node agents and the
//! orchestrator.
//!
//! ```text
//! STAT,<id>,<soc%>,<volts>,<amps>,<CV|CC|IDLE>
//! DEAL,<deal_id>,<from>,<to>,<amps>,<secs>,<state>
//! MODE,<id>,<CV|CC|IDLE>,<setpoint>,<charge|discharge|none>
//! SET,<path>,<value>
//! ACK,<ref_kind>,<ref_id>
//! ERR,<code>,<detail>
//! ```
//!
//! Floating-point fields are written in Rust's shortest round-trip form, so
//! `decode(encode(m)) == m` holds bit-for-bit.

use std::fmt;

use thiserror::Error;

use crate::sim::{ChargeDirection, ConverterMode};

/// Longest accepted frame, newline included.
pub const MAX_FRAME_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatusMode {
    Cv,
    Cc,
    Idle,
}

impl StatusMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StatusMode::Cv => "CV",
            StatusMode::Cc => "CC",
            StatusMode::Idle => "IDLE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeStatusMsg {
    pub node_id: u32,
    /// Percent, 0–100.
    pub soc: f64,
    pub voltage: f64,
    /// Charging-positive, A.
    pub current: f64,
    pub mode: StatusMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DealState {
    Proposed,
    Accepted,
    Active,
    Settled,
    Aborted,
}

impl DealState {
    pub fn as_str(self) -> &'static str {
        match self {
            DealState::Proposed => "proposed",
            DealState::Accepted => "accepted",
            DealState::Active => "active",
            DealState::Settled => "settled",
            DealState::Aborted => "aborted",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "proposed" => DealState::Proposed,
            "accepted" => DealState::Accepted,
            "active" => DealState::Active,
            "settled" => DealState::Settled,
            "aborted" => DealState::Aborted,
            _ => return None,
        })
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, DealState::Settled | DealState::Aborted)
    }

    /// proposed → accepted → active → settled, and any live state → aborted.
    pub fn can_become(self, next: DealState) -> bool {
        use DealState::*;
        matches!(
            (self, next),
            (Proposed, Accepted) | (Accepted, Active) | (Active, Settled)
        ) || (!self.is_terminal() && next == Aborted)
    }
}

/// A charge transfer from `from_node` (discharger) to `to_node` (charger).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DealMsg {
    pub deal_id: u64,
    pub from_node: u32,
    pub to_node: u32,
    pub current: f64,
    pub duration: f64,
    pub state: DealState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCmdMsg {
    pub node_id: u32,
    pub mode: ConverterMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetMsg {
    pub path: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AckMsg {
    pub ref_kind: String,
    pub ref_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrMsg {
    pub code: String,
    pub detail: String,
}

impl ErrMsg {
    /// Builds an error reply, flattening the detail so the frame stays on
    /// one line and within [`MAX_FRAME_LEN`].
    pub fn new(code: &str, detail: impl fmt::Display) -> Self {
        let code: String = code.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
        let budget = MAX_FRAME_LEN - "ERR,,\n".len() - code.len();
        let detail: String = detail
            .to_string()
            .chars()
            .map(|c| if c.is_ascii() && !c.is_ascii_control() { c } else { ' ' })
            .take(budget)
            .collect();
        Self { code, detail }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Stat(NodeStatusMsg),
    Deal(DealMsg),
    Mode(ModeCmdMsg),
    Set(SetMsg),
    Ack(AckMsg),
    Err(ErrMsg),
}

impl Frame {
    pub fn kind(&self) -> &'static str {
        match self {
            Frame::Stat(_) => "STAT",
            Frame::Deal(_) => "DEAL",
            Frame::Mode(_) => "MODE",
            Frame::Set(_) => "SET",
            Frame::Ack(_) => "ACK",
            Frame::Err(_) => "ERR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeErrorKind {
    Oversize,
    MissingNewline,
    NonAscii,
    UnknownKind,
    Arity { expected: usize, found: usize },
    NotNumeric,
    Invalid(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("byte {offset}: {kind}")]
pub struct DecodeError {
    pub offset: usize,
    pub kind: DecodeErrorKind,
}

impl DecodeError {
    /// Errors in the line framing itself rather than in its contents.
    pub fn is_framing(&self) -> bool {
        matches!(
            self.kind,
            DecodeErrorKind::Oversize | DecodeErrorKind::MissingNewline | DecodeErrorKind::NonAscii
        )
    }
}

impl fmt::Display for DecodeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeErrorKind::Oversize => write!(f, "frame longer than {MAX_FRAME_LEN} bytes"),
            DecodeErrorKind::MissingNewline => f.write_str("frame is not newline-terminated"),
            DecodeErrorKind::NonAscii => f.write_str("non-ASCII byte"),
            DecodeErrorKind::UnknownKind => f.write_str("unknown frame kind"),
            DecodeErrorKind::Arity { expected, found } => {
                write!(f, "wrong arity: expected {expected} fields, found {found}")
            }
            DecodeErrorKind::NotNumeric => f.write_str("field is not numeric"),
            DecodeErrorKind::Invalid(what) => write!(f, "invalid field: {what}"),
        }
    }
}

/// Serialises a frame, trailing newline included.
pub fn encode_frame(frame: &Frame) -> String {
    let body = match frame {
        Frame::Stat(m) => format!(
            "STAT,{},{:?},{:?},{:?},{}",
            m.node_id,
            m.soc,
            m.voltage,
            m.current,
            m.mode.as_str()
        ),
        Frame::Deal(m) => format!(
            "DEAL,{},{},{},{:?},{:?},{}",
            m.deal_id,
            m.from_node,
            m.to_node,
            m.current,
            m.duration,
            m.state.as_str()
        ),
        Frame::Mode(m) => match m.mode {
            ConverterMode::Cv { v_setpoint } => format!("MODE,{},CV,{:?},none", m.node_id, v_setpoint),
            ConverterMode::Cc {
                i_setpoint,
                direction,
            } => format!(
                "MODE,{},CC,{:?},{}",
                m.node_id,
                i_setpoint,
                direction.as_str()
            ),
            ConverterMode::Idle => format!("MODE,{},IDLE,0.0,none", m.node_id),
        },
        Frame::Set(m) => format!("SET,{},{:?}", m.path, m.value),
        Frame::Ack(m) => format!("ACK,{},{}", m.ref_kind, m.ref_id),
        Frame::Err(m) => format!("ERR,{},{}", m.code, m.detail),
    };
    body + "\n"
}

struct Fields<'a> {
    items: Vec<(usize, &'a str)>,
    end: usize,
}

impl<'a> Fields<'a> {
    fn split(body: &'a str, max: Option<usize>) -> Self {
        let mut items = Vec::new();
        let mut start = 0;
        for (i, b) in body.bytes().enumerate() {
            if b == b',' && max.map_or(true, |m| items.len() + 1 < m) {
                items.push((start, &body[start..i]));
                start = i + 1;
            }
        }
        items.push((start, &body[start..]));
        Self {
            items,
            end: body.len(),
        }
    }

    fn get(&self, idx: usize, expected: usize) -> Result<(usize, &'a str), DecodeError> {
        self.items.get(idx).copied().ok_or(DecodeError {
            offset: self.end,
            kind: DecodeErrorKind::Arity {
                expected,
                found: self.items.len(),
            },
        })
    }

    fn finish(&self, expected: usize) -> Result<(), DecodeError> {
        match self.items.get(expected) {
            None => Ok(()),
            Some(&(offset, _)) => Err(DecodeError {
                offset,
                kind: DecodeErrorKind::Arity {
                    expected,
                    found: self.items.len(),
                },
            }),
        }
    }

    fn float(&self, idx: usize, expected: usize) -> Result<f64, DecodeError> {
        let (offset, s) = self.get(idx, expected)?;
        match s.parse::<f64>() {
            // "inf"/"nan" parse in Rust; the protocol only carries finite values.
            Ok(v) if v.is_finite() && s.bytes().all(|b| b.is_ascii_digit() || b"+-.eE".contains(&b)) => Ok(v),
            _ => Err(DecodeError {
                offset,
                kind: DecodeErrorKind::NotNumeric,
            }),
        }
    }

    fn int<T: std::str::FromStr>(&self, idx: usize, expected: usize) -> Result<T, DecodeError> {
        let (offset, s) = self.get(idx, expected)?;
        if !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(DecodeError {
                offset,
                kind: DecodeErrorKind::NotNumeric,
            });
        }
        s.parse().map_err(|_| DecodeError {
            offset,
            kind: DecodeErrorKind::NotNumeric,
        })
    }

    fn text(&self, idx: usize, expected: usize) -> Result<(usize, &'a str), DecodeError> {
        self.get(idx, expected)
    }
}

fn invalid(offset: usize, what: &'static str) -> DecodeError {
    DecodeError {
        offset,
        kind: DecodeErrorKind::Invalid(what),
    }
}

fn is_token(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || b == b'-')
}

/// Checks length, newline termination and ASCII-ness; returns the body.
pub fn check_framing(line: &[u8]) -> Result<&str, DecodeError> {
    if line.len() > MAX_FRAME_LEN {
        return Err(DecodeError {
            offset: MAX_FRAME_LEN,
            kind: DecodeErrorKind::Oversize,
        });
    }
    let Some(body) = line.strip_suffix(b"\n") else {
        return Err(DecodeError {
            offset: line.len(),
            kind: DecodeErrorKind::MissingNewline,
        });
    };
    if let Some(pos) = body.iter().position(|b| !b.is_ascii() || *b == b'\n') {
        return Err(DecodeError {
            offset: pos,
            kind: DecodeErrorKind::NonAscii,
        });
    }
    Ok(std::str::from_utf8(body).expect("checked ASCII"))
}

/// Parses one newline-terminated frame.
pub fn decode_frame(line: &str) -> Result<Frame, DecodeError> {
    let body = check_framing(line.as_bytes())?;
    let kind_end = body.find(',').unwrap_or(body.len());
    let kind = &body[..kind_end];
    let max = match kind {
        "ERR" => Some(3),
        _ => None,
    };
    let f = Fields::split(body, max);
    let frame = match kind {
        "STAT" => {
            let n = 6;
            let node_id = f.int(1, n)?;
            let soc = f.float(2, n)?;
            if !(0.0..=100.0).contains(&soc) {
                return Err(invalid(f.items[2].0, "soc must lie in [0, 100]"));
            }
            let voltage = f.float(3, n)?;
            let current = f.float(4, n)?;
            let (off, m) = f.text(5, n)?;
            let mode = match m {
                "CV" => StatusMode::Cv,
                "CC" => StatusMode::Cc,
                "IDLE" => StatusMode::Idle,
                _ => return Err(invalid(off, "mode must be CV, CC or IDLE")),
            };
            f.finish(n)?;
            Frame::Stat(NodeStatusMsg {
                node_id,
                soc,
                voltage,
                current,
                mode,
            })
        }
        "DEAL" => {
            let n = 7;
            let deal_id = f.int(1, n)?;
            let from_node = f.int(2, n)?;
            let to_node: u32 = f.int(3, n)?;
            if from_node == to_node {
                return Err(invalid(f.items[3].0, "deal endpoints must differ"));
            }
            let current = f.float(4, n)?;
            if current <= 0.0 {
                return Err(invalid(f.items[4].0, "deal current must be > 0"));
            }
            let duration = f.float(5, n)?;
            if duration <= 0.0 {
                return Err(invalid(f.items[5].0, "deal duration must be > 0"));
            }
            let (off, s) = f.text(6, n)?;
            let state = DealState::parse(s).ok_or_else(|| invalid(off, "unknown deal state"))?;
            f.finish(n)?;
            Frame::Deal(DealMsg {
                deal_id,
                from_node,
                to_node,
                current,
                duration,
                state,
            })
        }
        "MODE" => {
            let n = 5;
            let node_id = f.int(1, n)?;
            let (mode_off, m) = f.text(2, n)?;
            let setpoint = f.float(3, n)?;
            let (dir_off, d) = f.text(4, n)?;
            let mode = match (m, d) {
                ("CV", "none") if setpoint > 0.0 => ConverterMode::Cv {
                    v_setpoint: setpoint,
                },
                ("CV", "none") => return Err(invalid(f.items[3].0, "CV setpoint must be > 0")),
                ("CC", "charge" | "discharge") if setpoint >= 0.0 => ConverterMode::Cc {
                    i_setpoint: setpoint,
                    direction: if d == "charge" {
                        ChargeDirection::Charge
                    } else {
                        ChargeDirection::Discharge
                    },
                },
                ("CC", "charge" | "discharge") => {
                    return Err(invalid(f.items[3].0, "CC setpoint must be >= 0"))
                }
                ("IDLE", "none") if setpoint == 0.0 => ConverterMode::Idle,
                ("IDLE", "none") => return Err(invalid(f.items[3].0, "IDLE setpoint must be 0")),
                ("CV" | "CC" | "IDLE", _) => {
                    return Err(invalid(dir_off, "direction does not match mode"))
                }
                _ => return Err(invalid(mode_off, "mode must be CV, CC or IDLE")),
            };
            f.finish(n)?;
            Frame::Mode(ModeCmdMsg { node_id, mode })
        }
        "SET" => {
            let n = 3;
            let (off, path) = f.text(1, n)?;
            if !is_token(path) {
                return Err(invalid(off, "path must be a dotted identifier"));
            }
            let value = f.float(2, n)?;
            f.finish(n)?;
            Frame::Set(SetMsg {
                path: path.to_string(),
                value,
            })
        }
        "ACK" => {
            let n = 3;
            let (koff, ref_kind) = f.text(1, n)?;
            let (ioff, ref_id) = f.text(2, n)?;
            if !is_token(ref_kind) {
                return Err(invalid(koff, "ref kind must be a token"));
            }
            if !is_token(ref_id) {
                return Err(invalid(ioff, "ref id must be a token"));
            }
            f.finish(n)?;
            Frame::Ack(AckMsg {
                ref_kind: ref_kind.to_string(),
                ref_id: ref_id.to_string(),
            })
        }
        "ERR" => {
            let n = 3;
            let (off, code) = f.text(1, n)?;
            if code.is_empty() || !code.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') {
                return Err(invalid(off, "error code must be alphanumeric"));
            }
            let (_, detail) = f.text(2, n)?;
            if detail.bytes().any(|b| b.is_ascii_control()) {
                return Err(invalid(f.items[2].0, "control character in detail"));
            }
            Frame::Err(ErrMsg {
                code: code.to_string(),
                detail: detail.to_string(),
            })
        }
        _ => {
            return Err(DecodeError {
                offset: 0,
                kind: DecodeErrorKind::UnknownKind,
            })
        }
    };
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_round_trip() {
        let m = Frame::Stat(NodeStatusMsg {
            node_id: 2,
            soc: 57.5,
            voltage: 100.1,
            current: -12.0,
            mode: StatusMode::Cc,
        });
        let line = encode_frame(&m);
        assert_eq!(line, "STAT,2,57.5,100.1,-12.0,CC\n");
        assert_eq!(decode_frame(&line).unwrap(), m);
    }

    #[test]
    fn deal_fields() {
        let f = decode_frame("DEAL,7,1,3,10,600,proposed\n").unwrap();
        assert_eq!(
            f,
            Frame::Deal(DealMsg {
                deal_id: 7,
                from_node: 1,
                to_node: 3,
                current: 10.0,
                duration: 600.0,
                state: DealState::Proposed,
            })
        );
    }

    #[test]
    fn bad_stat_reports_offset() {
        let err = decode_frame("STAT,2,abc\n").unwrap_err();
        assert_eq!(err.offset, 7);
        assert_eq!(err.kind, DecodeErrorKind::NotNumeric);
        let err = decode_frame("STAT,2,50\n").unwrap_err();
        assert!(matches!(err.kind, DecodeErrorKind::Arity { expected: 6, found: 3 }));
        let err = decode_frame("STAT,2,50,1,1,CV,extra\n").unwrap_err();
        assert_eq!(err.offset, 17);
    }

    #[test]
    fn framing_errors() {
        assert_eq!(
            decode_frame("STAT,1,2,3,4,CV").unwrap_err().kind,
            DecodeErrorKind::MissingNewline
        );
        let long = format!("SET,{},1\n", "a".repeat(300));
        assert!(decode_frame(&long).unwrap_err().is_framing());
        assert_eq!(
            decode_frame("NOPE,1\n").unwrap_err().kind,
            DecodeErrorKind::UnknownKind
        );
        assert!(decode_frame("SET,x,inf\n").is_err());
        assert!(decode_frame("SET,x,NaN\n").is_err());
    }

    #[test]
    fn mode_frames() {
        assert_eq!(
            decode_frame("MODE,1,CC,10,charge\n").unwrap(),
            Frame::Mode(ModeCmdMsg {
                node_id: 1,
                mode: ConverterMode::Cc {
                    i_setpoint: 10.0,
                    direction: ChargeDirection::Charge
                }
            })
        );
        assert!(decode_frame("MODE,1,CV,100,charge\n").is_err());
        assert!(decode_frame("MODE,1,CV,0,none\n").is_err());
        assert!(decode_frame("MODE,1,XX,0,none\n").is_err());
        let idle = Frame::Mode(ModeCmdMsg {
            node_id: 3,
            mode: ConverterMode::Idle,
        });
        assert_eq!(encode_frame(&idle), "MODE,3,IDLE,0.0,none\n");
    }

    #[test]
    fn err_detail_may_contain_commas() {
        let f = decode_frame("ERR,busy,node 1, already connected\n").unwrap();
        assert_eq!(
            f,
            Frame::Err(ErrMsg {
                code: "busy".into(),
                detail: "node 1, already connected".into()
            })
        );
    }

    #[test]
    fn err_constructor_fits_in_a_frame() {
        let e = ErrMsg::new("decode", "x\n".repeat(400));
        let line = encode_frame(&Frame::Err(e.clone()));
        assert!(line.len() <= MAX_FRAME_LEN);
        assert_eq!(decode_frame(&line).unwrap(), Frame::Err(e));
    }

    #[test]
    fn deal_transition_rules() {
        use DealState::*;
        assert!(Proposed.can_become(Accepted));
        assert!(Accepted.can_become(Active));
        assert!(Active.can_become(Settled));
        assert!(Proposed.can_become(Aborted));
        assert!(!Settled.can_become(Aborted));
        assert!(!Aborted.can_become(Settled));
        assert!(!Proposed.can_become(Active));
    }
}
