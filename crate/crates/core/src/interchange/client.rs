//! Small blocking client helpers for talking to agents and the command port.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use thiserror::Error;

use super::codec::{decode_frame, encode_frame, DecodeError, Frame, SetMsg};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connection failed: {0}")]
    Io(#[from] io::Error),
    #[error("bad reply: {0}")]
    Decode(#[from] DecodeError),
    #[error("server refused: {code}: {detail}")]
    Refused { code: String, detail: String },
    #[error("connection closed before a reply arrived")]
    NoReply,
}

/// A line-framed connection.
pub struct FrameConn {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl FrameConn {
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self, ClientError> {
        let mut last = None;
        for a in addr.to_socket_addrs()? {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(s) => {
                    s.set_read_timeout(Some(timeout))?;
                    s.set_nodelay(true)?;
                    let writer = s.try_clone()?;
                    return Ok(Self {
                        reader: BufReader::new(s),
                        writer,
                    });
                }
                Err(e) => last = Some(e),
            }
        }
        Err(last
            .unwrap_or_else(|| io::Error::new(io::ErrorKind::NotFound, "no address"))
            .into())
    }

    pub fn send(&mut self, frame: &Frame) -> Result<(), ClientError> {
        self.send_raw(encode_frame(frame).as_bytes())
    }

    pub fn send_raw(&mut self, bytes: &[u8]) -> Result<(), ClientError> {
        self.writer.write_all(bytes)?;
        Ok(())
    }

    /// Next frame from the server; `Ok(None)` on orderly close.
    pub fn recv(&mut self) -> Result<Option<Frame>, ClientError> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        Ok(Some(decode_frame(&line)?))
    }
}

/// Sends `SET,<path>,<value>` and waits for the matching ACK or an ERR.
pub fn send_set(
    addr: impl ToSocketAddrs,
    path: &str,
    value: f64,
    timeout: Duration,
) -> Result<(), ClientError> {
    let mut conn = FrameConn::connect(addr, timeout)?;
    conn.send(&Frame::Set(SetMsg {
        path: path.to_string(),
        value,
    }))?;
    loop {
        match conn.recv()? {
            Some(Frame::Ack(a)) if a.ref_kind == "SET" => return Ok(()),
            Some(Frame::Err(e)) => {
                return Err(ClientError::Refused {
                    code: e.code,
                    detail: e.detail,
                })
            }
            Some(_) => continue,
            None => return Err(ClientError::NoReply),
        }
    }
}
