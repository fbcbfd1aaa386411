//! Framed control-protocol I/O over a byte stream.
//!
//! Agents and the controller talk over TCP in a deployed run and over a
//! Unix socket pair when both ends live in one process; the framing is the
//! same either way.

use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::os::unix::net::UnixStream;
use std::time::Duration;

use smartap_core::protocol::{self, ControlMessage, DecodeError, HEADER_LEN};

#[derive(Debug, thiserror::Error)]
pub enum LinkError {
    #[error("connection closed")]
    Closed,
    #[error("request timed out")]
    Timeout,
    #[error("agent disconnected")]
    Disconnected,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug)]
pub enum Stream {
    Tcp(TcpStream),
    Unix(UnixStream),
}

impl Stream {
    pub fn try_clone(&self) -> io::Result<Stream> {
        Ok(match self {
            Stream::Tcp(s) => Stream::Tcp(s.try_clone()?),
            Stream::Unix(s) => Stream::Unix(s.try_clone()?),
        })
    }

    pub fn shutdown(&self) {
        let _ = match self {
            Stream::Tcp(s) => s.shutdown(Shutdown::Both),
            Stream::Unix(s) => s.shutdown(Shutdown::Both),
        };
    }

    pub fn set_read_timeout(&self, t: Option<Duration>) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.set_read_timeout(t),
            Stream::Unix(s) => s.set_read_timeout(t),
        }
    }
}

impl Read for Stream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.read(buf),
            Stream::Unix(s) => s.read(buf),
        }
    }
}

impl Write for Stream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.write(buf),
            Stream::Unix(s) => s.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.flush(),
            Stream::Unix(s) => s.flush(),
        }
    }
}

/// Connected pair for an agent and controller in the same process.
pub fn in_process_pair() -> io::Result<(Stream, Stream)> {
    let (a, b) = UnixStream::pair()?;
    Ok((Stream::Unix(a), Stream::Unix(b)))
}

pub fn write_frame<W: Write>(w: &mut W, msg: &ControlMessage) -> Result<(), LinkError> {
    let bytes = protocol::encode(msg).map_err(|e| LinkError::Protocol(e.to_string()))?;
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Blocks until one whole frame has arrived.
pub fn read_frame<R: Read>(r: &mut R) -> Result<ControlMessage, LinkError> {
    let mut header = [0u8; HEADER_LEN];
    match r.read_exact(&mut header) {
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Err(LinkError::Closed),
        other => other?,
    }
    let len = protocol::frame_body_len(header).map_err(decode_err)?;
    let mut body = vec![0u8; len];
    match r.read_exact(&mut body) {
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Err(LinkError::Closed),
        other => other?,
    }
    protocol::decode_body(&body).map_err(decode_err)
}

fn decode_err(e: DecodeError) -> LinkError {
    LinkError::Protocol(e.to_string())
}
