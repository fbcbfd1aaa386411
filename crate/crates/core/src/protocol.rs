//! Controller/agent message vocabulary and its frame codec.
//!
//! A frame is a 4-byte big-endian body length followed by a JSON body with a
//! fixed field order:
//!
//! ```text
//! {"kind":"ADD_LVAP","seq":7,"reply_to":null,"payload":{...}}
//! ```
//!
//! Requests carry `reply_to: null`; every response names the `seq` of the
//! request it terminates. `seq` counts up independently in each direction.

use alloc::string::String;
use alloc::vec::Vec;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::addr::{ApId, Channel, MacAddr};
use crate::lvap::Lvap;
use crate::scan::ScanReport;

/// Upper bound on a frame body. Anything larger is treated as corruption.
pub const MAX_FRAME_LEN: usize = 1 << 20;
pub const HEADER_LEN: usize = 4;
pub const MAX_SSID_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Hello,
    Ping,
    Pong,
    AddLvap,
    RemoveLvap,
    SetChannel,
    ScanRequest,
    ScanReport,
    Busy,
    Ack,
    Error,
}

impl MessageKind {
    pub const ALL: [MessageKind; 11] = [
        MessageKind::Hello,
        MessageKind::Ping,
        MessageKind::Pong,
        MessageKind::AddLvap,
        MessageKind::RemoveLvap,
        MessageKind::SetChannel,
        MessageKind::ScanRequest,
        MessageKind::ScanReport,
        MessageKind::Busy,
        MessageKind::Ack,
        MessageKind::Error,
    ];

    pub fn is_request(self) -> bool {
        matches!(
            self,
            MessageKind::Hello
                | MessageKind::Ping
                | MessageKind::AddLvap
                | MessageKind::RemoveLvap
                | MessageKind::SetChannel
                | MessageKind::ScanRequest
        )
    }

    /// Whether `response` may terminate a request of this kind.
    pub fn accepts_response(self, response: MessageKind) -> bool {
        use MessageKind::*;
        match self {
            Ping => matches!(response, Pong | Error),
            ScanRequest => matches!(response, ScanReport | Busy | Error),
            Hello | AddLvap | RemoveLvap | SetChannel => matches!(response, Ack | Error),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Conflict,
    InvalidRequest,
    Unavailable,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub ap: ApId,
    pub channel: Channel,
    pub capabilities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Hello(Hello),
    AddLvap(Lvap),
    RemoveLvap {
        sta_mac: MacAddr,
    },
    SetChannel {
        channel: Channel,
    },
    ScanRequest {
        channel: Channel,
        duration_ms: u32,
    },
    ScanReport(ScanReport),
    Busy {
        last: Option<ScanReport>,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
    Empty {},
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlMessage {
    pub kind: MessageKind,
    pub seq: u64,
    pub reply_to: Option<u64>,
    pub payload: Payload,
}

impl ControlMessage {
    pub fn request(kind: MessageKind, seq: u64, payload: Payload) -> Self {
        ControlMessage { kind, seq, reply_to: None, payload }
    }

    pub fn response(kind: MessageKind, seq: u64, reply_to: u64, payload: Payload) -> Self {
        ControlMessage { kind, seq, reply_to: Some(reply_to), payload }
    }

    pub fn hello(seq: u64, hello: Hello) -> Self {
        Self::request(MessageKind::Hello, seq, Payload::Hello(hello))
    }

    pub fn ping(seq: u64) -> Self {
        Self::request(MessageKind::Ping, seq, Payload::Empty {})
    }

    pub fn add_lvap(seq: u64, lvap: Lvap) -> Self {
        Self::request(MessageKind::AddLvap, seq, Payload::AddLvap(lvap))
    }

    pub fn remove_lvap(seq: u64, sta_mac: MacAddr) -> Self {
        Self::request(MessageKind::RemoveLvap, seq, Payload::RemoveLvap { sta_mac })
    }

    pub fn set_channel(seq: u64, channel: Channel) -> Self {
        Self::request(MessageKind::SetChannel, seq, Payload::SetChannel { channel })
    }

    pub fn scan_request(seq: u64, channel: Channel, duration_ms: u32) -> Self {
        Self::request(MessageKind::ScanRequest, seq, Payload::ScanRequest { channel, duration_ms })
    }

    pub fn pong(seq: u64, reply_to: u64) -> Self {
        Self::response(MessageKind::Pong, seq, reply_to, Payload::Empty {})
    }

    pub fn ack(seq: u64, reply_to: u64) -> Self {
        Self::response(MessageKind::Ack, seq, reply_to, Payload::Empty {})
    }

    pub fn scan_report(seq: u64, reply_to: u64, report: ScanReport) -> Self {
        Self::response(MessageKind::ScanReport, seq, reply_to, Payload::ScanReport(report))
    }

    pub fn busy(seq: u64, reply_to: u64, last: Option<ScanReport>) -> Self {
        Self::response(MessageKind::Busy, seq, reply_to, Payload::Busy { last })
    }

    pub fn error(seq: u64, reply_to: u64, code: ErrorCode, message: impl Into<String>) -> Self {
        Self::response(MessageKind::Error, seq, reply_to, Payload::Error { code, message: message.into() })
    }

    /// Checks the payload against the schema for `kind`.
    pub fn validate(&self) -> Result<(), SchemaError> {
        use MessageKind as K;
        match (self.kind.is_request(), self.reply_to) {
            (true, Some(_)) => return Err(SchemaError::UnexpectedReplyTo(self.kind)),
            (false, None) => return Err(SchemaError::MissingReplyTo(self.kind)),
            _ => {}
        }
        match (self.kind, &self.payload) {
            (K::Hello, Payload::Hello(h)) => {
                if h.ap.mac.is_zero() {
                    return Err(SchemaError::Field("ap.mac"));
                }
            }
            (K::Ping | K::Pong | K::Ack, Payload::Empty {}) => {}
            (K::AddLvap, Payload::AddLvap(l)) => {
                if l.bssid.is_zero() {
                    return Err(SchemaError::Field("bssid"));
                }
                if l.bssid.is_multicast() {
                    return Err(SchemaError::Field("bssid"));
                }
                if l.sta_mac.is_zero() {
                    return Err(SchemaError::Field("sta_mac"));
                }
                if l.ssid.len() > MAX_SSID_LEN {
                    return Err(SchemaError::Field("ssid"));
                }
            }
            (K::RemoveLvap, Payload::RemoveLvap { sta_mac }) => {
                if sta_mac.is_zero() {
                    return Err(SchemaError::Field("sta_mac"));
                }
            }
            (K::SetChannel, Payload::SetChannel { .. }) => {}
            (K::ScanRequest, Payload::ScanRequest { duration_ms, .. }) => {
                if *duration_ms == 0 {
                    return Err(SchemaError::Field("duration_ms"));
                }
            }
            (K::ScanReport, Payload::ScanReport(r)) => check_report(r)?,
            (K::Busy, Payload::Busy { last }) => {
                if let Some(r) = last {
                    check_report(r)?;
                }
            }
            (K::Error, Payload::Error { .. }) => {}
            (kind, _) => return Err(SchemaError::PayloadMismatch(kind)),
        }
        Ok(())
    }
}

fn check_report(r: &ScanReport) -> Result<(), SchemaError> {
    if !r.timestamp.is_finite() {
        return Err(SchemaError::Field("timestamp"));
    }
    for o in &r.observations {
        let s = &o.stats;
        let finite = [o.raw_rssi, s.airtime, s.avg_rssi, s.window_start, s.window_end].iter().all(|v| v.is_finite());
        if !finite {
            return Err(SchemaError::Field("observations"));
        }
        if s.sta_mac != o.sta_mac {
            return Err(SchemaError::Field("observations.stats.sta_mac"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("payload does not match kind {0:?}")]
    PayloadMismatch(MessageKind),
    #[error("request {0:?} must not carry reply_to")]
    UnexpectedReplyTo(MessageKind),
    #[error("response {0:?} must carry reply_to")]
    MissingReplyTo(MessageKind),
    #[error("invalid or missing field `{0}`")]
    Field(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("frame body of {0} bytes exceeds limit")]
    TooLarge(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    /// Not enough bytes for a whole frame yet.
    #[error("need {needed} more bytes")]
    Incomplete { needed: usize },
    /// The stream is corrupt and the connection should be dropped.
    #[error("protocol error: {0}")]
    Protocol(String),
}

#[derive(Serialize)]
struct WireOut<'a> {
    kind: MessageKind,
    seq: u64,
    reply_to: Option<u64>,
    payload: &'a Payload,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireIn {
    kind: MessageKind,
    seq: u64,
    reply_to: Option<u64>,
    payload: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyBody {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StaBody {
    sta_mac: MacAddr,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelBody {
    channel: Channel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanRequestBody {
    channel: Channel,
    duration_ms: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BusyBody {
    last: Option<ScanReport>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ErrorBody {
    code: ErrorCode,
    message: String,
}

/// Serialises `msg` into one complete frame.
pub fn encode(msg: &ControlMessage) -> Result<Vec<u8>, EncodeError> {
    msg.validate()?;
    let wire = WireOut { kind: msg.kind, seq: msg.seq, reply_to: msg.reply_to, payload: &msg.payload };
    // every payload type serialises; only non-finite floats could fail and validate() rejects those
    let body = serde_json::to_vec(&wire).expect("in-memory JSON serialisation");
    if body.len() > MAX_FRAME_LEN {
        return Err(EncodeError::TooLarge(body.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Body length announced by a frame header.
pub fn frame_body_len(header: [u8; HEADER_LEN]) -> Result<usize, DecodeError> {
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_LEN {
        return Err(DecodeError::Protocol(alloc::format!("frame length {len} exceeds limit")));
    }
    Ok(len)
}

/// Decodes the first frame in `buf`, returning the message and the number
/// of bytes it occupied.
pub fn decode(buf: &[u8]) -> Result<(ControlMessage, usize), DecodeError> {
    if buf.len() < HEADER_LEN {
        return Err(DecodeError::Incomplete { needed: HEADER_LEN - buf.len() });
    }
    let len = frame_body_len([buf[0], buf[1], buf[2], buf[3]])?;
    let total = HEADER_LEN + len;
    if buf.len() < total {
        return Err(DecodeError::Incomplete { needed: total - buf.len() });
    }
    Ok((decode_body(&buf[HEADER_LEN..total])?, total))
}

/// Decodes a frame body whose header has already been consumed.
pub fn decode_body(body: &[u8]) -> Result<ControlMessage, DecodeError> {
    let wire: WireIn = serde_json::from_slice(body).map_err(protocol)?;
    let payload = match wire.kind {
        MessageKind::Hello => Payload::Hello(from_value(wire.payload)?),
        MessageKind::Ping | MessageKind::Pong | MessageKind::Ack => {
            let EmptyBody {} = from_value(wire.payload)?;
            Payload::Empty {}
        }
        MessageKind::AddLvap => Payload::AddLvap(from_value(wire.payload)?),
        MessageKind::RemoveLvap => {
            let b: StaBody = from_value(wire.payload)?;
            Payload::RemoveLvap { sta_mac: b.sta_mac }
        }
        MessageKind::SetChannel => {
            let b: ChannelBody = from_value(wire.payload)?;
            Payload::SetChannel { channel: b.channel }
        }
        MessageKind::ScanRequest => {
            let b: ScanRequestBody = from_value(wire.payload)?;
            Payload::ScanRequest { channel: b.channel, duration_ms: b.duration_ms }
        }
        MessageKind::ScanReport => Payload::ScanReport(from_value(wire.payload)?),
        MessageKind::Busy => {
            let b: BusyBody = from_value(wire.payload)?;
            Payload::Busy { last: b.last }
        }
        MessageKind::Error => {
            let b: ErrorBody = from_value(wire.payload)?;
            Payload::Error { code: b.code, message: b.message }
        }
    };
    let msg = ControlMessage { kind: wire.kind, seq: wire.seq, reply_to: wire.reply_to, payload };
    msg.validate().map_err(protocol)?;
    Ok(msg)
}

fn from_value<T: DeserializeOwned>(v: Value) -> Result<T, DecodeError> {
    serde_json::from_value(v).map_err(protocol)
}

fn protocol(e: impl core::fmt::Display) -> DecodeError {
    DecodeError::Protocol(alloc::format!("{e}"))
}

/// Tracks outstanding requests on one side of a link and checks that
/// responses pair up with them.
#[derive(Debug, Default)]
pub struct RequestTracker {
    next_seq: u64,
    last_seen_seq: Option<u64>,
    outstanding: alloc::collections::BTreeMap<u64, MessageKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PairingError {
    #[error("incoming seq {got} does not increase past {last}")]
    NonIncreasingSeq { last: u64, got: u64 },
    #[error("response to unknown request {0}")]
    UnknownRequest(u64),
    #[error("{response:?} cannot answer {request:?}")]
    WrongResponse { request: MessageKind, response: MessageKind },
}

impl RequestTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocates the next outgoing sequence number.
    pub fn next_seq(&mut self) -> u64 {
        self.next_seq += 1;
        self.next_seq
    }

    pub fn sent_request(&mut self, seq: u64, kind: MessageKind) {
        self.outstanding.insert(seq, kind);
    }

    /// Checks an incoming message. For a response, returns the kind of the
    /// request it terminates.
    pub fn received(&mut self, msg: &ControlMessage) -> Result<Option<MessageKind>, PairingError> {
        if let Some(last) = self.last_seen_seq {
            if msg.seq <= last {
                return Err(PairingError::NonIncreasingSeq { last, got: msg.seq });
            }
        }
        self.last_seen_seq = Some(msg.seq);
        let Some(req) = msg.reply_to else { return Ok(None) };
        let kind = self.outstanding.remove(&req).ok_or(PairingError::UnknownRequest(req))?;
        if !kind.accepts_response(msg.kind) {
            return Err(PairingError::WrongResponse { request: kind, response: msg.kind });
        }
        Ok(Some(kind))
    }

    /// Drops a request that will never be answered (timed out).
    pub fn forget(&mut self, seq: u64) -> Option<MessageKind> {
        self.outstanding.remove(&seq)
    }

    pub fn outstanding(&self) -> usize {
        self.outstanding.len()
    }
}
