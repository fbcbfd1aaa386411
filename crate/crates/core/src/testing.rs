//! Proptest strategies for generating schema-valid control messages.

use alloc::string::String;
use alloc::vec::Vec;
use core::net::Ipv4Addr;

use proptest::collection::vec;
use proptest::prelude::*;

use crate::addr::{derive_bssid, ApId, Channel, MacAddr};
use crate::lvap::Lvap;
use crate::protocol::{ControlMessage, ErrorCode, Hello, MessageKind, Payload};
use crate::scan::{Observation, ScanReport, StaStats};

pub fn mac() -> impl Strategy<Value = MacAddr> {
    any::<[u8; 6]>().prop_filter("non-zero", |b| *b != [0; 6]).prop_map(MacAddr)
}

pub fn ap_id() -> impl Strategy<Value = ApId> {
    (any::<u32>(), mac()).prop_map(|(ip, mac)| ApId::new(Ipv4Addr::from(ip), mac))
}

pub fn channel() -> impl Strategy<Value = Channel> {
    (Channel::MIN..=Channel::MAX).prop_map(|n| Channel::new(n as i64).unwrap())
}

/// Finite doubles across many magnitudes, including awkward ones.
pub fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -120.0f64..0.0,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(f64::MAX),
    ]
}

fn text(max: usize) -> impl Strategy<Value = String> {
    proptest::string::string_regex(&alloc::format!("[ -~\u{e9}\u{f1}\u{4e2d}\"\\\\]{{0,{max}}}")).unwrap()
}

pub fn ssid() -> impl Strategy<Value = String> {
    // at most 32 bytes even when multi-byte chars are drawn
    text(8)
}

pub fn lvap() -> impl Strategy<Value = Lvap> {
    (mac(), ssid(), ap_id()).prop_map(|(sta, ssid, host)| Lvap { sta_mac: sta, bssid: derive_bssid(sta), ssid, host_ap: host })
}

pub fn observation() -> impl Strategy<Value = Observation> {
    (mac(), finite(), any::<u64>(), finite(), finite(), finite(), finite()).prop_map(
        |(sta, raw, packets, airtime, avg, start, end)| Observation {
            sta_mac: sta,
            raw_rssi: raw,
            stats: StaStats { sta_mac: sta, packet_count: packets, airtime, avg_rssi: avg, window_start: start, window_end: end },
        },
    )
}

pub fn scan_report() -> impl Strategy<Value = ScanReport> {
    (ap_id(), channel(), finite(), vec(observation(), 0..6))
        .prop_map(|(ap, channel, timestamp, observations)| ScanReport { ap, channel, timestamp, observations })
}

pub fn payload_for(kind: MessageKind) -> BoxedStrategy<Payload> {
    use MessageKind as K;
    match kind {
        K::Hello => (ap_id(), channel(), vec(text(12), 0..4))
            .prop_map(|(ap, channel, capabilities)| Payload::Hello(Hello { ap, channel, capabilities }))
            .boxed(),
        K::Ping | K::Pong | K::Ack => Just(Payload::Empty {}).boxed(),
        K::AddLvap => lvap().prop_map(Payload::AddLvap).boxed(),
        K::RemoveLvap => mac().prop_map(|sta_mac| Payload::RemoveLvap { sta_mac }).boxed(),
        K::SetChannel => channel().prop_map(|channel| Payload::SetChannel { channel }).boxed(),
        K::ScanRequest => (channel(), 1u32..)
            .prop_map(|(channel, duration_ms)| Payload::ScanRequest { channel, duration_ms })
            .boxed(),
        K::ScanReport => scan_report().prop_map(Payload::ScanReport).boxed(),
        K::Busy => proptest::option::of(scan_report()).prop_map(|last| Payload::Busy { last }).boxed(),
        K::Error => (
            prop_oneof![
                Just(ErrorCode::Conflict),
                Just(ErrorCode::InvalidRequest),
                Just(ErrorCode::Unavailable),
                Just(ErrorCode::Internal)
            ],
            text(40),
        )
            .prop_map(|(code, message)| Payload::Error { code, message })
            .boxed(),
    }
}

/// Any schema-valid control message.
pub fn control_message() -> impl Strategy<Value = ControlMessage> {
    proptest::sample::select(MessageKind::ALL.to_vec()).prop_flat_map(|kind| {
        (any::<u64>(), any::<u64>(), payload_for(kind)).prop_map(move |(seq, reply, payload)| ControlMessage {
            kind,
            seq,
            reply_to: if kind.is_request() { None } else { Some(reply) },
            payload,
        })
    })
}

/// A sequence of messages, used for stream-splitting tests.
pub fn message_stream() -> impl Strategy<Value = Vec<ControlMessage>> {
    vec(control_message(), 1..8)
}
