//! Event log records. One JSON object per line, tagged by `event`.

use alloc::string::String;
use alloc::vec::Vec;
use core::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::addr::MacAddr;
use crate::assignment::HandoffReason;
use crate::params::ParamName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoffOutcome {
    Committed,
    /// Target acked, source never confirmed the removal.
    CommittedWithWarning,
    Failed,
    /// Refused before any message was sent.
    Rejected,
}

impl HandoffOutcome {
    pub fn is_committed(self) -> bool {
        matches!(self, HandoffOutcome::Committed | HandoffOutcome::CommittedWithWarning)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCellRecord {
    pub ap: Ipv4Addr,
    pub sta: MacAddr,
    pub rssi: f64,
    pub staleness: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    /// Closes iteration `iteration`; everything logged with the same counter precedes it.
    Iteration {
        iteration: u64,
        sim_time: f64,
        wall_ms: f64,
        scan_interval: f64,
        alpha: f64,
        agents: usize,
        reports: usize,
        stations: usize,
        handoffs: usize,
        associations: usize,
    },
    AgentConnected {
        iteration: u64,
        ap: Ipv4Addr,
        mac: MacAddr,
        channel: u8,
    },
    AgentDisconnected {
        iteration: u64,
        ap: Ipv4Addr,
        reason: String,
    },
    LvapAdded {
        iteration: u64,
        ap: Ipv4Addr,
        sta: MacAddr,
        bssid: MacAddr,
    },
    LvapRemoved {
        iteration: u64,
        ap: Ipv4Addr,
        sta: MacAddr,
        acked: bool,
    },
    Association {
        iteration: u64,
        sta: MacAddr,
        bssid: MacAddr,
        ap: Ipv4Addr,
    },
    Disassociation {
        iteration: u64,
        sta: MacAddr,
        ap: Ipv4Addr,
    },
    Handoff {
        iteration: u64,
        sta: MacAddr,
        bssid: MacAddr,
        source: Ipv4Addr,
        target: Ipv4Addr,
        reason: HandoffReason,
        outcome: HandoffOutcome,
    },
    ChannelChange {
        iteration: u64,
        ap: Ipv4Addr,
        channel: u8,
        ok: bool,
    },
    ParamApplied {
        iteration: u64,
        name: ParamName,
        value: f64,
    },
    ApiMutation {
        iteration: u64,
        action: String,
        detail: serde_json::Value,
    },
    Matrix {
        iteration: u64,
        sim_time: f64,
        cells: Vec<MatrixCellRecord>,
    },
}

impl Event {
    pub fn iteration(&self) -> u64 {
        match self {
            Event::Iteration { iteration, .. }
            | Event::AgentConnected { iteration, .. }
            | Event::AgentDisconnected { iteration, .. }
            | Event::LvapAdded { iteration, .. }
            | Event::LvapRemoved { iteration, .. }
            | Event::Association { iteration, .. }
            | Event::Disassociation { iteration, .. }
            | Event::Handoff { iteration, .. }
            | Event::ChannelChange { iteration, .. }
            | Event::ParamApplied { iteration, .. }
            | Event::ApiMutation { iteration, .. }
            | Event::Matrix { iteration, .. } => *iteration,
        }
    }

    /// Zeroes wall-clock fields so runs can be compared for reproducibility.
    pub fn without_timing(&self) -> Self {
        let mut e = self.clone();
        if let Event::Iteration { wall_ms, .. } = &mut e {
            *wall_ms = 0.0;
        }
        e
    }
}
