//! Command handling state of a single simulated AP.
//!
//! This is the transport-free half of an agent: its LVAP table, serving
//! channel and scan bookkeeping. A scan is split into `begin_scan` and
//! `finish_scan` so a runtime can keep answering commands while the radio
//! dwells on a channel; a second scan request in that window is refused with
//! the cached result of the previous scan.

use crate::addr::{ApId, Channel, MacAddr};
use crate::lvap::{Lvap, LvapConflict, LvapTable};
use crate::radio::{RadioEnv, RadioError};
use crate::scan::ScanReport;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Conflict(#[from] LvapConflict),
    #[error("scan already in progress")]
    Busy { last: Option<ScanReport> },
    #[error("no scan in progress")]
    NotScanning,
    #[error(transparent)]
    Radio(#[from] RadioError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanTicket {
    pub channel: Channel,
    pub started_at: f64,
    pub duration: f64,
}

#[derive(Debug, Clone)]
pub struct AgentCore {
    id: ApId,
    channel: Channel,
    lvaps: LvapTable,
    scanning: Option<ScanTicket>,
    last_scan: Option<ScanReport>,
}

impl AgentCore {
    pub fn new(id: ApId, channel: Channel) -> Self {
        AgentCore { id, channel, lvaps: LvapTable::new(), scanning: None, last_scan: None }
    }

    pub fn id(&self) -> ApId {
        self.id
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn lvaps(&self) -> &LvapTable {
        &self.lvaps
    }

    pub fn hosts(&self, sta: MacAddr) -> bool {
        self.lvaps.contains(sta)
    }

    pub fn is_scanning(&self) -> bool {
        self.scanning.is_some()
    }

    pub fn last_scan(&self) -> Option<&ScanReport> {
        self.last_scan.as_ref()
    }

    pub fn handle_add_lvap(&mut self, lvap: Lvap) -> Result<(), AgentError> {
        Ok(self.lvaps.add(lvap)?)
    }

    pub fn handle_remove_lvap(&mut self, sta: MacAddr) -> Option<Lvap> {
        self.lvaps.remove(sta)
    }

    /// Returns whether the serving channel actually changed.
    pub fn handle_set_channel(&mut self, channel: Channel) -> bool {
        let changed = self.channel != channel;
        self.channel = channel;
        changed
    }

    pub fn begin_scan(&mut self, channel: Channel, duration: f64, now: f64) -> Result<ScanTicket, AgentError> {
        if self.scanning.is_some() {
            return Err(AgentError::Busy { last: self.last_scan.clone() });
        }
        let ticket = ScanTicket { channel, started_at: now, duration };
        self.scanning = Some(ticket);
        Ok(ticket)
    }

    /// Completes the scan started by `begin_scan`, caching the report.
    pub fn finish_scan(&mut self, env: &RadioEnv) -> Result<ScanReport, AgentError> {
        let ticket = self.scanning.take().ok_or(AgentError::NotScanning)?;
        let report = ScanReport::collect(env, self.id, ticket.channel, ticket.started_at, ticket.duration)?;
        self.last_scan = Some(report.clone());
        Ok(report)
    }

    /// Abandons an in-flight scan without touching the cache.
    pub fn abort_scan(&mut self) {
        self.scanning = None;
    }

    /// Sequential scan: begin and finish in one step.
    pub fn perform_scan(
        &mut self,
        env: &RadioEnv,
        channel: Channel,
        duration: f64,
        now: f64,
    ) -> Result<ScanReport, AgentError> {
        self.begin_scan(channel, duration, now)?;
        self.finish_scan(env)
    }
}
