//! The selection loop.
//!
//! One call to [`Engine::run_iteration`] is one pass of the loop:
//!
//! 1. operator commands queued since the last pass (channel changes, manual
//!    handoffs) are executed;
//! 2. every connected agent is asked to scan its serving channel, in
//!    parallel;
//! 3. the reports are folded into the attenuation matrix;
//! 4. the assignment is recomputed and new stations are associated and
//!    handoffs executed;
//! 5. the results are published to the gateway;
//! 6. queued parameter changes are applied, so they take effect from the
//!    next pass on.
//!
//! A handoff adds the LVAP on the target before removing it from the source.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use smartap_core::events::{Event, HandoffOutcome, MatrixCellRecord};
use smartap_core::protocol::{ControlMessage, MessageKind, Payload};
use smartap_core::{
    compute_assignment, derive_bssid, ApId, Assignment, AttenuationMatrix, HandoffCommand, HandoffReason, Lvap,
    MacAddr, Parameters, ScanReport,
};

use crate::controller::{AgentLink, ConnectionEvent, Controller, PendingReply, DEFAULT_REQUEST_TIMEOUT};
use crate::eventlog::EventLog;
use crate::gateway::{self, AgentRecord, ClientRecord, Gateway, ManualCommand, MatrixCellView, MatrixSnapshot, StationRecord, StatsRecord};
use crate::link::LinkError;
use crate::world::World;

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub ssid: String,
    pub request_timeout: Duration,
    /// Also log a matrix snapshot each iteration.
    pub log_matrix: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { ssid: "smartap".into(), request_timeout: DEFAULT_REQUEST_TIMEOUT, log_matrix: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandoffResult {
    pub sta: MacAddr,
    pub source: ApId,
    pub target: ApId,
    pub reason: HandoffReason,
    pub outcome: HandoffOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationSummary {
    pub iteration: u64,
    pub sim_time: f64,
    pub wall: Duration,
    /// Parameters in force for this iteration.
    pub params: Parameters,
    pub agents: usize,
    pub reports: usize,
    pub busy: usize,
    pub handoffs: Vec<HandoffResult>,
    pub associations: Vec<(MacAddr, ApId)>,
    pub disassociations: Vec<MacAddr>,
}

/// Called once the scan requests are on the wire and before replies are
/// collected, with the iteration number.
pub type ScanHook = Box<dyn FnMut(u64) + Send>;

pub struct Engine {
    ctl: Arc<Controller>,
    gw: Arc<Gateway>,
    world: World,
    log: Arc<EventLog>,
    cfg: EngineConfig,
    params: Parameters,
    matrix: AttenuationMatrix,
    assignment: Assignment,
    lvaps: BTreeMap<MacAddr, Lvap>,
    clients: BTreeMap<MacAddr, ClientRecord>,
    last_scans: BTreeMap<Ipv4Addr, ScanReport>,
    known_agents: BTreeSet<Ipv4Addr>,
    iteration: u64,
    scan_hook: Option<ScanHook>,
}

impl Engine {
    /// Initializes the loop state and publishes the starting parameters.
    pub fn new(
        ctl: Arc<Controller>,
        gw: Arc<Gateway>,
        world: World,
        log: Arc<EventLog>,
        params: Parameters,
        cfg: EngineConfig,
    ) -> Self {
        let e = Engine {
            ctl,
            gw,
            world,
            log,
            cfg,
            params,
            matrix: AttenuationMatrix::new(),
            assignment: Assignment::new(),
            lvaps: BTreeMap::new(),
            clients: BTreeMap::new(),
            last_scans: BTreeMap::new(),
            known_agents: BTreeSet::new(),
            iteration: 0,
            scan_hook: None,
        };
        e.publish_params();
        e
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn matrix(&self) -> &AttenuationMatrix {
        &self.matrix
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn lvap(&self, sta: MacAddr) -> Option<&Lvap> {
        self.lvaps.get(&sta)
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn set_scan_hook(&mut self, hook: Option<ScanHook>) {
        self.scan_hook = hook;
    }

    fn emit(&self, ev: Event) {
        self.log.record(ev);
    }

    fn timeout(&self) -> Duration {
        self.cfg.request_timeout
    }

    pub fn run_iteration(&mut self) -> IterationSummary {
        let started = Instant::now();
        self.iteration += 1;
        let it = self.iteration;
        let now = self.world.now();
        let params = self.params.clone();

        self.track_connections();

        let mut handoffs = Vec::new();
        for cmd in self.gw.drain_commands() {
            if let Some(h) = self.execute_manual(cmd) {
                handoffs.push(h);
            }
        }

        let (reports, busy) = self.collect_scans(&params);
        let agents = self.ctl.connected();
        let connected: BTreeSet<ApId> = agents.iter().map(|l| l.id()).collect();

        self.matrix = self.matrix.updated(&reports, params.alpha, params.stale_scans_limit, now);
        for r in &reports {
            for o in &r.observations {
                let c = self.clients.entry(o.sta_mac).or_insert(ClientRecord {
                    mac: o.sta_mac,
                    bssid: derive_bssid(o.sta_mac),
                    first_seen: now,
                    last_seen: now,
                    connected: false,
                });
                c.last_seen = now;
            }
            self.last_scans.insert(r.ap.ip, r.clone());
        }

        let heard = self.matrix.stations();
        let lost: Vec<MacAddr> = self.assignment.iter().map(|(s, _)| s).filter(|s| !heard.contains(s)).collect();
        for &sta in &lost {
            self.disassociate(sta);
        }

        let outcome = compute_assignment(&self.matrix.restricted_to(&connected), &self.assignment, &params);
        let mut associations = Vec::new();
        for &(sta, ap) in &outcome.associations {
            if self.associate(sta, ap) {
                associations.push((sta, ap));
            }
        }
        for cmd in &outcome.handoffs {
            handoffs.push(self.execute_handoff(*cmd));
        }

        self.publish(&agents);

        for change in self.gw.drain_param_changes() {
            if self.params.set(change.name, change.value).is_ok() {
                self.emit(Event::ParamApplied { iteration: it, name: change.name, value: change.value });
            }
        }
        self.publish_params();

        if self.cfg.log_matrix {
            let cells = self
                .matrix
                .cells()
                .map(|(ap, sta, c)| MatrixCellRecord { ap: ap.ip, sta, rssi: c.smoothed_rssi, staleness: c.staleness })
                .collect();
            self.emit(Event::Matrix { iteration: it, sim_time: now, cells });
        }
        let wall = started.elapsed();
        self.emit(Event::Iteration {
            iteration: it,
            sim_time: now,
            wall_ms: wall.as_secs_f64() * 1000.0,
            scan_interval: params.scan_interval,
            alpha: params.alpha,
            agents: agents.len(),
            reports: reports.len(),
            stations: self.assignment.len(),
            handoffs: handoffs.iter().filter(|h| h.outcome.is_committed()).count(),
            associations: associations.len(),
        });
        if let Err(e) = self.log.flush() {
            log::error!("event log flush failed: {e}");
        }

        IterationSummary {
            iteration: it,
            sim_time: now,
            wall,
            params,
            agents: agents.len(),
            reports: reports.len(),
            busy,
            handoffs,
            associations,
            disassociations: lost,
        }
    }

    /// Logs agent arrivals and departures since the last pass. An agent that
    /// says HELLO again is brought back in line with the controller's view.
    fn track_connections(&mut self) {
        let it = self.iteration;
        for ev in self.ctl.drain_events() {
            let ConnectionEvent::Connected { id, channel } = ev;
            if self.known_agents.contains(&id.ip) {
                // dropped and back again since the last pass
                self.emit(Event::AgentDisconnected { iteration: it, ap: id.ip, reason: "reconnected".into() });
            }
            self.emit(Event::AgentConnected { iteration: it, ap: id.ip, mac: id.mac, channel: channel.number() });
            self.known_agents.insert(id.ip);
            if let Some(link) = self.ctl.get(id.ip) {
                self.reconcile(&link);
            }
        }
        let up: BTreeSet<Ipv4Addr> = self.ctl.connected().iter().map(|l| l.ip()).collect();
        let down: Vec<Ipv4Addr> = self.known_agents.iter().filter(|ip| !up.contains(ip)).copied().collect();
        for ip in down {
            self.known_agents.remove(&ip);
            let reason = self.ctl.get(ip).and_then(|l| l.disconnect_reason()).unwrap_or_default();
            self.emit(Event::AgentDisconnected { iteration: it, ap: ip, reason });
        }
    }

    /// Re-installs the LVAPs this agent should host and clears any it
    /// should not, e.g. one whose ADD was acknowledged too late.
    fn reconcile(&self, link: &Arc<AgentLink>) {
        let t = self.timeout();
        for (sta, lvap) in &self.lvaps {
            let msg = if lvap.host_ap.ip == link.ip() {
                let l = lvap.clone();
                link.request(move |seq| ControlMessage::add_lvap(seq, l), t)
            } else {
                let s = *sta;
                link.request(move |seq| ControlMessage::remove_lvap(seq, s), t)
            };
            if msg.is_err() {
                return;
            }
        }
    }

    fn collect_scans(&mut self, params: &Parameters) -> (Vec<ScanReport>, usize) {
        let dur_ms = ((params.scan_duration * 1000.0).round() as u32).max(1);
        let pending: Vec<(Arc<AgentLink>, PendingReply)> = self
            .ctl
            .connected()
            .into_iter()
            .filter_map(|link| {
                let ch = link.channel();
                link.send_request(|seq| ControlMessage::scan_request(seq, ch, dur_ms)).ok().map(|p| (link, p))
            })
            .collect();
        if let Some(hook) = self.scan_hook.as_mut() {
            hook(self.iteration);
        }
        let deadline = Instant::now() + Duration::from_millis(dur_ms as u64) + self.cfg.request_timeout;
        let mut reports = Vec::new();
        let mut busy = 0;
        for (link, p) in pending {
            let left = deadline.saturating_duration_since(Instant::now());
            match p.wait(left) {
                Ok(ControlMessage { payload: Payload::ScanReport(r), .. }) if r.ap == link.id() => reports.push(r),
                Ok(ControlMessage { kind: MessageKind::Busy, .. }) => busy += 1,
                Ok(m) => log::warn!("agent {} scan failed: {:?}", link.id(), m.payload),
                Err(e) => log::warn!("agent {} scan: {e}", link.id()),
            }
        }
        (reports, busy)
    }

    fn associate(&mut self, sta: MacAddr, ap: ApId) -> bool {
        let Some(link) = self.ctl.get(ap.ip).filter(|l| l.is_connected()) else { return false };
        let lvap = Lvap::new(sta, self.cfg.ssid.clone(), ap);
        let l = lvap.clone();
        match link.request(move |seq| ControlMessage::add_lvap(seq, l), self.timeout()) {
            Ok(m) if m.kind == MessageKind::Ack => {
                let it = self.iteration;
                self.emit(Event::LvapAdded { iteration: it, ap: ap.ip, sta, bssid: lvap.bssid });
                self.emit(Event::Association { iteration: it, sta, bssid: lvap.bssid, ap: ap.ip });
                self.assignment.set(sta, ap);
                self.lvaps.insert(sta, lvap);
                true
            }
            _ => false,
        }
    }

    fn disassociate(&mut self, sta: MacAddr) {
        let Some(host) = self.assignment.remove(sta) else { return };
        self.lvaps.remove(&sta);
        let acked = self.remove_from(host, sta);
        if !acked {
            // the station has lost its AP and goes back to probing
            let _ = self.world.env.write().unbind_station(sta, host.ip);
        }
        let it = self.iteration;
        self.emit(Event::LvapRemoved { iteration: it, ap: host.ip, sta, acked });
        self.emit(Event::Disassociation { iteration: it, sta, ap: host.ip });
    }

    fn remove_from(&self, ap: ApId, sta: MacAddr) -> bool {
        let Some(link) = self.ctl.get(ap.ip).filter(|l| l.is_connected()) else { return false };
        matches!(
            link.request(move |seq| ControlMessage::remove_lvap(seq, sta), self.timeout()),
            Ok(m) if m.kind == MessageKind::Ack
        )
    }

    fn execute_manual(&mut self, cmd: ManualCommand) -> Option<HandoffResult> {
        let it = self.iteration;
        match cmd {
            ManualCommand::ChannelChange { ap, channel } => {
                let ok = match self.ctl.get(ap).filter(|l| l.is_connected()) {
                    Some(link) => {
                        let r = link.request(move |seq| ControlMessage::set_channel(seq, channel), self.timeout());
                        let ok = matches!(r, Ok(ref m) if m.kind == MessageKind::Ack);
                        if ok {
                            link.set_channel(channel);
                        }
                        ok
                    }
                    None => false,
                };
                self.emit(Event::ChannelChange { iteration: it, ap, channel: channel.number(), ok });
                None
            }
            ManualCommand::Handoff { sta, target } => {
                let source = self.assignment.host(sta)?;
                let target_id = match self.ctl.get(target) {
                    Some(l) => l.id(),
                    None => {
                        log::warn!("manual handoff of {sta} to unknown agent {target}");
                        return None;
                    }
                };
                match HandoffCommand::new(sta, source, target_id, HandoffReason::Manual) {
                    Ok(cmd) => Some(self.execute_handoff(cmd)),
                    Err(_) => {
                        self.emit(Event::Handoff {
                            iteration: it,
                            sta,
                            bssid: derive_bssid(sta),
                            source: source.ip,
                            target,
                            reason: HandoffReason::Manual,
                            outcome: HandoffOutcome::Rejected,
                        });
                        Some(HandoffResult {
                            sta,
                            source,
                            target: target_id,
                            reason: HandoffReason::Manual,
                            outcome: HandoffOutcome::Rejected,
                        })
                    }
                }
            }
        }
    }

    /// Moves one LVAP: ADD on the target, then REMOVE on the source.
    pub fn execute_handoff(&mut self, cmd: HandoffCommand) -> HandoffResult {
        let it = self.iteration;
        let sta = cmd.sta_mac;
        let lvap = self.lvaps.get(&sta).map_or_else(|| Lvap::new(sta, self.cfg.ssid.clone(), cmd.target), |l| l.moved_to(cmd.target));
        let outcome = if cmd.source == cmd.target {
            HandoffOutcome::Rejected
        } else {
            self.migrate(&cmd, &lvap)
        };
        if outcome.is_committed() {
            self.assignment.set(sta, cmd.target);
            self.lvaps.insert(sta, lvap.clone());
        }
        self.emit(Event::Handoff {
            iteration: it,
            sta,
            bssid: lvap.bssid,
            source: cmd.source.ip,
            target: cmd.target.ip,
            reason: cmd.reason,
            outcome,
        });
        HandoffResult { sta, source: cmd.source, target: cmd.target, reason: cmd.reason, outcome }
    }

    fn migrate(&mut self, cmd: &HandoffCommand, lvap: &Lvap) -> HandoffOutcome {
        let it = self.iteration;
        let Some(target) = self.ctl.get(cmd.target.ip).filter(|l| l.is_connected()) else {
            return HandoffOutcome::Failed;
        };
        let l = lvap.clone();
        match target.request(move |seq| ControlMessage::add_lvap(seq, l), self.timeout()) {
            Ok(m) if m.kind == MessageKind::Ack => {}
            Ok(_) => return HandoffOutcome::Failed,
            Err(LinkError::Timeout) => {
                // the link is down now; the agent is cleaned up when it says HELLO again
                return HandoffOutcome::Failed;
            }
            Err(_) => return HandoffOutcome::Failed,
        }
        self.emit(Event::LvapAdded { iteration: it, ap: cmd.target.ip, sta: cmd.sta_mac, bssid: lvap.bssid });
        let acked = self.remove_from(cmd.source, cmd.sta_mac);
        self.emit(Event::LvapRemoved { iteration: it, ap: cmd.source.ip, sta: cmd.sta_mac, acked });
        if acked {
            HandoffOutcome::Committed
        } else {
            HandoffOutcome::CommittedWithWarning
        }
    }

    fn publish(&mut self, agents: &[Arc<AgentLink>]) {
        let loads = self.assignment.loads();
        let agent_rows = agents.iter().map(|l| {
            let rec = AgentRecord {
                ip: l.ip(),
                mac: l.id().mac,
                channel: l.channel(),
                lvaps: loads.get(&l.id()).copied().unwrap_or(0),
                last_heartbeat: l.last_heartbeat(),
            };
            (l.ip().to_string(), rec)
        });
        self.gw.sync_records(gateway::AGENTS, agent_rows).expect("agent rows match schema");

        for (sta, c) in self.clients.iter_mut() {
            c.connected = self.assignment.host(*sta).is_some();
        }
        let client_rows = self.clients.values().map(|c| (c.mac.to_string(), c.clone()));
        self.gw.sync_records(gateway::CLIENTS_EVER, client_rows).expect("client rows match schema");

        let station_rows = self.assignment.iter().map(|(sta, host)| {
            let rec = StationRecord {
                mac: sta,
                bssid: derive_bssid(sta),
                host: host.ip,
                host_mac: host.mac,
                rssi: self.matrix.get(host, sta).map(|c| c.smoothed_rssi),
            };
            (sta.to_string(), rec)
        });
        self.gw.sync_records(gateway::STATIONS_CURRENT, station_rows).expect("station rows match schema");

        let snapshot = MatrixSnapshot {
            timestamp: self.matrix.timestamp(),
            aps: self.matrix.aps().iter().map(|a| a.ip).collect(),
            stas: self.matrix.stations().into_iter().collect(),
            cells: self
                .matrix
                .cells()
                .map(|(ap, sta, c)| MatrixCellView { ap: ap.ip, sta, rssi: c.smoothed_rssi, staleness: c.staleness })
                .collect(),
        };
        self.gw.put_record(gateway::MATRIX, gateway::MATRIX_KEY, &snapshot).expect("matrix matches schema");

        let up: BTreeSet<Ipv4Addr> = agents.iter().map(|l| l.ip()).collect();
        let mut stats = Vec::new();
        for (ip, r) in self.last_scans.iter().filter(|(ip, _)| up.contains(ip)) {
            for o in &r.observations {
                let rec = StatsRecord {
                    ap: *ip,
                    sta: o.sta_mac,
                    packet_count: o.stats.packet_count,
                    airtime: o.stats.airtime,
                    avg_rssi: o.stats.avg_rssi,
                    smoothed_rssi: self.matrix.get(r.ap, o.sta_mac).map(|c| c.smoothed_rssi),
                    window_start: o.stats.window_start,
                    window_end: o.stats.window_end,
                };
                stats.push((gateway::stats_key(*ip, o.sta_mac), rec));
            }
        }
        self.gw.sync_records(gateway::STATS, stats).expect("stats rows match schema");
        let scans = self.last_scans.iter().filter(|(ip, _)| up.contains(ip)).map(|(ip, r)| (ip.to_string(), r.clone()));
        self.gw.sync_records(gateway::LAST_SCANS, scans).expect("scan rows match schema");
    }

    fn publish_params(&self) {
        self.gw.put_record(gateway::PARAMS, gateway::PARAMS_KEY, &self.params).expect("params match schema");
    }
}
