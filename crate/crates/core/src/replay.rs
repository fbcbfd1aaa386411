//! Offline invariant checks over a recorded event log.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::net::Ipv4Addr;

use crate::addr::MacAddr;
use crate::events::Event;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Invariant {
    /// Each station has at most two hosts at any point and exactly one at
    /// every handoff completion and iteration boundary.
    SingleHost,
    /// A station's BSSID never changes.
    BssidStability,
    /// Every iteration finishes inside its scan interval.
    LoopBudget,
    /// Iteration counters never go backwards.
    IterationOrder,
}

impl Invariant {
    pub fn name(self) -> &'static str {
        match self {
            Invariant::SingleHost => "single-host",
            Invariant::BssidStability => "bssid-stability",
            Invariant::LoopBudget => "loop-budget",
            Invariant::IterationOrder => "iteration-order",
        }
    }
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub invariant: Invariant,
    /// 1-based position of the offending event.
    pub line: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayReport {
    pub events: usize,
    pub iterations: usize,
    pub handoffs_committed: usize,
    pub handoffs_failed: usize,
    pub max_wall_ms: f64,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violated(&self) -> BTreeSet<Invariant> {
        self.violations.iter().map(|v| v.invariant).collect()
    }
}

#[derive(Default)]
struct Checker {
    hosts: BTreeMap<MacAddr, BTreeSet<Ipv4Addr>>,
    bssids: BTreeMap<MacAddr, MacAddr>,
    last_iteration: u64,
    last_closed: Option<u64>,
    report: ReplayReport,
}

impl Checker {
    fn violate(&mut self, invariant: Invariant, line: usize, detail: String) {
        self.report.violations.push(Violation { invariant, line, detail });
    }

    fn check_bssid(&mut self, line: usize, sta: MacAddr, bssid: MacAddr) {
        match self.bssids.get(&sta) {
            Some(&known) if known != bssid => {
                self.violate(Invariant::BssidStability, line, format!("{sta} moved from bssid {known} to {bssid}"))
            }
            Some(_) => {}
            None => {
                self.bssids.insert(sta, bssid);
            }
        }
    }

    fn expect_single(&mut self, line: usize, sta: MacAddr, when: &str) {
        let n = self.hosts.get(&sta).map_or(0, |h| h.len());
        if n != 1 {
            self.violate(Invariant::SingleHost, line, format!("{sta} hosted by {n} agents after {when}"));
        }
    }

    fn feed(&mut self, line: usize, ev: &Event) {
        self.report.events += 1;
        let it = ev.iteration();
        if it < self.last_iteration {
            self.violate(Invariant::IterationOrder, line, format!("iteration {it} after {}", self.last_iteration));
        }
        self.last_iteration = self.last_iteration.max(it);

        match *ev {
            Event::LvapAdded { ap, sta, bssid, .. } => {
                self.check_bssid(line, sta, bssid);
                let hosts = self.hosts.entry(sta).or_default();
                hosts.insert(ap);
                let n = hosts.len();
                if n > 2 {
                    self.violate(Invariant::SingleHost, line, format!("{sta} hosted by {n} agents"));
                }
            }
            Event::LvapRemoved { ap, sta, .. } => {
                if let Some(h) = self.hosts.get_mut(&sta) {
                    h.remove(&ap);
                    if h.is_empty() {
                        self.hosts.remove(&sta);
                    }
                }
            }
            Event::Association { sta, bssid, .. } => {
                self.check_bssid(line, sta, bssid);
                self.expect_single(line, sta, "association");
            }
            Event::Handoff { sta, bssid, target, outcome, .. } => {
                self.check_bssid(line, sta, bssid);
                if outcome.is_committed() {
                    self.report.handoffs_committed += 1;
                    self.expect_single(line, sta, "handoff");
                    let on_target = self.hosts.get(&sta).is_some_and(|h| h.contains(&target));
                    if !on_target {
                        self.violate(Invariant::SingleHost, line, format!("{sta} committed to {target} but not hosted there"));
                    }
                } else {
                    self.report.handoffs_failed += 1;
                    if self.hosts.get(&sta).is_some_and(|h| h.len() > 1) {
                        self.violate(Invariant::SingleHost, line, format!("{sta} left on two agents by failed handoff"));
                    }
                }
            }
            Event::Iteration { iteration, wall_ms, scan_interval, .. } => {
                self.report.iterations += 1;
                if self.last_closed.is_some_and(|prev| iteration <= prev) {
                    self.violate(Invariant::IterationOrder, line, format!("iteration {iteration} closed twice"));
                }
                self.last_closed = Some(iteration);
                if wall_ms > self.report.max_wall_ms {
                    self.report.max_wall_ms = wall_ms;
                }
                // NaN timings count as over budget
                let within = wall_ms < scan_interval * 1000.0;
                if !within {
                    self.violate(
                        Invariant::LoopBudget,
                        line,
                        format!("iteration {iteration} took {wall_ms:.1} ms, budget {:.0} ms", scan_interval * 1000.0),
                    );
                }
                let multi: Vec<MacAddr> =
                    self.hosts.iter().filter(|(_, h)| h.len() > 1).map(|(s, _)| *s).collect();
                for sta in multi {
                    self.expect_single(line, sta, "iteration end");
                }
            }
            _ => {}
        }
    }
}

/// Checks every invariant over `events`, numbered from 1 in order.
pub fn replay_check<'a>(events: impl IntoIterator<Item = &'a Event>) -> ReplayReport {
    let mut c = Checker::default();
    for (i, ev) in events.into_iter().enumerate() {
        c.feed(i + 1, ev);
    }
    if c.report.events == 0 {
        c.report.warnings.push(String::from("log is empty; nothing to check"));
    } else if c.report.iterations == 0 {
        c.report.warnings.push(String::from("log contains no iteration events"));
    }
    c.report
}
