//! Station-to-AP assignment: signal strength traded against AP load, with
//! hysteresis against ping-pong.
//!
//! Stations are visited in ascending MAC order. Each visit scores every AP
//! that has a matrix cell for the station as
//!
//! ```text
//! score(ap) = smoothed_rssi(ap, sta) - beta * (stations on ap, not counting sta)
//! ```
//!
//! using the tentative assignment as it evolves during the pass. The best
//! score wins, ties going to the lowest AP id. An associated station moves
//! only if the winner beats its current AP by more than the hysteresis.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::addr::{ApId, MacAddr};
use crate::matrix::AttenuationMatrix;
use crate::params::Parameters;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment(BTreeMap<MacAddr, ApId>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn host(&self, sta: MacAddr) -> Option<ApId> {
        self.0.get(&sta).copied()
    }

    pub fn set(&mut self, sta: MacAddr, ap: ApId) -> Option<ApId> {
        self.0.insert(sta, ap)
    }

    pub fn remove(&mut self, sta: MacAddr) -> Option<ApId> {
        self.0.remove(&sta)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (MacAddr, ApId)> + '_ {
        self.0.iter().map(|(s, a)| (*s, *a))
    }

    /// Number of stations per AP.
    pub fn loads(&self) -> BTreeMap<ApId, usize> {
        let mut out = BTreeMap::new();
        for ap in self.0.values() {
            *out.entry(*ap).or_insert(0) += 1;
        }
        out
    }
}

impl FromIterator<(MacAddr, ApId)> for Assignment {
    fn from_iter<T: IntoIterator<Item = (MacAddr, ApId)>>(iter: T) -> Self {
        Assignment(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoffReason {
    Algorithm,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoffCommand {
    pub sta_mac: MacAddr,
    pub source: ApId,
    pub target: ApId,
    pub reason: HandoffReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("station {0} is already hosted by the requested AP")]
pub struct SameHost(pub MacAddr);

impl HandoffCommand {
    pub fn new(sta_mac: MacAddr, source: ApId, target: ApId, reason: HandoffReason) -> Result<Self, SameHost> {
        if source == target {
            return Err(SameHost(sta_mac));
        }
        Ok(HandoffCommand { sta_mac, source, target, reason })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssignmentOutcome {
    pub assignment: Assignment,
    pub handoffs: Vec<HandoffCommand>,
    /// Stations seen in the matrix but not yet associated, with the AP chosen for them.
    pub associations: Vec<(MacAddr, ApId)>,
}

/// Computes the target assignment. Pure: identical inputs give identical output.
///
/// Every AP with a cell in `matrix` is a candidate, so callers restrict the
/// matrix to reachable APs first. Stations in `current` without any cell
/// keep their host.
pub fn compute_assignment(matrix: &AttenuationMatrix, current: &Assignment, params: &Parameters) -> AssignmentOutcome {
    let beta = params.load_penalty_beta;
    let mut tentative = current.clone();
    let mut loads = current.loads();
    let mut handoffs = Vec::new();
    let mut associations = Vec::new();

    let mut stations: Vec<MacAddr> = current.0.keys().copied().collect();
    stations.extend(matrix.stations());
    stations.sort_unstable();
    stations.dedup();

    for sta in stations {
        let row = matrix.row_for_station(sta);
        if row.is_empty() {
            continue;
        }
        let host = tentative.host(sta);
        let score = |ap: ApId, rssi: f64| {
            let on_ap = loads.get(&ap).copied().unwrap_or(0);
            let others = if host == Some(ap) { on_ap - 1 } else { on_ap };
            rssi - beta * others as f64
        };
        // row is in ascending AP order, so strict > keeps the lowest id on ties
        let mut best: Option<(ApId, f64)> = None;
        for &(ap, rssi) in &row {
            let s = score(ap, rssi);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((ap, s));
            }
        }
        let Some((candidate, cand_score)) = best else { continue };

        match host {
            None => {
                associations.push((sta, candidate));
            }
            Some(h) if h == candidate => continue,
            Some(h) => {
                let current_score =
                    row.iter().find(|(ap, _)| *ap == h).map(|&(ap, rssi)| score(ap, rssi)).unwrap_or(f64::NEG_INFINITY);
                if cand_score - current_score <= params.hysteresis {
                    continue;
                }
                handoffs.push(HandoffCommand { sta_mac: sta, source: h, target: candidate, reason: HandoffReason::Algorithm });
                if let Some(n) = loads.get_mut(&h) {
                    *n -= 1;
                }
            }
        }
        *loads.entry(candidate).or_insert(0) += 1;
        tentative.set(sta, candidate);
    }

    AssignmentOutcome { assignment: tentative, handoffs, associations }
}
