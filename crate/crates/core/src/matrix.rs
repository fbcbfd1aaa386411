//! AP × station attenuation matrix of smoothed RSSI.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::addr::{ApId, MacAddr};
use crate::scan::ScanReport;
use crate::smoothing::smooth_rssi;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub smoothed_rssi: f64,
    /// Scans since this pair was last observed.
    pub staleness: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttenuationMatrix {
    cells: BTreeMap<(ApId, MacAddr), Cell>,
    timestamp: f64,
}

impl AttenuationMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn get(&self, ap: ApId, sta: MacAddr) -> Option<&Cell> {
        self.cells.get(&(ap, sta))
    }

    pub fn insert(&mut self, ap: ApId, sta: MacAddr, cell: Cell) {
        self.cells.insert((ap, sta), cell);
    }

    pub fn cells(&self) -> impl Iterator<Item = (ApId, MacAddr, &Cell)> {
        self.cells.iter().map(|((ap, sta), c)| (*ap, *sta, c))
    }

    pub fn aps(&self) -> BTreeSet<ApId> {
        self.cells.keys().map(|(ap, _)| *ap).collect()
    }

    pub fn stations(&self) -> BTreeSet<MacAddr> {
        self.cells.keys().map(|(_, sta)| *sta).collect()
    }

    /// Every AP that has a cell for `sta`, in ascending AP order.
    pub fn row_for_station(&self, sta: MacAddr) -> Vec<(ApId, f64)> {
        self.cells.iter().filter(|((_, s), _)| *s == sta).map(|((ap, _), c)| (*ap, c.smoothed_rssi)).collect()
    }

    /// Copy containing only cells whose AP is in `aps`.
    pub fn restricted_to(&self, aps: &BTreeSet<ApId>) -> Self {
        AttenuationMatrix {
            cells: self.cells.iter().filter(|((ap, _), _)| aps.contains(ap)).map(|(k, v)| (*k, *v)).collect(),
            timestamp: self.timestamp,
        }
    }

    /// Folds one iteration's scan reports into the matrix.
    ///
    /// Observed pairs are smoothed with `alpha`; a pair seen for the first
    /// time starts at its raw value. Every other cell ages by one scan and
    /// is dropped once its staleness reaches `stale_limit`.
    pub fn updated(&self, reports: &[ScanReport], alpha: f64, stale_limit: u32, now: f64) -> Self {
        let mut cells = self.cells.clone();
        let mut seen = BTreeSet::new();
        for report in reports {
            for obs in &report.observations {
                let key = (report.ap, obs.sta_mac);
                let smoothed = match cells.get(&key) {
                    Some(c) => smooth_rssi(alpha, obs.raw_rssi, c.smoothed_rssi),
                    None => obs.raw_rssi,
                };
                cells.insert(key, Cell { smoothed_rssi: smoothed, staleness: 0 });
                seen.insert(key);
            }
        }
        cells.retain(|key, cell| {
            if !seen.contains(key) {
                cell.staleness += 1;
            }
            cell.staleness < stale_limit
        });
        AttenuationMatrix { cells, timestamp: now }
    }
}

/// Functional form of [`AttenuationMatrix::updated`] driven by a parameter set.
pub fn update_matrix(
    matrix: &AttenuationMatrix,
    reports: &[ScanReport],
    params: &crate::params::Parameters,
    now: f64,
) -> AttenuationMatrix {
    matrix.updated(reports, params.alpha, params.stale_scans_limit, now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addr::Channel;
    use crate::scan::{Observation, StaStats};
    use core::net::Ipv4Addr;

    fn ap(n: u8) -> ApId {
        ApId::new(Ipv4Addr::new(10, 0, 0, n), MacAddr([2, 0, 0, 0, 0, n]))
    }

    const STA: MacAddr = MacAddr([0, 0x22, 0, 0, 0, 1]);

    fn report(from: ApId, obs: &[(MacAddr, f64)]) -> ScanReport {
        ScanReport {
            ap: from,
            channel: Channel::new(6).unwrap(),
            timestamp: 0.0,
            observations: obs
                .iter()
                .map(|&(m, r)| Observation {
                    sta_mac: m,
                    raw_rssi: r,
                    stats: StaStats::synthesize(m, r, 10.0, 0.0, 0.06),
                })
                .collect(),
        }
    }

    #[test]
    fn first_sample_is_raw_regardless_of_alpha() {
        let m = AttenuationMatrix::new();
        let reports = [report(ap(1), &[(STA, -62.0)])];
        for alpha in [0.0, 0.3, 0.8, 1.0] {
            let out = m.updated(&reports, alpha, 3, 1.0);
            assert_eq!(out.get(ap(1), STA), Some(&Cell { smoothed_rssi: -62.0, staleness: 0 }));
        }
    }

    #[test]
    fn existing_cell_is_smoothed() {
        let mut m = AttenuationMatrix::new();
        m.insert(ap(1), STA, Cell { smoothed_rssi: -70.0, staleness: 1 });
        let out = m.updated(&[report(ap(1), &[(STA, -60.0)])], 0.5, 3, 1.0);
        assert_eq!(out.get(ap(1), STA), Some(&Cell { smoothed_rssi: -65.0, staleness: 0 }));
        assert_eq!(out.timestamp(), 1.0);
    }

    #[test]
    fn unobserved_cells_age_then_evict() {
        let m = AttenuationMatrix::new().updated(&[report(ap(1), &[(STA, -50.0)])], 0.8, 3, 0.0);
        let m1 = m.updated(&[], 0.8, 3, 1.0);
        assert_eq!(m1.get(ap(1), STA).unwrap().staleness, 1);
        assert_eq!(m1.get(ap(1), STA).unwrap().smoothed_rssi, -50.0);
        let m2 = m1.updated(&[report(ap(2), &[])], 0.8, 3, 2.0);
        assert_eq!(m2.get(ap(1), STA).unwrap().staleness, 2);
        let m3 = m2.updated(&[], 0.8, 3, 3.0);
        assert!(m3.get(ap(1), STA).is_none());
        assert!(m3.is_empty());
    }

    #[test]
    fn restriction_and_rows() {
        let m = AttenuationMatrix::new()
            .updated(&[report(ap(2), &[(STA, -40.0)]), report(ap(1), &[(STA, -70.0)])], 0.8, 3, 0.0);
        assert_eq!(m.row_for_station(STA), [(ap(1), -70.0), (ap(2), -40.0)]);
        let only2: BTreeSet<_> = [ap(2)].into_iter().collect();
        let r = m.restricted_to(&only2);
        assert_eq!(r.len(), 1);
        assert_eq!(r.aps(), only2);
    }
}
