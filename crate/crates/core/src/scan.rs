//! Scan reports and the per-station traffic statistics an agent attaches to them.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::addr::{ApId, Channel, MacAddr};
use crate::radio::{RadioEnv, RadioError};

/// Rate tier a station would be using at a given RSSI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationTier {
    Fast,
    Medium,
    Slow,
}

impl ModulationTier {
    pub const FAST_MIN_DBM: f64 = -65.0;
    pub const MEDIUM_MIN_DBM: f64 = -78.0;

    pub fn for_rssi(rssi: f64) -> Self {
        if rssi >= Self::FAST_MIN_DBM {
            ModulationTier::Fast
        } else if rssi >= Self::MEDIUM_MIN_DBM {
            ModulationTier::Medium
        } else {
            ModulationTier::Slow
        }
    }

    /// Channel time spent per transmission attempt, seconds.
    pub fn airtime_per_attempt(self) -> f64 {
        match self {
            ModulationTier::Fast => 0.000_25,
            ModulationTier::Medium => 0.001,
            ModulationTier::Slow => 0.004,
        }
    }

    /// Fraction of attempts that get through; the rest are retries.
    pub fn delivery_ratio(self) -> f64 {
        match self {
            ModulationTier::Fast => 1.0,
            ModulationTier::Medium => 0.75,
            ModulationTier::Slow => 0.35,
        }
    }
}

/// Traffic one AP measured for one station over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaStats {
    pub sta_mac: MacAddr,
    pub packet_count: u64,
    /// Seconds of channel occupancy within the window.
    pub airtime: f64,
    pub avg_rssi: f64,
    pub window_start: f64,
    pub window_end: f64,
}

impl StaStats {
    /// Synthesises statistics for a station offering `offered_pps` packets per
    /// second at `rssi` over `[start, end]`. Weak stations burn more airtime
    /// per attempt and deliver fewer packets.
    pub fn synthesize(sta_mac: MacAddr, rssi: f64, offered_pps: f64, start: f64, end: f64) -> Self {
        let window = (end - start).max(0.0);
        let tier = ModulationTier::for_rssi(rssi);
        let per_attempt = tier.airtime_per_attempt();
        let offered = libm::floor(offered_pps.max(0.0) * window);
        let capacity = libm::floor(window / per_attempt);
        let attempts = offered.min(capacity);
        StaStats {
            sta_mac,
            packet_count: libm::floor(attempts * tier.delivery_ratio()) as u64,
            airtime: (attempts * per_attempt).min(window),
            avg_rssi: rssi,
            window_start: start,
            window_end: end,
        }
    }

    pub fn window_len(&self) -> f64 {
        self.window_end - self.window_start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub sta_mac: MacAddr,
    pub raw_rssi: f64,
    pub stats: StaStats,
}

/// One agent's view of one channel at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanReport {
    pub ap: ApId,
    pub channel: Channel,
    pub timestamp: f64,
    pub observations: Vec<Observation>,
}

impl ScanReport {
    /// Listens on `channel` from AP `ap` for `duration` seconds starting at `t`.
    /// Stations come out in ascending MAC order.
    pub fn collect(env: &RadioEnv, ap: ApId, channel: Channel, t: f64, duration: f64) -> Result<Self, RadioError> {
        let mut observations = Vec::new();
        for st in env.stations() {
            if let Some(rssi) = env.rssi_at(ap.ip, st.mac, channel, t)? {
                observations.push(Observation {
                    sta_mac: st.mac,
                    raw_rssi: rssi,
                    stats: StaStats::synthesize(st.mac, rssi, st.offered_load_pps, t, t + duration),
                });
            }
        }
        Ok(ScanReport { ap, channel, timestamp: t, observations })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STA: MacAddr = MacAddr([0, 1, 2, 3, 4, 5]);

    #[test]
    fn tiers() {
        assert_eq!(ModulationTier::for_rssi(-40.0), ModulationTier::Fast);
        assert_eq!(ModulationTier::for_rssi(-65.0), ModulationTier::Fast);
        assert_eq!(ModulationTier::for_rssi(-65.1), ModulationTier::Medium);
        assert_eq!(ModulationTier::for_rssi(-78.0), ModulationTier::Medium);
        assert_eq!(ModulationTier::for_rssi(-80.0), ModulationTier::Slow);
    }

    #[test]
    fn weak_station_uses_more_airtime_for_fewer_packets() {
        let strong = StaStats::synthesize(STA, -45.0, 100.0, 0.0, 1.0);
        let weak = StaStats::synthesize(STA, -85.0, 100.0, 0.0, 1.0);
        assert_eq!(strong.packet_count, 100);
        assert!((strong.airtime - 0.025).abs() < 1e-12);
        assert_eq!(weak.packet_count, 35);
        assert!((weak.airtime - 0.4).abs() < 1e-12);
        assert!(weak.airtime > strong.airtime && weak.packet_count < strong.packet_count);
    }

    #[test]
    fn airtime_never_exceeds_window() {
        let s = StaStats::synthesize(STA, -90.0, 10_000.0, 2.0, 2.06);
        assert!(s.airtime <= s.window_len() + 1e-12);
        let empty = StaStats::synthesize(STA, -50.0, 100.0, 3.0, 3.0);
        assert_eq!(empty.packet_count, 0);
        assert_eq!(empty.airtime, 0.0);
    }
}
