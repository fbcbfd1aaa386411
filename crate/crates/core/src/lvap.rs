use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::addr::{derive_bssid, ApId, MacAddr};

/// Light virtual access point: the per-station virtual AP that follows the
/// station between physical APs. Its BSSID is fixed for the station's lifetime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lvap {
    pub sta_mac: MacAddr,
    pub bssid: MacAddr,
    pub ssid: String,
    pub host_ap: ApId,
}

impl Lvap {
    pub fn new(sta_mac: MacAddr, ssid: impl Into<String>, host_ap: ApId) -> Self {
        Lvap { sta_mac, bssid: derive_bssid(sta_mac), ssid: ssid.into(), host_ap }
    }

    /// Same LVAP, hosted somewhere else.
    pub fn moved_to(&self, host_ap: ApId) -> Self {
        Lvap { host_ap, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bssid {bssid} already serves station {existing}, refusing {requested}")]
pub struct LvapConflict {
    pub bssid: MacAddr,
    pub existing: MacAddr,
    pub requested: MacAddr,
}

/// LVAPs hosted by one agent, keyed by station.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LvapTable {
    by_sta: BTreeMap<MacAddr, Lvap>,
}

impl LvapTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Idempotent for an identical record. A record for a known station
    /// replaces the old one; a BSSID already bound to another station is a
    /// conflict.
    pub fn add(&mut self, lvap: Lvap) -> Result<(), LvapConflict> {
        if let Some(other) = self.by_sta.values().find(|l| l.bssid == lvap.bssid && l.sta_mac != lvap.sta_mac) {
            return Err(LvapConflict { bssid: lvap.bssid, existing: other.sta_mac, requested: lvap.sta_mac });
        }
        self.by_sta.insert(lvap.sta_mac, lvap);
        Ok(())
    }

    /// Returns the removed record, if there was one.
    pub fn remove(&mut self, sta: MacAddr) -> Option<Lvap> {
        self.by_sta.remove(&sta)
    }

    pub fn get(&self, sta: MacAddr) -> Option<&Lvap> {
        self.by_sta.get(&sta)
    }

    pub fn contains(&self, sta: MacAddr) -> bool {
        self.by_sta.contains_key(&sta)
    }

    pub fn len(&self) -> usize {
        self.by_sta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_sta.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Lvap> {
        self.by_sta.values()
    }
}
