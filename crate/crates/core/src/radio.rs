//! Deterministic virtual radio world.
//!
//! Stations move along piecewise-linear tracks and every (AP, station, time)
//! triple gets a reproducible RSSI from a log-distance path-loss model with
//! Gaussian shadowing. Noise is derived by hashing the query key, so results
//! do not depend on query order.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::addr::{ApId, Channel, MacAddr};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RadioError {
    #[error("unknown AP {0}")]
    UnknownAp(Ipv4Addr),
    #[error("unknown station {0}")]
    UnknownStation(MacAddr),
    #[error("duplicate AP {0}")]
    DuplicateAp(Ipv4Addr),
    #[error("duplicate station {0}")]
    DuplicateStation(MacAddr),
    #[error("position ({x}, {y}) outside world bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("invalid mobility track: {0}")]
    InvalidTrack(&'static str),
    #[error("invalid radio model: {0}")]
    InvalidModel(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }

    fn lerp(&self, other: &Position, frac: f64) -> Position {
        Position {
            x: self.x + (other.x - self.x) * frac,
            y: self.y + (other.y - self.y) * frac,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Position,
    /// Arrival time in seconds.
    pub time: f64,
}

/// Ordered waypoints with strictly increasing arrival times. Stationary
/// before the first and after the last waypoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MobilityTrack {
    waypoints: Vec<Waypoint>,
}

impl MobilityTrack {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, RadioError> {
        if waypoints.is_empty() {
            return Err(RadioError::InvalidTrack("track needs at least one waypoint"));
        }
        for w in &waypoints {
            if !(w.time.is_finite() && w.position.x.is_finite() && w.position.y.is_finite()) {
                return Err(RadioError::InvalidTrack("non-finite waypoint"));
            }
        }
        if waypoints.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(RadioError::InvalidTrack("arrival times must be strictly increasing"));
        }
        Ok(MobilityTrack { waypoints })
    }

    pub fn stationary(at: Position) -> Self {
        MobilityTrack { waypoints: alloc::vec![Waypoint { position: at, time: 0.0 }] }
    }

    /// Straight walk from `from` to `to` at `speed` m/s, starting at `start`.
    pub fn walk(from: Position, to: Position, speed: f64, start: f64) -> Result<Self, RadioError> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(RadioError::InvalidTrack("speed must be positive"));
        }
        let dur = from.distance(&to) / speed;
        if dur == 0.0 {
            return Ok(Self::stationary(from));
        }
        Self::new(alloc::vec![
            Waypoint { position: from, time: start },
            Waypoint { position: to, time: start + dur },
        ])
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn position_at(&self, t: f64) -> Position {
        let first = &self.waypoints[0];
        if t <= first.time {
            return first.position;
        }
        // index of the first waypoint strictly after t
        let idx = self.waypoints.partition_point(|w| w.time <= t);
        if idx == self.waypoints.len() {
            return self.waypoints[idx - 1].position;
        }
        let (a, b) = (&self.waypoints[idx - 1], &self.waypoints[idx]);
        if t == a.time {
            return a.position;
        }
        a.position.lerp(&b.position, (t - a.time) / (b.time - a.time))
    }
}

impl<'de> Deserialize<'de> for MobilityTrack {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            waypoints: Vec<Waypoint>,
        }
        let raw = Raw::deserialize(d)?;
        MobilityTrack::new(raw.waypoints).map_err(serde::de::Error::custom)
    }
}

/// Log-distance path loss with Gaussian shadowing, clamped to a reporting range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioModel {
    /// dBm
    pub tx_power: f64,
    /// Loss at the 1 m reference distance, dB.
    pub ref_loss_pl0: f64,
    pub path_loss_exponent: f64,
    /// Shadowing standard deviation, dB.
    pub noise_sigma: f64,
    pub rssi_floor: f64,
    pub rssi_ceiling: f64,
    pub rng_seed: u64,
}

impl Default for RadioModel {
    fn default() -> Self {
        RadioModel {
            tx_power: 20.0,
            ref_loss_pl0: 40.0,
            path_loss_exponent: 2.4,
            noise_sigma: 2.0,
            rssi_floor: -95.0,
            rssi_ceiling: -20.0,
            rng_seed: 1,
        }
    }
}

pub const REFERENCE_DISTANCE_M: f64 = 1.0;

impl RadioModel {
    pub fn validate(&self) -> Result<(), RadioError> {
        let finite = [
            self.tx_power,
            self.ref_loss_pl0,
            self.path_loss_exponent,
            self.noise_sigma,
            self.rssi_floor,
            self.rssi_ceiling,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(RadioError::InvalidModel("non-finite parameter"));
        }
        if self.path_loss_exponent <= 0.0 {
            return Err(RadioError::InvalidModel("path_loss_exponent must be > 0"));
        }
        if self.rssi_floor >= self.rssi_ceiling {
            return Err(RadioError::InvalidModel("rssi_floor must be below rssi_ceiling"));
        }
        if self.noise_sigma < 0.0 {
            return Err(RadioError::InvalidModel("noise_sigma must be >= 0"));
        }
        Ok(())
    }

    /// Mean received power at distance `d` metres, before noise and clamping.
    pub fn mean_rssi(&self, d: f64) -> f64 {
        let d = if d > REFERENCE_DISTANCE_M { d } else { REFERENCE_DISTANCE_M };
        self.tx_power
            - self.ref_loss_pl0
            - 10.0 * self.path_loss_exponent * libm::log10(d / REFERENCE_DISTANCE_M)
    }

    pub fn clamp(&self, rssi: f64) -> f64 {
        rssi.clamp(self.rssi_floor, self.rssi_ceiling)
    }

    /// Shadowing sample for one (ap, sta, t) key.
    pub fn noise(&self, ap: Ipv4Addr, sta: MacAddr, t: f64) -> f64 {
        if self.noise_sigma == 0.0 {
            return 0.0;
        }
        self.noise_sigma * keyed_normal(self.rng_seed, ap, sta, t)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn keyed_normal(seed: u64, ap: Ipv4Addr, sta: MacAddr, t: f64) -> f64 {
    let mut sta_bits = 0u64;
    for b in sta.0 {
        sta_bits = (sta_bits << 8) | b as u64;
    }
    // normalise -0.0 so that t = 0 hashes identically either way
    let t = if t == 0.0 { 0.0 } else { t };
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ u32::from(ap) as u64);
    h = splitmix64(h ^ sta_bits);
    h = splitmix64(h ^ t.to_bits());
    let h2 = splitmix64(h);
    // Box-Muller on two 53-bit uniforms, u1 in (0, 1]
    let u1 = ((h >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
    let u2 = (h2 >> 11) as f64 / (1u64 << 53) as f64;
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

/// What a station is currently transmitting on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxBinding {
    /// Not associated: probe-like traffic heard on every channel.
    Probing,
    /// Served by an LVAP on `ap`, transmitting on that AP's channel.
    Hosted { ap: Ipv4Addr, channel: Channel },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApSite {
    pub id: ApId,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationSite {
    pub mac: MacAddr,
    pub track: MobilityTrack,
    /// Offered load in packets per second.
    pub offered_load_pps: f64,
    /// The station transmits only for `t` in `[active_from, active_until)`.
    pub active_from: f64,
    pub active_until: Option<f64>,
    pub tx: TxBinding,
}

impl StationSite {
    pub fn new(mac: MacAddr, track: MobilityTrack) -> Self {
        StationSite {
            mac,
            track,
            offered_load_pps: 100.0,
            active_from: 0.0,
            active_until: None,
            tx: TxBinding::Probing,
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.active_from && self.active_until.is_none_or(|end| t < end)
    }
}

/// Rectangular world, APs, stations and the propagation model.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioEnv {
    width: f64,
    height: f64,
    model: RadioModel,
    aps: BTreeMap<Ipv4Addr, ApSite>,
    stations: BTreeMap<MacAddr, StationSite>,
}

impl RadioEnv {
    pub fn new(width: f64, height: f64, model: RadioModel) -> Result<Self, RadioError> {
        model.validate()?;
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(RadioError::InvalidModel("world dimensions must be positive"));
        }
        Ok(RadioEnv { width, height, model, aps: BTreeMap::new(), stations: BTreeMap::new() })
    }

    pub fn model(&self) -> &RadioModel {
        &self.model
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.width, self.height)
    }

    fn check_bounds(&self, p: &Position) -> Result<(), RadioError> {
        let inside = p.x.is_finite()
            && p.y.is_finite()
            && (0.0..=self.width).contains(&p.x)
            && (0.0..=self.height).contains(&p.y);
        if inside {
            Ok(())
        } else {
            Err(RadioError::OutOfBounds { x: p.x, y: p.y })
        }
    }

    pub fn add_ap(&mut self, id: ApId, position: Position) -> Result<(), RadioError> {
        self.check_bounds(&position)?;
        if self.aps.contains_key(&id.ip) {
            return Err(RadioError::DuplicateAp(id.ip));
        }
        self.aps.insert(id.ip, ApSite { id, position });
        Ok(())
    }

    pub fn add_station(&mut self, site: StationSite) -> Result<(), RadioError> {
        for w in site.track.waypoints() {
            self.check_bounds(&w.position)?;
        }
        if self.stations.contains_key(&site.mac) {
            return Err(RadioError::DuplicateStation(site.mac));
        }
        self.stations.insert(site.mac, site);
        Ok(())
    }

    pub fn ap(&self, ip: Ipv4Addr) -> Result<&ApSite, RadioError> {
        self.aps.get(&ip).ok_or(RadioError::UnknownAp(ip))
    }

    pub fn aps(&self) -> impl Iterator<Item = &ApSite> {
        self.aps.values()
    }

    pub fn station(&self, mac: MacAddr) -> Result<&StationSite, RadioError> {
        self.stations.get(&mac).ok_or(RadioError::UnknownStation(mac))
    }

    pub fn stations(&self) -> impl Iterator<Item = &StationSite> {
        self.stations.values()
    }

    pub fn position_at(&self, sta: MacAddr, t: f64) -> Result<Position, RadioError> {
        Ok(self.station(sta)?.track.position_at(t))
    }

    /// RSSI that AP `ap` hears from `sta` on `channel` at time `t`, or `None`
    /// when the station is not transmitting on that channel.
    pub fn rssi_at(
        &self,
        ap: Ipv4Addr,
        sta: MacAddr,
        channel: Channel,
        t: f64,
    ) -> Result<Option<f64>, RadioError> {
        let site = self.ap(ap)?;
        let st = self.station(sta)?;
        if !st.is_active(t) {
            return Ok(None);
        }
        match st.tx {
            TxBinding::Hosted { channel: tx, .. } if tx != channel => return Ok(None),
            _ => {}
        }
        let d = site.position.distance(&st.track.position_at(t));
        let raw = self.model.mean_rssi(d) + self.model.noise(ap, sta, t);
        Ok(Some(self.model.clamp(raw)))
    }

    pub fn tx_binding(&self, sta: MacAddr) -> Result<TxBinding, RadioError> {
        Ok(self.station(sta)?.tx)
    }

    /// `ap` now hosts the station's LVAP on `channel`.
    pub fn bind_station(&mut self, sta: MacAddr, ap: Ipv4Addr, channel: Channel) -> Result<(), RadioError> {
        let st = self.stations.get_mut(&sta).ok_or(RadioError::UnknownStation(sta))?;
        st.tx = TxBinding::Hosted { ap, channel };
        Ok(())
    }

    /// `ap` dropped the station's LVAP. A binding to another AP is left alone.
    pub fn unbind_station(&mut self, sta: MacAddr, ap: Ipv4Addr) -> Result<(), RadioError> {
        let st = self.stations.get_mut(&sta).ok_or(RadioError::UnknownStation(sta))?;
        if matches!(st.tx, TxBinding::Hosted { ap: host, .. } if host == ap) {
            st.tx = TxBinding::Probing;
        }
        Ok(())
    }

    /// `ap` moved to `channel`; stations it hosts follow.
    pub fn retune_ap(&mut self, ap: Ipv4Addr, channel: Channel) {
        for st in self.stations.values_mut() {
            if let TxBinding::Hosted { ap: host, channel: ref mut ch } = st.tx {
                if host == ap {
                    *ch = channel;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ch(n: i64) -> Channel {
        Channel::new(n).unwrap()
    }

    fn quiet_model() -> RadioModel {
        RadioModel { path_loss_exponent: 2.0, noise_sigma: 0.0, rssi_ceiling: 0.0, ..RadioModel::default() }
    }

    fn env_with(model: RadioModel, sta_at: Position) -> (RadioEnv, Ipv4Addr, MacAddr) {
        let mut env = RadioEnv::new(100.0, 100.0, model).unwrap();
        let ip = Ipv4Addr::new(10, 0, 0, 1);
        env.add_ap(ApId::new(ip, MacAddr([2, 0, 0, 0, 0, 1])), Position::new(0.0, 0.0)).unwrap();
        let mac = MacAddr([0, 0x11, 0, 0, 0, 1]);
        env.add_station(StationSite::new(mac, MobilityTrack::stationary(sta_at))).unwrap();
        (env, ip, mac)
    }

    #[test]
    fn reference_distance_gives_tx_minus_pl0() {
        let (env, ap, sta) = env_with(quiet_model(), Position::new(1.0, 0.0));
        assert_eq!(env.rssi_at(ap, sta, ch(6), 0.0).unwrap(), Some(-20.0));
        // inside d0 the log term is pinned at zero
        let (env, ap, sta) = env_with(quiet_model(), Position::new(0.0, 0.0));
        assert_eq!(env.rssi_at(ap, sta, ch(6), 0.0).unwrap(), Some(-20.0));
    }

    #[test]
    fn ten_metres_with_exponent_two() {
        let (env, ap, sta) = env_with(quiet_model(), Position::new(6.0, 8.0));
        let v = env.rssi_at(ap, sta, ch(1), 0.0).unwrap().unwrap();
        assert!((v - -40.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn channel_mismatch_is_inaudible() {
        let (mut env, ap, sta) = env_with(quiet_model(), Position::new(5.0, 0.0));
        env.bind_station(sta, ap, ch(6)).unwrap();
        assert!(env.rssi_at(ap, sta, ch(11), 0.0).unwrap().is_none());
        assert!(env.rssi_at(ap, sta, ch(6), 0.0).unwrap().is_some());
        env.retune_ap(ap, ch(11));
        assert!(env.rssi_at(ap, sta, ch(11), 0.0).unwrap().is_some());
        env.unbind_station(sta, ap).unwrap();
        assert!(env.rssi_at(ap, sta, ch(3), 0.0).unwrap().is_some());
    }

    #[test]
    fn unknown_ids_are_errors() {
        let (env, ap, sta) = env_with(quiet_model(), Position::new(5.0, 0.0));
        let other = Ipv4Addr::new(10, 9, 9, 9);
        assert_eq!(env.rssi_at(other, sta, ch(1), 0.0), Err(RadioError::UnknownAp(other)));
        let nobody = MacAddr([9; 6]);
        assert_eq!(env.rssi_at(ap, nobody, ch(1), 0.0), Err(RadioError::UnknownStation(nobody)));
        assert_eq!(env.position_at(nobody, 0.0), Err(RadioError::UnknownStation(nobody)));
    }

    #[test]
    fn inactive_station_is_silent() {
        let (mut env, ap, sta) = env_with(quiet_model(), Position::new(5.0, 0.0));
        env.stations.get_mut(&sta).unwrap().active_from = 2.0;
        env.stations.get_mut(&sta).unwrap().active_until = Some(4.0);
        assert!(env.rssi_at(ap, sta, ch(1), 1.0).unwrap().is_none());
        assert!(env.rssi_at(ap, sta, ch(1), 2.0).unwrap().is_some());
        assert!(env.rssi_at(ap, sta, ch(1), 4.0).unwrap().is_none());
    }

    #[test]
    fn track_interpolation() {
        let track = MobilityTrack::new(vec![
            Waypoint { position: Position::new(0.0, 0.0), time: 1.0 },
            Waypoint { position: Position::new(10.0, 0.0), time: 3.0 },
            Waypoint { position: Position::new(10.0, 10.0), time: 4.0 },
        ])
        .unwrap();
        assert_eq!(track.position_at(-5.0), Position::new(0.0, 0.0));
        assert_eq!(track.position_at(1.0), Position::new(0.0, 0.0));
        assert_eq!(track.position_at(2.0), Position::new(5.0, 0.0));
        assert_eq!(track.position_at(3.0), Position::new(10.0, 0.0));
        assert_eq!(track.position_at(3.5), Position::new(10.0, 5.0));
        assert_eq!(track.position_at(99.0), Position::new(10.0, 10.0));
    }

    #[test]
    fn track_rejects_non_increasing_times() {
        let p = Position::new(0.0, 0.0);
        assert!(MobilityTrack::new(vec![]).is_err());
        assert!(MobilityTrack::new(vec![Waypoint { position: p, time: 1.0 }, Waypoint { position: p, time: 1.0 }])
            .is_err());
    }

    #[test]
    fn bounds_and_model_validation() {
        let mut env = RadioEnv::new(10.0, 10.0, RadioModel::default()).unwrap();
        let id = ApId::new(Ipv4Addr::new(1, 1, 1, 1), MacAddr::ZERO);
        assert!(matches!(env.add_ap(id, Position::new(11.0, 0.0)), Err(RadioError::OutOfBounds { .. })));
        env.add_ap(id, Position::new(1.0, 1.0)).unwrap();
        assert_eq!(env.add_ap(id, Position::new(2.0, 2.0)), Err(RadioError::DuplicateAp(id.ip)));
        let bad = RadioModel { rssi_floor: -20.0, rssi_ceiling: -20.0, ..RadioModel::default() };
        assert!(RadioEnv::new(10.0, 10.0, bad).is_err());
        let bad = RadioModel { path_loss_exponent: 0.0, ..RadioModel::default() };
        assert!(RadioEnv::new(10.0, 10.0, bad).is_err());
    }

    #[test]
    fn noise_is_keyed_and_roughly_standard() {
        let m = RadioModel { noise_sigma: 1.0, ..RadioModel::default() };
        let ap = Ipv4Addr::new(10, 0, 0, 1);
        let sta = MacAddr([0, 1, 2, 3, 4, 5]);
        assert_eq!(m.noise(ap, sta, 1.5), m.noise(ap, sta, 1.5));
        assert_ne!(m.noise(ap, sta, 1.5), m.noise(ap, sta, 2.5));
        let n = 20_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for i in 0..n {
            let v = m.noise(ap, sta, i as f64 * 0.5);
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
