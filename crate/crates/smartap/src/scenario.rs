//! Scenario files: world geometry, APs, stations and their movement, radio
//! model and loop parameters, in TOML. See `docs/scenario.md`.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;
use std::path::Path;

use serde::Deserialize;
use smartap_core::radio::{MobilityTrack, Position, RadioEnv, RadioModel, StationSite, Waypoint};
use smartap_core::{ApId, Channel, MacAddr, ParamName, Parameters};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, message: impl std::fmt::Display) -> Self {
        ScenarioError::Invalid { field: field.into(), message: message.to_string() }
    }

    /// The offending field, for validation errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            ScenarioError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    seed: Option<u64>,
    ssid: Option<String>,
    world: RawWorld,
    #[serde(default)]
    radio: Option<RadioModel>,
    #[serde(default)]
    params: Option<toml::Table>,
    #[serde(default)]
    aps: Vec<RawAp>,
    #[serde(default)]
    stations: Vec<RawStation>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorld {
    width: f64,
    height: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAp {
    ip: String,
    mac: String,
    position: [f64; 2],
    channel: i64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWaypoint {
    x: f64,
    y: f64,
    t: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWalk {
    from: [f64; 2],
    to: [f64; 2],
    speed: f64,
    #[serde(default)]
    start: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStation {
    mac: String,
    position: Option<[f64; 2]>,
    waypoints: Option<Vec<RawWaypoint>>,
    walk: Option<RawWalk>,
    offered_load_pps: Option<f64>,
    active_from: Option<f64>,
    active_until: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApSpec {
    pub id: ApId,
    pub position: Position,
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub ssid: String,
    pub width: f64,
    pub height: f64,
    pub radio: RadioModel,
    pub params: Parameters,
    pub aps: Vec<ApSpec>,
    pub stations: Vec<StationSite>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawScenario) -> Result<Self, ScenarioError> {
        let mut radio = raw.radio.unwrap_or_default();
        if let Some(seed) = raw.seed {
            radio.rng_seed = seed;
        }
        radio.validate().map_err(|e| ScenarioError::invalid("radio", e))?;
        let world = raw.world;
        if !(world.width > 0.0 && world.height > 0.0 && world.width.is_finite() && world.height.is_finite()) {
            return Err(ScenarioError::invalid("world", "width and height must be positive"));
        }

        let mut params = Parameters::default();
        if let Some(table) = raw.params {
            for (key, value) in table {
                let field = format!("params.{key}");
                let name: ParamName = key.parse().map_err(|e| ScenarioError::invalid(&field, e))?;
                let v = match value {
                    toml::Value::Float(f) => f,
                    toml::Value::Integer(i) => i as f64,
                    other => return Err(ScenarioError::invalid(&field, format!("expected a number, got {other}"))),
                };
                params.set(name, v).map_err(|e| ScenarioError::invalid(&field, e))?;
            }
        }

        let in_bounds = |p: [f64; 2]| {
            p.iter().all(|v| v.is_finite()) && (0.0..=world.width).contains(&p[0]) && (0.0..=world.height).contains(&p[1])
        };

        let mut aps = Vec::new();
        let mut ips = BTreeSet::new();
        let mut macs = BTreeSet::new();
        for (i, a) in raw.aps.into_iter().enumerate() {
            let ip: Ipv4Addr =
                a.ip.parse().map_err(|_| ScenarioError::invalid(format!("aps[{i}].ip"), "not an IPv4 address"))?;
            if !ips.insert(ip) {
                return Err(ScenarioError::invalid(format!("aps[{i}].ip"), format!("duplicate AP ip {ip}")));
            }
            let mac: MacAddr = a.mac.parse().map_err(|e| ScenarioError::invalid(format!("aps[{i}].mac"), e))?;
            if mac.is_zero() || !macs.insert(mac) {
                return Err(ScenarioError::invalid(format!("aps[{i}].mac"), format!("duplicate or zero mac {mac}")));
            }
            if !in_bounds(a.position) {
                return Err(ScenarioError::invalid(format!("aps[{i}].position"), "outside world bounds"));
            }
            let channel = Channel::new(a.channel).map_err(|e| ScenarioError::invalid(format!("aps[{i}].channel"), e))?;
            aps.push(ApSpec { id: ApId::new(ip, mac), position: Position::new(a.position[0], a.position[1]), channel });
        }

        let mut stations = Vec::new();
        let mut sta_macs = BTreeSet::new();
        for (i, s) in raw.stations.into_iter().enumerate() {
            let field = |f: &str| format!("stations[{i}].{f}");
            let mac: MacAddr = s.mac.parse().map_err(|e| ScenarioError::invalid(field("mac"), e))?;
            if mac.is_zero() || !sta_macs.insert(mac) {
                return Err(ScenarioError::invalid(field("mac"), format!("duplicate or zero station mac {mac}")));
            }
            let track = match (s.position, s.waypoints, s.walk) {
                (Some(p), None, None) => {
                    if !in_bounds(p) {
                        return Err(ScenarioError::invalid(field("position"), "outside world bounds"));
                    }
                    MobilityTrack::stationary(Position::new(p[0], p[1]))
                }
                (None, Some(wps), None) => {
                    if let Some(j) = wps.iter().position(|w| !in_bounds([w.x, w.y])) {
                        return Err(ScenarioError::invalid(field(&format!("waypoints[{j}]")), "outside world bounds"));
                    }
                    let wps = wps.into_iter().map(|w| Waypoint { position: Position::new(w.x, w.y), time: w.t }).collect();
                    MobilityTrack::new(wps).map_err(|e| ScenarioError::invalid(field("waypoints"), e))?
                }
                (None, None, Some(w)) => {
                    if !in_bounds(w.from) || !in_bounds(w.to) {
                        return Err(ScenarioError::invalid(field("walk"), "outside world bounds"));
                    }
                    MobilityTrack::walk(
                        Position::new(w.from[0], w.from[1]),
                        Position::new(w.to[0], w.to[1]),
                        w.speed,
                        w.start,
                    )
                    .map_err(|e| ScenarioError::invalid(field("walk"), e))?
                }
                _ => {
                    return Err(ScenarioError::invalid(
                        field("position"),
                        "exactly one of position, waypoints or walk is required",
                    ))
                }
            };
            let mut site = StationSite::new(mac, track);
            if let Some(load) = s.offered_load_pps {
                if !(load >= 0.0 && load.is_finite()) {
                    return Err(ScenarioError::invalid(field("offered_load_pps"), "must be >= 0"));
                }
                site.offered_load_pps = load;
            }
            site.active_from = s.active_from.unwrap_or(0.0);
            site.active_until = s.active_until;
            if site.active_until.is_some_and(|end| end <= site.active_from) {
                return Err(ScenarioError::invalid(field("active_until"), "must be after active_from"));
            }
            stations.push(site);
        }

        Ok(Scenario {
            ssid: raw.ssid.unwrap_or_else(|| "smartap".to_string()),
            width: world.width,
            height: world.height,
            radio,
            params,
            aps,
            stations,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.radio.rng_seed = seed;
        self
    }

    pub fn build_env(&self) -> Result<RadioEnv, ScenarioError> {
        let mut env = RadioEnv::new(self.width, self.height, self.radio.clone())
            .map_err(|e| ScenarioError::invalid("radio", e))?;
        for (i, ap) in self.aps.iter().enumerate() {
            env.add_ap(ap.id, ap.position).map_err(|e| ScenarioError::invalid(format!("aps[{i}]"), e))?;
        }
        for (i, st) in self.stations.iter().enumerate() {
            env.add_station(st.clone()).map_err(|e| ScenarioError::invalid(format!("stations[{i}]"), e))?;
        }
        Ok(env)
    }
}
