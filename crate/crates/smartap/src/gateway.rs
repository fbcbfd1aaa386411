//! In-memory table store between the selection loop and the API.
//!
//! Tables are created once at startup. Rows are JSON records checked
//! against the table's schema on every write, and each write replaces a row
//! (or a whole table) under one lock, so readers never see half a record.
//! The gateway also carries the two queues the loop drains: parameter
//! changes (applied at the end of an iteration) and operator commands
//! (executed at the start of the next one).

use std::collections::{BTreeMap, VecDeque};
use std::net::Ipv4Addr;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;
use smartap_core::params::{ParamChange, ParamError, ParamName, Parameters};
use smartap_core::{Channel, MacAddr};

pub const CLIENTS_EVER: &str = "clients_ever";
pub const STATIONS_CURRENT: &str = "stations_current";
pub const AGENTS: &str = "agents";
pub const MATRIX: &str = "matrix";
pub const STATS: &str = "stats";
pub const PARAMS: &str = "params";
pub const LAST_SCANS: &str = "last_scans";

/// Row key of the single matrix snapshot.
pub const MATRIX_KEY: &str = "current";
/// Row key of the applied parameter set.
pub const PARAMS_KEY: &str = "current";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldType {
    String,
    Number,
    Integer,
    Bool,
    Array,
    Object,
}

impl FieldType {
    fn matches(self, v: &Value) -> bool {
        match self {
            FieldType::String => v.is_string(),
            FieldType::Number => v.is_number(),
            FieldType::Integer => v.is_u64() || v.is_i64(),
            FieldType::Bool => v.is_boolean(),
            FieldType::Array => v.is_array(),
            FieldType::Object => v.is_object(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: &'static str,
    pub ty: FieldType,
    pub nullable: bool,
}

/// Flat record schema: every listed field must be present, nothing else may be.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schema(pub Vec<Field>);

impl Schema {
    pub fn new(fields: &[(&'static str, FieldType)]) -> Self {
        Schema(fields.iter().map(|&(name, ty)| Field { name, ty, nullable: false }).collect())
    }

    pub fn nullable(mut self, name: &str) -> Self {
        for f in &mut self.0 {
            if f.name == name {
                f.nullable = true;
            }
        }
        self
    }

    pub fn check(&self, record: &Value) -> Result<(), String> {
        let obj = record.as_object().ok_or("record must be an object")?;
        for f in &self.0 {
            match obj.get(f.name) {
                None => return Err(format!("missing field `{}`", f.name)),
                Some(Value::Null) if f.nullable => {}
                Some(v) if f.ty.matches(v) => {}
                Some(v) => return Err(format!("field `{}` must be {:?}, got {v}", f.name, f.ty)),
            }
        }
        if let Some(k) = obj.keys().find(|k| !self.0.iter().any(|f| f.name == k.as_str())) {
            return Err(format!("unknown field `{k}`"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("table `{0}` does not exist")]
    NoSuchTable(String),
    #[error("table `{0}` already exists")]
    AlreadyExists(String),
    #[error("no row `{key}` in `{table}`")]
    NotFound { table: String, key: String },
    #[error("{table}/{key}: {reason}")]
    Validation { table: String, key: String, reason: String },
    #[error(transparent)]
    Param(#[from] ParamError),
}

struct Table {
    schema: Schema,
    created_at: f64,
    rows: RwLock<BTreeMap<String, Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum ManualCommand {
    ChannelChange { ap: Ipv4Addr, channel: Channel },
    Handoff { sta: MacAddr, target: Ipv4Addr },
}

#[derive(Default)]
pub struct Gateway {
    tables: RwLock<BTreeMap<String, Arc<Table>>>,
    param_queue: Mutex<VecDeque<ParamChange>>,
    commands: Mutex<VecDeque<ManualCommand>>,
}

impl Gateway {
    pub fn new() -> Self {
        Self::default()
    }

    /// A gateway with every table the controller uses, created at `now`.
    pub fn init(now: f64) -> Self {
        let g = Gateway::new();
        for (name, schema) in catalogue() {
            g.create_table(name, schema, now).expect("catalogue names are unique");
        }
        g
    }

    pub fn create_table(&self, name: &str, schema: Schema, now: f64) -> Result<(), GatewayError> {
        let mut t = self.tables.write();
        if t.contains_key(name) {
            return Err(GatewayError::AlreadyExists(name.into()));
        }
        t.insert(name.into(), Arc::new(Table { schema, created_at: now, rows: RwLock::new(BTreeMap::new()) }));
        Ok(())
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.read().keys().cloned().collect()
    }

    pub fn created_at(&self, table: &str) -> Result<f64, GatewayError> {
        Ok(self.table(table)?.created_at)
    }

    fn table(&self, name: &str) -> Result<Arc<Table>, GatewayError> {
        self.tables.read().get(name).cloned().ok_or_else(|| GatewayError::NoSuchTable(name.into()))
    }

    fn checked(t: &Table, table: &str, key: &str, record: Value) -> Result<Value, GatewayError> {
        t.schema.check(&record).map_err(|reason| GatewayError::Validation {
            table: table.into(),
            key: key.into(),
            reason,
        })?;
        Ok(record)
    }

    pub fn put(&self, table: &str, key: &str, record: Value) -> Result<(), GatewayError> {
        let t = self.table(table)?;
        let record = Self::checked(&t, table, key, record)?;
        t.rows.write().insert(key.into(), record);
        Ok(())
    }

    pub fn put_record<T: Serialize>(&self, table: &str, key: &str, record: &T) -> Result<(), GatewayError> {
        self.put(table, key, serde_json::to_value(record).expect("records serialize"))
    }

    pub fn get(&self, table: &str, key: &str) -> Result<Value, GatewayError> {
        self.table(table)?
            .rows
            .read()
            .get(key)
            .cloned()
            .ok_or_else(|| GatewayError::NotFound { table: table.into(), key: key.into() })
    }

    pub fn get_record<T: DeserializeOwned>(&self, table: &str, key: &str) -> Result<T, GatewayError> {
        let v = self.get(table, key)?;
        serde_json::from_value(v).map_err(|e| GatewayError::Validation {
            table: table.into(),
            key: key.into(),
            reason: e.to_string(),
        })
    }

    /// All rows in key order.
    pub fn list(&self, table: &str) -> Result<Vec<(String, Value)>, GatewayError> {
        Ok(self.table(table)?.rows.read().iter().map(|(k, v)| (k.clone(), v.clone())).collect())
    }

    pub fn list_records<T: DeserializeOwned>(&self, table: &str) -> Result<Vec<T>, GatewayError> {
        self.list(table)?
            .into_iter()
            .map(|(key, v)| {
                serde_json::from_value(v).map_err(|e| GatewayError::Validation {
                    table: table.into(),
                    key,
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    pub fn delete(&self, table: &str, key: &str) -> Result<Value, GatewayError> {
        self.table(table)?
            .rows
            .write()
            .remove(key)
            .ok_or_else(|| GatewayError::NotFound { table: table.into(), key: key.into() })
    }

    /// Replaces the whole content of `table` in one step. Nothing is written
    /// if any row fails validation.
    pub fn sync_table(&self, table: &str, rows: BTreeMap<String, Value>) -> Result<(), GatewayError> {
        let t = self.table(table)?;
        let rows = rows
            .into_iter()
            .map(|(k, v)| Self::checked(&t, table, &k, v).map(|v| (k, v)))
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        *t.rows.write() = rows;
        Ok(())
    }

    pub fn sync_records<T: Serialize>(
        &self,
        table: &str,
        rows: impl IntoIterator<Item = (String, T)>,
    ) -> Result<(), GatewayError> {
        let rows = rows.into_iter().map(|(k, r)| (k, serde_json::to_value(r).expect("records serialize"))).collect();
        self.sync_table(table, rows)
    }

    /// Queues a parameter edit after validating it.
    pub fn enqueue_param_change(&self, name: ParamName, value: f64, now: f64) -> Result<ParamChange, GatewayError> {
        let change = ParamChange::new(name, value, now)?;
        self.param_queue.lock().push_back(change.clone());
        Ok(change)
    }

    pub fn drain_param_changes(&self) -> Vec<ParamChange> {
        self.param_queue.lock().drain(..).collect()
    }

    pub fn pending_param_changes(&self) -> Vec<ParamChange> {
        self.param_queue.lock().iter().cloned().collect()
    }

    pub fn enqueue_command(&self, cmd: ManualCommand) {
        self.commands.lock().push_back(cmd);
    }

    pub fn drain_commands(&self) -> Vec<ManualCommand> {
        self.commands.lock().drain(..).collect()
    }

    pub fn pending_commands(&self) -> Vec<ManualCommand> {
        self.commands.lock().iter().cloned().collect()
    }

    /// The applied parameter set as last published by the loop.
    pub fn params(&self) -> Option<Parameters> {
        self.get_record(PARAMS, PARAMS_KEY).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientRecord {
    pub mac: MacAddr,
    pub bssid: MacAddr,
    pub first_seen: f64,
    pub last_seen: f64,
    pub connected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationRecord {
    pub mac: MacAddr,
    pub bssid: MacAddr,
    pub host: Ipv4Addr,
    pub host_mac: MacAddr,
    /// Smoothed RSSI at the host, if the host currently has a matrix cell.
    pub rssi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentRecord {
    pub ip: Ipv4Addr,
    pub mac: MacAddr,
    pub channel: Channel,
    pub lvaps: usize,
    pub last_heartbeat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixCellView {
    pub ap: Ipv4Addr,
    pub sta: MacAddr,
    pub rssi: f64,
    pub staleness: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSnapshot {
    pub timestamp: f64,
    pub aps: Vec<Ipv4Addr>,
    pub stas: Vec<MacAddr>,
    pub cells: Vec<MatrixCellView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsRecord {
    pub ap: Ipv4Addr,
    pub sta: MacAddr,
    pub packet_count: u64,
    pub airtime: f64,
    pub avg_rssi: f64,
    pub smoothed_rssi: Option<f64>,
    pub window_start: f64,
    pub window_end: f64,
}

pub fn stats_key(ap: Ipv4Addr, sta: MacAddr) -> String {
    format!("{ap}/{sta}")
}

/// Schemas of the controller's tables.
pub fn catalogue() -> Vec<(&'static str, Schema)> {
    use FieldType::*;
    vec![
        (
            CLIENTS_EVER,
            Schema::new(&[
                ("mac", String),
                ("bssid", String),
                ("first_seen", Number),
                ("last_seen", Number),
                ("connected", Bool),
            ]),
        ),
        (
            STATIONS_CURRENT,
            Schema::new(&[("mac", String), ("bssid", String), ("host", String), ("host_mac", String), ("rssi", Number)])
                .nullable("rssi"),
        ),
        (
            AGENTS,
            Schema::new(&[("ip", String), ("mac", String), ("channel", Integer), ("lvaps", Integer), ("last_heartbeat", Number)]),
        ),
        (MATRIX, Schema::new(&[("timestamp", Number), ("aps", Array), ("stas", Array), ("cells", Array)])),
        (
            STATS,
            Schema::new(&[
                ("ap", String),
                ("sta", String),
                ("packet_count", Integer),
                ("airtime", Number),
                ("avg_rssi", Number),
                ("smoothed_rssi", Number),
                ("window_start", Number),
                ("window_end", Number),
            ])
            .nullable("smoothed_rssi"),
        ),
        (
            PARAMS,
            Schema::new(&[
                ("alpha", Number),
                ("scan_interval", Number),
                ("hysteresis", Number),
                ("load_penalty_beta", Number),
                ("stale_scans_limit", Integer),
                ("scan_duration", Number),
            ]),
        ),
        (LAST_SCANS, Schema::new(&[("ap", Object), ("channel", Integer), ("timestamp", Number), ("observations", Array)])),
    ]
}
