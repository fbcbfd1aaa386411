//! JSON management API.
//!
//! Reads come straight from the gateway tables. Mutations are queued and
//! answered with 202; the loop applies them at its next boundary. The one
//! exception is `POST /api/scan`, which asks the agent directly.
//!
//! Every error body is `{"code": ..., "message": ...}`.

use std::collections::HashMap;
use std::net::{Ipv4Addr, SocketAddr};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use smartap_core::events::Event;
use smartap_core::protocol::{ControlMessage, MessageKind, Payload};
use smartap_core::{Channel, MacAddr, ParamChange, ParamName, Parameters, ScanReport};
use tower_http::cors::CorsLayer;

use crate::controller::{Controller, DEFAULT_REQUEST_TIMEOUT};
use crate::eventlog::EventLog;
use crate::gateway::{self, AgentRecord, ClientRecord, Gateway, ManualCommand, MatrixSnapshot, StationRecord, StatsRecord};
use crate::link::LinkError;
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NotFound,
    Validation,
    Busy,
    AgentUnreachable,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Validation => StatusCode::BAD_REQUEST,
            ErrorCode::Busy => StatusCode::CONFLICT,
            ErrorCode::AgentUnreachable => StatusCode::SERVICE_UNAVAILABLE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { code, message: message.into() }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Validation, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
pub struct ApiState {
    pub gateway: Arc<Gateway>,
    pub controller: Arc<Controller>,
    pub world: World,
    pub log: Arc<EventLog>,
    pub request_timeout: Duration,
}

impl ApiState {
    pub fn new(gateway: Arc<Gateway>, controller: Arc<Controller>, world: World, log: Arc<EventLog>) -> Self {
        ApiState { gateway, controller, world, log, request_timeout: DEFAULT_REQUEST_TIMEOUT }
    }

    fn mutation(&self, action: &str, detail: Value) {
        self.log.record_current(|iteration| Event::ApiMutation { iteration, action: action.into(), detail });
    }

    fn params(&self) -> Parameters {
        self.gateway.params().unwrap_or_default()
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("invalid body: {e}")))
}

fn parse_ip(s: &str) -> ApiResult<Ipv4Addr> {
    s.parse().map_err(|_| ApiError::validation(format!("`{s}` is not an IPv4 address")))
}

fn parse_channel(n: i64) -> ApiResult<Channel> {
    Channel::new(n).map_err(|e| ApiError::validation(e.to_string()))
}

fn table<T: for<'de> Deserialize<'de>>(st: &ApiState, name: &str) -> ApiResult<Vec<T>> {
    st.gateway.list_records(name).map_err(|e| ApiError::new(ErrorCode::NotFound, e.to_string()))
}

fn connected_agent(st: &ApiState, ip: Ipv4Addr) -> ApiResult<AgentRecord> {
    st.gateway
        .get_record(gateway::AGENTS, &ip.to_string())
        .map_err(|_| ApiError::not_found(format!("no connected agent {ip}")))
}

async fn clients(State(st): State<ApiState>) -> ApiResult<Json<Vec<ClientRecord>>> {
    table(&st, gateway::CLIENTS_EVER).map(Json)
}

async fn stations(State(st): State<ApiState>) -> ApiResult<Json<Vec<StationRecord>>> {
    table(&st, gateway::STATIONS_CURRENT).map(Json)
}

async fn agents(State(st): State<ApiState>) -> ApiResult<Json<Vec<AgentRecord>>> {
    table(&st, gateway::AGENTS).map(Json)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelBody {
    channel: i64,
}

async fn set_channel(State(st): State<ApiState>, Path(ip): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let ip = parse_ip(&ip)?;
    let b: ChannelBody = parse_body(&body)?;
    let channel = parse_channel(b.channel)?;
    connected_agent(&st, ip)?;
    st.gateway.enqueue_command(ManualCommand::ChannelChange { ap: ip, channel });
    let detail = json!({"ap": ip, "channel": channel});
    st.mutation("set_channel", detail.clone());
    Ok((StatusCode::ACCEPTED, Json(json!({"status": "accepted", "request": detail}))))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HandoffBody {
    sta_mac: String,
    target_ip: String,
}

async fn handoff(State(st): State<ApiState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let b: HandoffBody = parse_body(&body)?;
    let sta: MacAddr = b.sta_mac.parse().map_err(|_| ApiError::validation(format!("`{}` is not a MAC address", b.sta_mac)))?;
    let target = parse_ip(&b.target_ip)?;
    let station: StationRecord = st
        .gateway
        .get_record(gateway::STATIONS_CURRENT, &sta.to_string())
        .map_err(|_| ApiError::not_found(format!("station {sta} is not associated")))?;
    connected_agent(&st, target)?;
    if station.host == target {
        return Err(ApiError::validation(format!("station {sta} is already on {target}")));
    }
    st.gateway.enqueue_command(ManualCommand::Handoff { sta, target });
    let detail = json!({"sta_mac": sta, "target_ip": target, "source_ip": station.host});
    st.mutation("handoff", detail.clone());
    Ok((StatusCode::ACCEPTED, Json(json!({"status": "accepted", "request": detail}))))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanBody {
    ap_ip: String,
    channel: i64,
    duration_ms: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResponse {
    /// True when the agent was busy and this is its previous report.
    pub stale: bool,
    pub report: ScanReport,
}

async fn scan(State(st): State<ApiState>, body: Bytes) -> ApiResult<Json<ScanResponse>> {
    let b: ScanBody = parse_body(&body)?;
    let ip = parse_ip(&b.ap_ip)?;
    let channel = parse_channel(b.channel)?;
    let duration_ms = match b.duration_ms {
        Some(0) => return Err(ApiError::validation("duration_ms must be positive")),
        Some(d) if d as f64 > smartap_core::params::MAX_SCAN_DURATION * 1000.0 => {
            return Err(ApiError::validation("duration_ms must not exceed 1000"))
        }
        Some(d) => d,
        None => ((st.params().scan_duration * 1000.0).round() as u32).max(1),
    };
    let link = st.controller.get(ip).ok_or_else(|| ApiError::not_found(format!("unknown agent {ip}")))?;
    if !link.is_connected() {
        return Err(ApiError::new(ErrorCode::AgentUnreachable, format!("agent {ip} is disconnected")));
    }
    let timeout = Duration::from_millis(duration_ms as u64) + st.request_timeout;
    let reply = tokio::task::spawn_blocking(move || {
        link.request(move |seq| ControlMessage::scan_request(seq, channel, duration_ms), timeout)
    })
    .await
    .map_err(|e| ApiError::new(ErrorCode::AgentUnreachable, e.to_string()))?;
    let unreachable = |e: String| ApiError::new(ErrorCode::AgentUnreachable, format!("agent {ip}: {e}"));
    match reply {
        Ok(ControlMessage { payload: Payload::ScanReport(report), .. }) => Ok(Json(ScanResponse { stale: false, report })),
        Ok(ControlMessage { kind: MessageKind::Busy, payload: Payload::Busy { last: Some(report) }, .. }) => {
            Ok(Json(ScanResponse { stale: true, report }))
        }
        Ok(ControlMessage { kind: MessageKind::Busy, .. }) => {
            Err(ApiError::new(ErrorCode::Busy, format!("agent {ip} is scanning and has no earlier report")))
        }
        Ok(ControlMessage { payload: Payload::Error { message, .. }, .. }) => Err(unreachable(message)),
        Ok(m) => Err(unreachable(format!("unexpected {:?}", m.kind))),
        Err(e @ (LinkError::Timeout | LinkError::Disconnected | LinkError::Closed | LinkError::Io(_))) => {
            Err(unreachable(e.to_string()))
        }
        Err(e) => Err(unreachable(e.to_string())),
    }
}

#[derive(Serialize)]
struct ParamsView {
    params: Parameters,
    pending: Vec<ParamChange>,
}

async fn get_params(State(st): State<ApiState>) -> Json<ParamsView> {
    Json(ParamsView { params: st.params(), pending: st.gateway.pending_param_changes() })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamBody {
    name: String,
    value: f64,
}

async fn put_params(State(st): State<ApiState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let b: ParamBody = parse_body(&body)?;
    let name: ParamName = b.name.parse().map_err(|e: smartap_core::params::ParamError| ApiError::validation(e.to_string()))?;
    let change = st
        .gateway
        .enqueue_param_change(name, b.value, st.world.now())
        .map_err(|e| ApiError::validation(e.to_string()))?;
    st.mutation("set_param", json!({"name": name, "value": b.value}));
    Ok((StatusCode::ACCEPTED, Json(json!({"status": "accepted", "change": change}))))
}

async fn matrix(State(st): State<ApiState>) -> Json<MatrixSnapshot> {
    Json(st.gateway.get_record(gateway::MATRIX, gateway::MATRIX_KEY).unwrap_or_default())
}

async fn stats(State(st): State<ApiState>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Json<Vec<StatsRecord>>> {
    let rows: Vec<StatsRecord> = table(&st, gateway::STATS)?;
    match q.get("ap") {
        None => Ok(Json(rows)),
        Some(ip) => {
            let ip = parse_ip(ip)?;
            connected_agent(&st, ip)?;
            Ok(Json(rows.into_iter().filter(|r| r.ap == ip).collect()))
        }
    }
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::validation("method not allowed on this endpoint")
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/api/clients", get(clients))
        .route("/api/stations", get(stations))
        .route("/api/agents", get(agents))
        .route("/api/agents/{ip}/channel", post(set_channel))
        .route("/api/handoff", post(handoff))
        .route("/api/scan", post(scan))
        .route("/api/params", get(get_params).put(put_params))
        .route("/api/matrix", get(matrix))
        .route("/api/stats", get(stats))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// The API served on its own runtime thread.
pub struct ApiServer {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ApiServer {
    pub fn start(state: ApiState, addr: SocketAddr) -> std::io::Result<ApiServer> {
        let (tx_addr, rx_addr) = std::sync::mpsc::channel();
        let (tx_stop, rx_stop) = tokio::sync::oneshot::channel::<()>();
        let thread = thread::Builder::new().name("api".into()).spawn(move || {
            let rt = match tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build() {
                Ok(rt) => rt,
                Err(e) => {
                    let _ = tx_addr.send(Err(e));
                    return;
                }
            };
            rt.block_on(async move {
                let listener = match tokio::net::TcpListener::bind(addr).await {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = tx_addr.send(Err(e));
                        return;
                    }
                };
                let _ = tx_addr.send(listener.local_addr());
                let served = axum::serve(listener, router(state)).with_graceful_shutdown(async {
                    let _ = rx_stop.await;
                });
                if let Err(e) = served.await {
                    log::error!("api server failed: {e}");
                }
            });
        })?;
        let addr = rx_addr.recv().map_err(|_| std::io::Error::other("api thread exited"))??;
        log::info!("management API listening on http://{addr}");
        Ok(ApiServer { addr, shutdown: Some(tx_stop), thread: Some(thread) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ApiServer {
    fn drop(&mut self) {
        self.stop();
    }
}
