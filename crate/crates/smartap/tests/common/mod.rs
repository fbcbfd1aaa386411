#![allow(dead_code)]

use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use smartap::scenario::Scenario;
use smartap::system::{System, SystemOptions};
use tower::ServiceExt;

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn load_scenario(name: &str) -> Scenario {
    Scenario::load(&repo_path(&format!("scenarios/{name}"))).expect("bundled scenario loads")
}

pub fn ip(last: u8) -> Ipv4Addr {
    Ipv4Addr::new(10, 0, 0, last)
}

pub fn ap_block(n: u8, x: f64, y: f64, channel: u8) -> String {
    format!("[[aps]]\nip = \"10.0.0.{n}\"\nmac = \"02:00:00:00:00:{n:02x}\"\nposition = [{x:?}, {y:?}]\nchannel = {channel}\n\n")
}

pub fn station_block(n: u8, x: f64, y: f64) -> String {
    format!("[[stations]]\nmac = \"00:16:3e:00:00:{n:02x}\"\nposition = [{x:?}, {y:?}]\n\n")
}

pub fn sta_mac(n: u8) -> smartap_core::MacAddr {
    format!("00:16:3e:00:00:{n:02x}").parse().unwrap()
}

/// Header for a 60 x 20 m world with the given shadowing and extra `[params]` lines.
pub fn header(sigma: f64, params: &str) -> String {
    format!("seed = 1\n\n[world]\nwidth = 60.0\nheight = 20.0\n\n[radio]\nnoise_sigma = {sigma:?}\n\n[params]\n{params}\n\n")
}

/// Two co-channel APs 40 m apart and the given stations.
pub fn two_ap_scenario(sigma: f64, params: &str, stations: &[(f64, f64)]) -> Scenario {
    let mut text = header(sigma, params);
    text += &ap_block(1, 10.0, 10.0, 6);
    text += &ap_block(2, 50.0, 10.0, 6);
    for (i, (x, y)) in stations.iter().enumerate() {
        text += &station_block(i as u8 + 1, *x, *y);
    }
    Scenario::from_toml_str(&text).expect("test scenario is valid")
}

pub fn start(scenario: &Scenario) -> System {
    System::start(scenario, SystemOptions::default()).expect("system starts")
}

pub fn wait_for(what: &str, mut cond: impl FnMut() -> bool) {
    let t = Instant::now();
    while !cond() {
        assert!(t.elapsed() < Duration::from_secs(5), "timed out waiting for {what}");
        std::thread::sleep(Duration::from_millis(5));
    }
}

pub fn api_schema() -> &'static Value {
    static SCHEMA: OnceLock<Value> = OnceLock::new();
    SCHEMA.get_or_init(|| {
        let text = std::fs::read_to_string(repo_path("docs/api-schema.json")).expect("schema file");
        serde_json::from_str(&text).expect("schema is JSON")
    })
}

/// Validates `value` against `#/$defs/<def>` of the published API schema.
pub fn check_schema(def: &str, value: &Value) -> Result<(), String> {
    let mut schema = api_schema().clone();
    assert!(schema["$defs"].get(def).is_some(), "schema has no definition {def}");
    schema["$ref"] = Value::String(format!("#/$defs/{def}"));
    let v = jsonschema::options().should_validate_formats(true).build(&schema).map_err(|e| e.to_string())?;
    let errors: Vec<String> = v.iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(format!("{def}: {}\n{value:#}", errors.join("; ")))
    }
}

pub fn assert_schema(def: &str, value: &Value) {
    if let Err(e) = check_schema(def, value) {
        panic!("{e}");
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let json = serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{uri}: body is not JSON ({e}): {bytes:?}"));
    (status, json)
}

pub async fn call_raw(app: &Router, method: Method, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).body(Body::from(body.to_string())).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).expect("error bodies are JSON"))
}

/// Asserts an error response has the given status and code and a schema-valid body.
pub fn assert_error(resp: &(StatusCode, Value), status: StatusCode, code: &str) {
    assert_eq!(resp.0, status, "{:#}", resp.1);
    assert_eq!(resp.1["code"], code, "{:#}", resp.1);
    assert_schema("ApiError", &resp.1);
}
