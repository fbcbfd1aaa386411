mod common;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::atomic::Ordering;
use std::time::Duration;

use axum::http::{Method, StatusCode};
use common::*;
use serde_json::{json, Value};
use smartap::api::{router, ApiServer};
use smartap::gateway;
use smartap_core::ScanReport;

const CLOSE_AND_MID: &[(f64, f64)] = &[(12.0, 10.0), (26.0, 10.0)];

#[tokio::test(flavor = "multi_thread")]
async fn fresh_system_reads_are_empty_and_valid() {
    let sys = start(&two_ap_scenario(0.0, "", CLOSE_AND_MID));
    let app = router(sys.api_state());
    for (uri, def) in [
        ("/api/clients", "ClientList"),
        ("/api/stations", "StationList"),
        ("/api/agents", "AgentList"),
        ("/api/stats", "StatsList"),
    ] {
        let (status, body) = call(&app, Method::GET, uri, None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body, json!([]), "{uri}");
        assert_schema(def, &body);
    }
    let (_, m) = call(&app, Method::GET, "/api/matrix", None).await;
    assert_eq!(m, json!({"timestamp": 0.0, "aps": [], "stas": [], "cells": []}));
    assert_schema("MatrixSnapshot", &m);

    let (_, p) = call(&app, Method::GET, "/api/params", None).await;
    assert_schema("ParamsView", &p);
    assert_eq!(p["params"]["alpha"], 0.8);
    assert_eq!(p["params"]["scan_interval"], 1.0);
    assert_eq!(p["params"]["hysteresis"], 6.0);
    assert_eq!(p["pending"], json!([]));
    sys.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn reads_after_iterations_are_consistent() {
    let mut sys = start(&two_ap_scenario(2.0, "", CLOSE_AND_MID));
    let app = router(sys.api_state());
    sys.step();

    // first sample is taken raw: the matrix equals the scans
    let (_, m) = call(&app, Method::GET, "/api/matrix", None).await;
    assert_schema("MatrixSnapshot", &m);
    let scans: Vec<ScanReport> = sys.gateway().list_records(gateway::LAST_SCANS).unwrap();
    let mut raw = Vec::new();
    for r in &scans {
        for o in &r.observations {
            raw.push((r.ap.ip.to_string(), o.sta_mac.to_string(), o.raw_rssi));
        }
    }
    let cells = m["cells"].as_array().unwrap();
    assert_eq!(cells.len(), raw.len());
    for (ap, sta, rssi) in &raw {
        let c = cells.iter().find(|c| c["ap"] == *ap && c["sta"] == *sta).expect("cell for every observation");
        assert_eq!(c["rssi"].as_f64().unwrap(), *rssi);
        assert_eq!(c["staleness"], 0);
    }

    for _ in 0..3 {
        sys.step();
    }
    let (_, clients) = call(&app, Method::GET, "/api/clients", None).await;
    let (_, stations) = call(&app, Method::GET, "/api/stations", None).await;
    let (_, agents) = call(&app, Method::GET, "/api/agents", None).await;
    let (_, stats) = call(&app, Method::GET, "/api/stats", None).await;
    let (_, m) = call(&app, Method::GET, "/api/matrix", None).await;
    assert_schema("ClientList", &clients);
    assert_schema("StationList", &stations);
    assert_schema("AgentList", &agents);
    assert_schema("StatsList", &stats);
    assert_schema("MatrixSnapshot", &m);

    let stations = stations.as_array().unwrap();
    assert_eq!(stations.len(), 2);
    for s in stations {
        let mac = &s["mac"];
        let c = clients.as_array().unwrap().iter().find(|c| c["mac"] == *mac).expect("stations are clients");
        assert_eq!(c["connected"], true);
        let engine_host = sys.engine().assignment().host(mac.as_str().unwrap().parse().unwrap()).unwrap();
        assert_eq!(s["host"], engine_host.ip.to_string());
        let cell = m["cells"].as_array().unwrap().iter().find(|c| c["sta"] == *mac && c["ap"] == s["host"]).unwrap();
        assert_eq!(s["rssi"], cell["rssi"]);
    }
    let agents = agents.as_array().unwrap();
    assert_eq!(agents.len(), 2);
    assert_eq!(agents.iter().map(|a| a["lvaps"].as_u64().unwrap()).sum::<u64>(), 2);

    let (status, only1) = call(&app, Method::GET, "/api/stats?ap=10.0.0.1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(only1.as_array().unwrap().iter().all(|r| r["ap"] == "10.0.0.1"));
    assert_error(&call(&app, Method::GET, "/api/stats?ap=10.0.0.9", None).await, StatusCode::NOT_FOUND, "not_found");
    assert_error(&call(&app, Method::GET, "/api/stats?ap=banana", None).await, StatusCode::BAD_REQUEST, "validation");
    sys.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn channel_change_is_accepted_then_applied() {
    let mut sys = start(&two_ap_scenario(0.0, "", CLOSE_AND_MID));
    let app = router(sys.api_state());
    sys.step();

    let (status, body) = call(&app, Method::POST, "/api/agents/10.0.0.2/channel", Some(json!({"channel": 11}))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_schema("ChannelAccepted", &body);
    assert_eq!(body["request"], json!({"ap": "10.0.0.2", "channel": 11}));
    // nothing happens until the loop runs
    assert_eq!(sys.agent(ip(2)).unwrap().channel().number(), 6);
    sys.step();
    assert_eq!(sys.agent(ip(2)).unwrap().channel().number(), 11);
    let (_, agents) = call(&app, Method::GET, "/api/agents", None).await;
    let a2 = agents.as_array().unwrap().iter().find(|a| a["ip"] == "10.0.0.2").unwrap().clone();
    assert_eq!(a2["channel"], 11);

    let uri = "/api/agents/10.0.0.1/channel";
    assert_error(&call(&app, Method::POST, uri, Some(json!({"channel": 14}))).await, StatusCode::BAD_REQUEST, "validation");
    assert_error(&call(&app, Method::POST, uri, Some(json!({"channel": 0}))).await, StatusCode::BAD_REQUEST, "validation");
    assert_error(&call(&app, Method::POST, uri, Some(json!({"chan": 3}))).await, StatusCode::BAD_REQUEST, "validation");
    assert_error(&call_raw(&app, Method::POST, uri, "{not json").await, StatusCode::BAD_REQUEST, "validation");
    assert_error(
        &call(&app, Method::POST, "/api/agents/10.0.0.77/channel", Some(json!({"channel": 3}))).await,
        StatusCode::NOT_FOUND,
        "not_found",
    );
    assert_error(
        &call(&app, Method::POST, "/api/agents/nope/channel", Some(json!({"channel": 3}))).await,
        StatusCode::BAD_REQUEST,
        "validation",
    );
    sys.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn manual_handoff_lands_next_iteration() {
    // the second station is closer to AP 1 but not by more than the hysteresis
    let mut sys = start(&two_ap_scenario(0.0, "", CLOSE_AND_MID));
    let app = router(sys.api_state());
    sys.step();
    let mid = sta_mac(2);
    assert_eq!(sys.engine().assignment().host(mid).unwrap().ip, ip(1));

    let req = json!({"sta_mac": mid.to_string(), "target_ip": "10.0.0.2"});
    let (status, body) = call(&app, Method::POST, "/api/handoff", Some(req)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    assert_schema("HandoffAccepted", &body);
    assert_eq!(body["request"]["source_ip"], "10.0.0.1");
    assert_eq!(sys.engine().assignment().host(mid).unwrap().ip, ip(1));

    let s = sys.step();
    assert_eq!(s.handoffs.len(), 1);
    assert_eq!(sys.engine().assignment().host(mid).unwrap().ip, ip(2));
    assert!(sys.agent(ip(2)).unwrap().hosts(mid));
    assert!(!sys.agent(ip(1)).unwrap().hosts(mid));
    let (_, stations) = call(&app, Method::GET, "/api/stations", None).await;
    let row = stations.as_array().unwrap().iter().find(|s| s["mac"] == mid.to_string()).unwrap().clone();
    assert_eq!(row["host"], "10.0.0.2");

    // same host
    let same = json!({"sta_mac": mid.to_string(), "target_ip": "10.0.0.2"});
    assert_error(&call(&app, Method::POST, "/api/handoff", Some(same)).await, StatusCode::BAD_REQUEST, "validation");
    let unknown_sta = json!({"sta_mac": "00:16:3e:99:99:99", "target_ip": "10.0.0.2"});
    assert_error(&call(&app, Method::POST, "/api/handoff", Some(unknown_sta)).await, StatusCode::NOT_FOUND, "not_found");
    let unknown_ap = json!({"sta_mac": mid.to_string(), "target_ip": "10.0.0.42"});
    assert_error(&call(&app, Method::POST, "/api/handoff", Some(unknown_ap)).await, StatusCode::NOT_FOUND, "not_found");
    let bad_mac = json!({"sta_mac": "zz", "target_ip": "10.0.0.1"});
    assert_error(&call(&app, Method::POST, "/api/handoff", Some(bad_mac)).await, StatusCode::BAD_REQUEST, "validation");
    assert_error(
        &call(&app, Method::POST, "/api/handoff", Some(json!({"sta_mac": mid.to_string()}))).await,
        StatusCode::BAD_REQUEST,
        "validation",
    );
    sys.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn scan_idle_busy_and_unreachable() {
    let mut sys = start(&two_ap_scenario(0.0, "", CLOSE_AND_MID));
    let app = router(sys.api_state());

    // busy before any report exists
    sys.agent(ip(1)).unwrap().faults().extra_scan_ms.store(400, Ordering::SeqCst);
    let slow = tokio::spawn({
        let app = app.clone();
        async move { call(&app, Method::POST, "/api/scan", Some(json!({"ap_ip": "10.0.0.1", "channel": 6}))).await }
    });
    wait_for("scan to start", || sys.agent(ip(1)).unwrap().is_scanning());
    let busy = call(&app, Method::POST, "/api/scan", Some(json!({"ap_ip": "10.0.0.1", "channel": 6}))).await;
    assert_error(&busy, StatusCode::CONFLICT, "busy");
    let (status, first) = slow.await.unwrap();
    assert_eq!(status, StatusCode::OK, "{first}");
    assert_schema("ScanResponse", &first);
    assert_eq!(first["stale"], false);

    // busy with a cached report
    let slow = tokio::spawn({
        let app = app.clone();
        async move { call(&app, Method::POST, "/api/scan", Some(json!({"ap_ip": "10.0.0.1", "channel": 1}))).await }
    });
    wait_for("scan to start", || sys.agent(ip(1)).unwrap().is_scanning());
    let (status, stale) = call(&app, Method::POST, "/api/scan", Some(json!({"ap_ip": "10.0.0.1", "channel": 6}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_schema("ScanResponse", &stale);
    assert_eq!(stale["stale"], true);
    assert_eq!(stale["report"], first["report"]);
    let (_, fresh) = slow.await.unwrap();
    assert_eq!(fresh["stale"], false);
    assert_eq!(fresh["report"]["channel"], 1);
    sys.agent(ip(1)).unwrap().faults().extra_scan_ms.store(0, Ordering::SeqCst);

    // idle agent with an explicit dwell; both stations are unassociated and so audible
    let (status, idle) =
        call(&app, Method::POST, "/api/scan", Some(json!({"ap_ip": "10.0.0.2", "channel": 6, "duration_ms": 20}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_schema("ScanResponse", &idle);
    assert_eq!(idle["stale"], false);
    assert_eq!(idle["report"]["observations"].as_array().unwrap().len(), 2);
    let w = &idle["report"]["observations"][0]["stats"];
    assert!((w["window_end"].as_f64().unwrap() - w["window_start"].as_f64().unwrap() - 0.02).abs() < 1e-9);

    let scan = |body: Value| {
        let app = app.clone();
        async move { call(&app, Method::POST, "/api/scan", Some(body)).await }
    };
    assert_error(&scan(json!({"ap_ip": "10.0.0.9", "channel": 6})).await, StatusCode::NOT_FOUND, "not_found");
    assert_error(&scan(json!({"ap_ip": "10.0.0.1", "channel": 99})).await, StatusCode::BAD_REQUEST, "validation");
    assert_error(
        &scan(json!({"ap_ip": "10.0.0.1", "channel": 6, "duration_ms": 0})).await,
        StatusCode::BAD_REQUEST,
        "validation",
    );

    // an agent that stops answering
    sys.agent(ip(2)).unwrap().faults().stall.store(true, Ordering::SeqCst);
    assert_error(&scan(json!({"ap_ip": "10.0.0.2", "channel": 6})).await, StatusCode::SERVICE_UNAVAILABLE, "agent_unreachable");
    // and one whose connection is gone
    sys.kill_agent(ip(1));
    wait_for("link to drop", || !sys.controller().get(ip(1)).unwrap().is_connected());
    assert_error(&scan(json!({"ap_ip": "10.0.0.1", "channel": 6})).await, StatusCode::SERVICE_UNAVAILABLE, "agent_unreachable");
    sys.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn params_are_fenced_to_the_loop_boundary() {
    let mut sys = start(&two_ap_scenario(0.0, "", CLOSE_AND_MID));
    let app = router(sys.api_state());
    sys.step();

    let (status, body) = call(&app, Method::PUT, "/api/params", Some(json!({"name": "alpha", "value": 0.5}))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_schema("ParamAccepted", &body);
    let (status, _) = call(&app, Method::PUT, "/api/params", Some(json!({"name": "hysteresis", "value": 2}))).await;
    assert_eq!(status, StatusCode::ACCEPTED);

    let (_, p) = call(&app, Method::GET, "/api/params", None).await;
    assert_schema("ParamsView", &p);
    assert_eq!(p["params"]["alpha"], 0.8);
    assert_eq!(p["pending"][0]["name"], "alpha");
    assert_eq!(p["pending"][0]["value"], 0.5);
    assert_eq!(p["pending"][1]["name"], "hysteresis");

    let s = sys.step();
    assert_eq!(s.params.alpha, 0.8, "the iteration that drained the change still ran on the old value");
    let (_, p) = call(&app, Method::GET, "/api/params", None).await;
    assert_eq!(p["params"]["alpha"], 0.5);
    assert_eq!(p["params"]["hysteresis"], 2.0);
    assert_eq!(p["pending"], json!([]));
    assert_eq!(sys.step().params.alpha, 0.5);

    let put = |body: Value| {
        let app = app.clone();
        async move { call(&app, Method::PUT, "/api/params", Some(body)).await }
    };
    assert_error(&put(json!({"name": "scan_interval", "value": 5})).await, StatusCode::BAD_REQUEST, "validation");
    assert_error(&put(json!({"name": "alpha", "value": 1.5})).await, StatusCode::BAD_REQUEST, "validation");
    assert_error(&put(json!({"name": "gamma", "value": 1})).await, StatusCode::BAD_REQUEST, "validation");
    assert_error(&put(json!({"name": "alpha", "value": "high"})).await, StatusCode::BAD_REQUEST, "validation");
    assert_error(&put(json!({"name": "stale_scans_limit", "value": 2.5})).await, StatusCode::BAD_REQUEST, "validation");
    sys.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn timed_out_agent_leaves_the_agent_list() {
    let mut sys = start(&two_ap_scenario(0.0, "", CLOSE_AND_MID));
    let app = router(sys.api_state());
    sys.step();
    let (_, agents) = call(&app, Method::GET, "/api/agents", None).await;
    assert_eq!(agents.as_array().unwrap().len(), 2);

    sys.agent(ip(2)).unwrap().faults().stall.store(true, Ordering::SeqCst);
    sys.step();
    let (_, agents) = call(&app, Method::GET, "/api/agents", None).await;
    let ips: Vec<&str> = agents.as_array().unwrap().iter().map(|a| a["ip"].as_str().unwrap()).collect();
    assert_eq!(ips, ["10.0.0.1"]);
    let channel = call(&app, Method::POST, "/api/agents/10.0.0.2/channel", Some(json!({"channel": 1}))).await;
    assert_error(&channel, StatusCode::NOT_FOUND, "not_found");
    sys.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_routes_and_methods_get_api_errors() {
    let sys = start(&two_ap_scenario(0.0, "", CLOSE_AND_MID));
    let app = router(sys.api_state());
    assert_error(&call(&app, Method::GET, "/api/nothing", None).await, StatusCode::NOT_FOUND, "not_found");
    assert_error(&call(&app, Method::DELETE, "/api/params", None).await, StatusCode::BAD_REQUEST, "validation");
    assert_error(&call(&app, Method::GET, "/api/handoff", None).await, StatusCode::BAD_REQUEST, "validation");
    sys.shutdown();
}

fn http(addr: std::net::SocketAddr, request: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    s.write_all(request.as_bytes()).unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

#[test]
fn served_over_http_with_cors() {
    let sys = start(&two_ap_scenario(0.0, "", CLOSE_AND_MID));
    let mut server = ApiServer::start(sys.api_state(), "127.0.0.1:0".parse().unwrap()).unwrap();
    let addr = server.local_addr();

    let resp = http(addr, "GET /api/params HTTP/1.1\r\nHost: x\r\nOrigin: http://ui.example\r\nConnection: close\r\n\r\n");
    let lower = resp.to_ascii_lowercase();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(lower.contains("access-control-allow-origin: *"), "{resp}");
    assert!(lower.contains("content-type: application/json"), "{resp}");
    let body: Value = serde_json::from_str(resp.split("\r\n\r\n").nth(1).unwrap()).unwrap();
    assert_schema("ParamsView", &body);

    let pre = http(
        addr,
        "OPTIONS /api/params HTTP/1.1\r\nHost: x\r\nOrigin: http://ui.example\r\nAccess-Control-Request-Method: PUT\r\nConnection: close\r\n\r\n",
    );
    let lower = pre.to_ascii_lowercase();
    assert!(pre.starts_with("HTTP/1.1 200"), "{pre}");
    assert!(lower.contains("access-control-allow-methods"), "{pre}");

    server.stop();
    sys.shutdown();
}
