//! Runtime for the smart AP selection controller: simulated agents, agent
//! links, the selection loop, the data gateway, the management API and the
//! scenario runner.

pub mod agent;
pub mod api;
pub mod controller;
pub mod engine;
pub mod eventlog;
pub mod gateway;
pub mod link;
pub mod scenario;
pub mod system;
pub mod world;
