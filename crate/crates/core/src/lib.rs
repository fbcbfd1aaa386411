//! Control-plane logic for a software-defined WLAN built on light virtual
//! access points (LVAPs).
//!
//! Everything here is `no_std` with `alloc`: the radio model, agent command
//! state, the controller/agent wire codec, RSSI smoothing, the attenuation
//! matrix, the assignment rule and the event-log checker. Transports,
//! threads, files and HTTP live in the `smartap` crate.
#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "testing"))]
extern crate std;

pub mod addr;
pub mod agent;
pub mod assignment;
pub mod events;
pub mod lvap;
pub mod matrix;
pub mod params;
pub mod protocol;
pub mod radio;
pub mod replay;
pub mod scan;
pub mod smoothing;
#[cfg(feature = "testing")]
pub mod testing;

pub use addr::{derive_bssid, ApId, Channel, MacAddr};
pub use assignment::{compute_assignment, Assignment, AssignmentOutcome, HandoffCommand, HandoffReason};
pub use lvap::Lvap;
pub use matrix::{update_matrix, AttenuationMatrix, Cell};
pub use params::{ParamChange, ParamName, Parameters};
pub use protocol::{ControlMessage, MessageKind, Payload};
pub use scan::{Observation, ScanReport, StaStats};
pub use smoothing::smooth_rssi;
