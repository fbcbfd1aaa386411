//! Simulated AP agent: a thread that speaks the control protocol and drives
//! an [`AgentCore`] against the shared radio world.
//!
//! Commands are handled one at a time in arrival order. A scan occupies the
//! radio for its dwell time on a helper thread; meanwhile the agent keeps
//! answering commands and refuses further scans with BUSY.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use parking_lot::Mutex;
use smartap_core::agent::{AgentCore, AgentError};
use smartap_core::protocol::{ControlMessage, ErrorCode, Hello, MessageKind, Payload};
use smartap_core::{ApId, Channel, Lvap, MacAddr};

use crate::link::{read_frame, write_frame, LinkError, Stream};
use crate::world::World;

/// Knobs for injecting failures in tests.
#[derive(Debug, Default)]
pub struct AgentFaults {
    /// Answer ADD_LVAP with an error instead of installing the LVAP.
    pub reject_add: AtomicBool,
    /// Silently drop every incoming request.
    pub stall: AtomicBool,
    /// Extra wall-clock delay added to each scan, milliseconds.
    pub extra_scan_ms: AtomicU64,
}

struct Writer {
    stream: Stream,
    next_seq: u64,
}

impl Writer {
    fn send(&mut self, build: impl FnOnce(u64) -> ControlMessage) -> Result<(), LinkError> {
        self.next_seq += 1;
        let msg = build(self.next_seq);
        write_frame(&mut self.stream, &msg)
    }
}

/// Handle to a running agent. The LVAP table stays inspectable after the
/// connection drops, and the same core can be reconnected.
pub struct AgentHandle {
    core: Arc<Mutex<AgentCore>>,
    faults: Arc<AgentFaults>,
    stream: Stream,
    thread: Option<JoinHandle<()>>,
}

impl AgentHandle {
    pub fn id(&self) -> ApId {
        self.core.lock().id()
    }

    pub fn channel(&self) -> Channel {
        self.core.lock().channel()
    }

    pub fn hosts(&self, sta: MacAddr) -> bool {
        self.core.lock().hosts(sta)
    }

    pub fn lvaps(&self) -> Vec<Lvap> {
        self.core.lock().lvaps().iter().cloned().collect()
    }

    pub fn is_scanning(&self) -> bool {
        self.core.lock().is_scanning()
    }

    pub fn faults(&self) -> &AgentFaults {
        &self.faults
    }

    pub fn core(&self) -> Arc<Mutex<AgentCore>> {
        self.core.clone()
    }

    pub fn is_running(&self) -> bool {
        self.thread.as_ref().is_some_and(|t| !t.is_finished())
    }

    /// Drops the connection and waits for the agent thread to exit.
    pub fn disconnect(&mut self) {
        self.stream.shutdown();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Re-attaches the same agent state over a new stream (sends a fresh HELLO).
    pub fn reconnect(&mut self, world: &World, stream: Stream) -> std::io::Result<()> {
        self.disconnect();
        let shutdown_handle = stream.try_clone()?;
        let thread = start_thread(self.core.clone(), self.faults.clone(), world.clone(), stream)?;
        self.stream = shutdown_handle;
        self.thread = Some(thread);
        Ok(())
    }
}

impl Drop for AgentHandle {
    fn drop(&mut self) {
        self.disconnect();
    }
}

/// Starts an agent for `id` on `channel`, connected over `stream`.
pub fn spawn_agent(id: ApId, channel: Channel, world: &World, stream: Stream) -> std::io::Result<AgentHandle> {
    let core = Arc::new(Mutex::new(AgentCore::new(id, channel)));
    let faults = Arc::new(AgentFaults::default());
    let shutdown_handle = stream.try_clone()?;
    let thread = start_thread(core.clone(), faults.clone(), world.clone(), stream)?;
    Ok(AgentHandle { core, faults, stream: shutdown_handle, thread: Some(thread) })
}

fn start_thread(
    core: Arc<Mutex<AgentCore>>,
    faults: Arc<AgentFaults>,
    world: World,
    stream: Stream,
) -> std::io::Result<JoinHandle<()>> {
    let name = format!("agent-{}", core.lock().id());
    thread::Builder::new().name(name).spawn(move || {
        if let Err(e) = run(core, faults, world, stream) {
            log::debug!("agent stopped: {e}");
        }
    })
}

fn run(core: Arc<Mutex<AgentCore>>, faults: Arc<AgentFaults>, world: World, stream: Stream) -> Result<(), LinkError> {
    let mut reader = stream.try_clone()?;
    let writer = Arc::new(Mutex::new(Writer { stream, next_seq: 0 }));
    let (id, channel) = {
        let c = core.lock();
        (c.id(), c.channel())
    };
    writer.lock().send(|seq| {
        ControlMessage::hello(seq, Hello { ap: id, channel, capabilities: vec!["lvap".into(), "scan".into()] })
    })?;

    loop {
        let msg = read_frame(&mut reader)?;
        if !msg.kind.is_request() {
            // ACK for our HELLO; nothing else is expected
            continue;
        }
        if faults.stall.load(Ordering::SeqCst) {
            continue;
        }
        let req = msg.seq;
        match msg.payload {
            Payload::Empty {} if msg.kind == MessageKind::Ping => {
                writer.lock().send(|seq| ControlMessage::pong(seq, req))?;
            }
            Payload::AddLvap(lvap) => {
                if faults.reject_add.load(Ordering::SeqCst) {
                    writer.lock().send(|seq| ControlMessage::error(seq, req, ErrorCode::Unavailable, "add refused"))?;
                    continue;
                }
                let sta = lvap.sta_mac;
                let result = {
                    let mut c = core.lock();
                    c.handle_add_lvap(lvap).map(|_| c.channel())
                };
                match result {
                    Ok(ch) => {
                        // stations unknown to the radio world are simply not simulated
                        let _ = world.env.write().bind_station(sta, id.ip, ch);
                        writer.lock().send(|seq| ControlMessage::ack(seq, req))?;
                    }
                    Err(e) => {
                        writer.lock().send(|seq| ControlMessage::error(seq, req, ErrorCode::Conflict, e.to_string()))?;
                    }
                }
            }
            Payload::RemoveLvap { sta_mac } => {
                core.lock().handle_remove_lvap(sta_mac);
                let _ = world.env.write().unbind_station(sta_mac, id.ip);
                writer.lock().send(|seq| ControlMessage::ack(seq, req))?;
            }
            Payload::SetChannel { channel } => {
                if core.lock().handle_set_channel(channel) {
                    world.env.write().retune_ap(id.ip, channel);
                }
                writer.lock().send(|seq| ControlMessage::ack(seq, req))?;
            }
            Payload::ScanRequest { channel, duration_ms } => {
                let duration = duration_ms as f64 / 1000.0;
                let started = core.lock().begin_scan(channel, duration, world.now());
                match started {
                    Ok(_) => {
                        let (core, world, writer) = (core.clone(), world.clone(), writer.clone());
                        let dwell = Duration::from_millis(duration_ms as u64 + faults.extra_scan_ms.load(Ordering::SeqCst));
                        thread::spawn(move || {
                            thread::sleep(dwell);
                            let result = {
                                let env = world.env.read();
                                core.lock().finish_scan(&env)
                            };
                            let _ = match result {
                                Ok(report) => writer.lock().send(|seq| ControlMessage::scan_report(seq, req, report)),
                                Err(e) => writer
                                    .lock()
                                    .send(|seq| ControlMessage::error(seq, req, ErrorCode::Internal, e.to_string())),
                            };
                        });
                    }
                    Err(AgentError::Busy { last }) => {
                        writer.lock().send(|seq| ControlMessage::busy(seq, req, last))?;
                    }
                    Err(e) => {
                        writer.lock().send(|seq| ControlMessage::error(seq, req, ErrorCode::Internal, e.to_string()))?;
                    }
                }
            }
            _ => {
                writer
                    .lock()
                    .send(|seq| ControlMessage::error(seq, req, ErrorCode::InvalidRequest, "unsupported request"))?;
            }
        }
    }
}
