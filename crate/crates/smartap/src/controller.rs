//! Controller side of the agent links.
//!
//! Each agent connects and introduces itself with HELLO. The controller keeps
//! one [`AgentLink`] per AP ip: a writer guarded by a mutex, a reader thread
//! that routes responses to waiting requesters by `reply_to`, and a
//! connected flag. A request that times out marks the link disconnected; it
//! stays out of the loop until the agent says HELLO again.

use std::collections::{BTreeMap, HashMap};
use std::net::{Ipv4Addr, SocketAddr, TcpListener};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use smartap_core::protocol::{ControlMessage, MessageKind, Payload};
use smartap_core::{ApId, Channel};

use crate::link::{read_frame, write_frame, LinkError, Stream};

pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_millis(500);
const HELLO_TIMEOUT: Duration = Duration::from_secs(2);

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

struct Outbox {
    stream: Stream,
    next_seq: u64,
}

pub struct AgentLink {
    id: ApId,
    channel: Mutex<Channel>,
    outbox: Mutex<Outbox>,
    pending: Mutex<HashMap<u64, (MessageKind, Sender<ControlMessage>)>>,
    connected: AtomicBool,
    last_heartbeat: Mutex<f64>,
    reason: Mutex<Option<String>>,
}

/// A request in flight. Dropping it abandons the reply.
pub struct PendingReply {
    link: Arc<AgentLink>,
    seq: u64,
    rx: Receiver<ControlMessage>,
}

impl PendingReply {
    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Waits for the response. On timeout the link is marked disconnected.
    pub fn wait(self, timeout: Duration) -> Result<ControlMessage, LinkError> {
        match self.rx.recv_timeout(timeout) {
            Ok(m) => Ok(m),
            Err(RecvTimeoutError::Timeout) => {
                self.link.pending.lock().remove(&self.seq);
                self.link.disconnect("request timed out");
                Err(LinkError::Timeout)
            }
            Err(RecvTimeoutError::Disconnected) => Err(LinkError::Disconnected),
        }
    }
}

impl AgentLink {
    pub fn id(&self) -> ApId {
        self.id
    }

    pub fn ip(&self) -> Ipv4Addr {
        self.id.ip
    }

    pub fn channel(&self) -> Channel {
        *self.channel.lock()
    }

    pub fn set_channel(&self, ch: Channel) {
        *self.channel.lock() = ch;
    }

    pub fn is_connected(&self) -> bool {
        self.connected.load(Ordering::SeqCst)
    }

    /// Unix time of the last frame received from the agent.
    pub fn last_heartbeat(&self) -> f64 {
        *self.last_heartbeat.lock()
    }

    pub fn disconnect_reason(&self) -> Option<String> {
        self.reason.lock().clone()
    }

    /// Marks the link down, closes the stream and fails every waiting request.
    pub fn disconnect(&self, reason: &str) {
        if self.connected.swap(false, Ordering::SeqCst) {
            *self.reason.lock() = Some(reason.to_string());
            log::info!("agent {} disconnected: {reason}", self.id);
        }
        self.outbox.lock().stream.shutdown();
        self.pending.lock().clear();
    }

    /// Sends a request built from the next sequence number.
    pub fn send_request(self: &Arc<Self>, build: impl FnOnce(u64) -> ControlMessage) -> Result<PendingReply, LinkError> {
        if !self.is_connected() {
            return Err(LinkError::Disconnected);
        }
        let (tx, rx) = mpsc::channel();
        let mut out = self.outbox.lock();
        out.next_seq += 1;
        let msg = build(out.next_seq);
        let seq = msg.seq;
        self.pending.lock().insert(seq, (msg.kind, tx));
        if let Err(e) = write_frame(&mut out.stream, &msg) {
            drop(out);
            self.pending.lock().remove(&seq);
            self.disconnect("write failed");
            return Err(e);
        }
        Ok(PendingReply { link: self.clone(), seq, rx })
    }

    pub fn request(
        self: &Arc<Self>,
        build: impl FnOnce(u64) -> ControlMessage,
        timeout: Duration,
    ) -> Result<ControlMessage, LinkError> {
        self.send_request(build)?.wait(timeout)
    }

    fn reader_loop(self: Arc<Self>, mut reader: Stream) {
        loop {
            let msg = match read_frame(&mut reader) {
                Ok(m) => m,
                Err(e) => {
                    self.disconnect(&e.to_string());
                    return;
                }
            };
            *self.last_heartbeat.lock() = unix_now();
            let Some(reply_to) = msg.reply_to else {
                log::debug!("agent {} sent unsolicited {:?}", self.id, msg.kind);
                continue;
            };
            let waiter = self.pending.lock().remove(&reply_to);
            match waiter {
                Some((kind, tx)) if kind.accepts_response(msg.kind) => {
                    let _ = tx.send(msg);
                }
                Some((kind, _)) => {
                    log::warn!("agent {} answered {kind:?} with {:?}", self.id, msg.kind);
                }
                // late reply to a request that already timed out
                None => {}
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConnectionEvent {
    Connected { id: ApId, channel: Channel },
}

#[derive(Default)]
pub struct Controller {
    links: RwLock<BTreeMap<Ipv4Addr, Arc<AgentLink>>>,
    events: Mutex<Vec<ConnectionEvent>>,
}

impl Controller {
    pub fn new() -> Self {
        Self::default()
    }

    /// Completes the HELLO exchange on `stream` and registers the agent. A
    /// fresh HELLO from a known ip replaces the previous link.
    pub fn attach(&self, stream: Stream) -> Result<Arc<AgentLink>, LinkError> {
        let mut reader = stream.try_clone()?;
        reader.set_read_timeout(Some(HELLO_TIMEOUT))?;
        let hello = match read_frame(&mut reader) {
            Ok(m) => m,
            Err(LinkError::Io(e)) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                return Err(LinkError::Timeout)
            }
            Err(e) => return Err(e),
        };
        reader.set_read_timeout(None)?;
        let Payload::Hello(h) = hello.payload else {
            return Err(LinkError::Protocol(format!("expected HELLO, got {:?}", hello.kind)));
        };
        let mut out = Outbox { stream, next_seq: 1 };
        write_frame(&mut out.stream, &ControlMessage::ack(1, hello.seq))?;

        let link = Arc::new(AgentLink {
            id: h.ap,
            channel: Mutex::new(h.channel),
            outbox: Mutex::new(out),
            pending: Mutex::new(HashMap::new()),
            connected: AtomicBool::new(true),
            last_heartbeat: Mutex::new(unix_now()),
            reason: Mutex::new(None),
        });
        if let Some(old) = self.links.write().insert(h.ap.ip, link.clone()) {
            old.disconnect("replaced by new HELLO");
        }
        self.events.lock().push(ConnectionEvent::Connected { id: h.ap, channel: h.channel });
        let r = link.clone();
        thread::Builder::new().name(format!("link-{}", h.ap.ip)).spawn(move || r.reader_loop(reader))?;
        log::info!("agent {} connected on channel {}", h.ap, h.channel);
        Ok(link)
    }

    /// Accepts agent connections on `addr` until the returned handle is dropped.
    pub fn listen(self: &Arc<Self>, addr: SocketAddr) -> std::io::Result<Listener> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let local = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let (ctl, flag) = (self.clone(), stop.clone());
        let thread = thread::Builder::new().name("agent-listener".into()).spawn(move || {
            while !flag.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((s, peer)) => {
                        let _ = s.set_nonblocking(false);
                        let _ = s.set_nodelay(true);
                        let ctl = ctl.clone();
                        // HELLO may be slow; do not hold up other agents
                        thread::spawn(move || {
                            if let Err(e) = ctl.attach(Stream::Tcp(s)) {
                                log::warn!("agent handshake from {peer} failed: {e}");
                            }
                        });
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
                    Err(e) => {
                        log::error!("accept failed: {e}");
                        thread::sleep(Duration::from_millis(50));
                    }
                }
            }
        })?;
        Ok(Listener { addr: local, stop, thread: Some(thread) })
    }

    pub fn get(&self, ip: Ipv4Addr) -> Option<Arc<AgentLink>> {
        self.links.read().get(&ip).cloned()
    }

    /// Connected links in ascending ApId order.
    pub fn connected(&self) -> Vec<Arc<AgentLink>> {
        let mut v: Vec<_> = self.links.read().values().filter(|l| l.is_connected()).cloned().collect();
        v.sort_by_key(|l| l.id());
        v
    }

    pub fn all(&self) -> Vec<Arc<AgentLink>> {
        self.links.read().values().cloned().collect()
    }

    pub fn mark_disconnected(&self, ip: Ipv4Addr, reason: &str) {
        if let Some(l) = self.get(ip) {
            l.disconnect(reason);
        }
    }

    pub fn drain_events(&self) -> Vec<ConnectionEvent> {
        std::mem::take(&mut *self.events.lock())
    }

    pub fn shutdown(&self) {
        for l in self.all() {
            l.disconnect("controller shutdown");
        }
    }
}

pub struct Listener {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Listener {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for Listener {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
