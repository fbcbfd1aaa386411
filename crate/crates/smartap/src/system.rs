//! Wires a scenario into a running system: radio world, agents, controller,
//! gateway, loop and (optionally) the API. Also drives the simulated clock.

use std::collections::BTreeMap;
use std::net::{Ipv4Addr, SocketAddr, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crate::agent::{spawn_agent, AgentHandle};
use crate::api::{ApiServer, ApiState};
use crate::controller::{Controller, Listener};
use crate::engine::{Engine, EngineConfig, IterationSummary};
use crate::eventlog::EventLog;
use crate::gateway::Gateway;
use crate::link::{in_process_pair, LinkError, Stream};
use crate::scenario::{Scenario, ScenarioError};
use crate::world::World;

const CONNECT_WAIT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transport {
    /// Socket pairs inside the process.
    #[default]
    InProcess,
    /// Agents dial the controller over loopback TCP.
    Tcp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pacing {
    /// Run iterations back to back; only the simulated clock advances by the interval.
    #[default]
    Fast,
    /// Start one iteration per scan interval of wall-clock time.
    Realtime,
}

#[derive(Clone)]
pub struct SystemOptions {
    pub transport: Transport,
    pub api_addr: Option<SocketAddr>,
    pub log: Arc<EventLog>,
    pub engine: EngineConfig,
}

impl Default for SystemOptions {
    fn default() -> Self {
        SystemOptions {
            transport: Transport::default(),
            api_addr: None,
            log: Arc::new(EventLog::in_memory()),
            engine: EngineConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SystemError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("agents did not connect: {0}")]
    Connect(String),
}

pub struct System {
    world: World,
    controller: Arc<Controller>,
    gateway: Arc<Gateway>,
    engine: Engine,
    agents: BTreeMap<Ipv4Addr, AgentHandle>,
    api: Option<ApiServer>,
    listener: Option<Listener>,
    log: Arc<EventLog>,
    transport: Transport,
    next_time: f64,
}

impl System {
    pub fn start(scenario: &Scenario, opts: SystemOptions) -> Result<System, SystemError> {
        let world = World::new(scenario.build_env()?);
        // tables exist before the first scan is ever requested
        let gateway = Arc::new(Gateway::init(world.now()));
        let controller = Arc::new(Controller::new());
        let listener = match opts.transport {
            Transport::Tcp => Some(controller.listen("127.0.0.1:0".parse().expect("literal address"))?),
            Transport::InProcess => None,
        };

        let mut agents = BTreeMap::new();
        for ap in &scenario.aps {
            let stream = connect(&controller, listener.as_ref())?;
            agents.insert(ap.id.ip, spawn_agent(ap.id, ap.channel, &world, stream.0)?);
            if let Some(ctl_end) = stream.1 {
                controller.attach(ctl_end)?;
            }
        }
        wait_until(|| controller.connected().len() == agents.len())
            .map_err(|_| SystemError::Connect(format!("{} of {} up", controller.connected().len(), agents.len())))?;

        let mut cfg = opts.engine.clone();
        cfg.ssid = scenario.ssid.clone();
        let engine = Engine::new(
            controller.clone(),
            gateway.clone(),
            world.clone(),
            opts.log.clone(),
            scenario.params.clone(),
            cfg.clone(),
        );
        let api = match opts.api_addr {
            Some(addr) => {
                let mut st = ApiState::new(gateway.clone(), controller.clone(), world.clone(), opts.log.clone());
                st.request_timeout = cfg.request_timeout;
                Some(ApiServer::start(st, addr)?)
            }
            None => None,
        };
        Ok(System {
            world,
            controller,
            gateway,
            engine,
            agents,
            api,
            listener,
            log: opts.log,
            transport: opts.transport,
            next_time: 0.0,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn controller(&self) -> &Arc<Controller> {
        &self.controller
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut Engine {
        &mut self.engine
    }

    pub fn log(&self) -> &Arc<EventLog> {
        &self.log
    }

    pub fn api_addr(&self) -> Option<SocketAddr> {
        self.api.as_ref().map(|a| a.local_addr())
    }

    pub fn api_state(&self) -> ApiState {
        ApiState::new(self.gateway.clone(), self.controller.clone(), self.world.clone(), self.log.clone())
    }

    pub fn agent(&self, ip: Ipv4Addr) -> Option<&AgentHandle> {
        self.agents.get(&ip)
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentHandle> {
        self.agents.values()
    }

    /// Simulated time at which the next iteration will run.
    pub fn next_time(&self) -> f64 {
        self.next_time
    }

    /// Runs one iteration at the current simulated time, then advances the
    /// clock by the scan interval now in force.
    pub fn step(&mut self) -> IterationSummary {
        self.world.clock.set(self.next_time);
        let s = self.engine.run_iteration();
        self.next_time += self.engine.params().scan_interval;
        s
    }

    pub fn run_iterations(&mut self, n: usize) -> Vec<IterationSummary> {
        (0..n).map(|_| self.step()).collect()
    }

    /// Runs until the simulated clock reaches `duration` seconds.
    pub fn run_for(&mut self, duration: f64, pacing: Pacing) -> Vec<IterationSummary> {
        let mut out = Vec::new();
        let mut deadline = Instant::now();
        while self.next_time < duration {
            let interval = self.engine.params().scan_interval;
            out.push(self.step());
            if pacing == Pacing::Realtime {
                deadline += Duration::from_secs_f64(interval);
                if let Some(wait) = deadline.checked_duration_since(Instant::now()) {
                    thread::sleep(wait);
                }
            }
        }
        out
    }

    /// Drops an agent's connection without telling the controller.
    pub fn kill_agent(&mut self, ip: Ipv4Addr) {
        if let Some(a) = self.agents.get_mut(&ip) {
            a.disconnect();
        }
    }

    /// Reconnects an agent (keeping its state) and waits for its HELLO to land.
    pub fn reconnect_agent(&mut self, ip: Ipv4Addr) -> Result<(), SystemError> {
        let Some(agent) = self.agents.get_mut(&ip) else {
            return Err(SystemError::Connect(format!("no agent {ip}")));
        };
        let old = self.controller.get(ip);
        let (agent_end, ctl_end) = connect(&self.controller, self.listener.as_ref())?;
        agent.reconnect(&self.world, agent_end)?;
        if let Some(s) = ctl_end {
            self.controller.attach(s)?;
        }
        let ctl = &self.controller;
        wait_until(|| {
            ctl.get(ip).is_some_and(|l| l.is_connected() && old.as_ref().is_none_or(|o| !Arc::ptr_eq(o, &l)))
        })
        .map_err(|_| SystemError::Connect(format!("agent {ip} did not come back")))
    }

    pub fn transport(&self) -> Transport {
        self.transport
    }

    /// Stops the API, then the loop's links, then the agents.
    pub fn shutdown(mut self) {
        if let Some(mut api) = self.api.take() {
            api.stop();
        }
        self.controller.shutdown();
        self.listener.take();
        for a in self.agents.values_mut() {
            a.disconnect();
        }
        let _ = self.log.flush();
    }
}

/// Opens a stream for a new agent. For in-process links the controller end
/// is returned and must be attached by the caller.
fn connect(_ctl: &Arc<Controller>, listener: Option<&Listener>) -> Result<(Stream, Option<Stream>), SystemError> {
    match listener {
        Some(l) => {
            let s = TcpStream::connect(l.local_addr())?;
            s.set_nodelay(true)?;
            Ok((Stream::Tcp(s), None))
        }
        None => {
            let (a, b) = in_process_pair()?;
            Ok((a, Some(b)))
        }
    }
}

fn wait_until(mut cond: impl FnMut() -> bool) -> Result<(), ()> {
    let start = Instant::now();
    while !cond() {
        if start.elapsed() > CONNECT_WAIT {
            return Err(());
        }
        thread::sleep(Duration::from_millis(2));
    }
    Ok(())
}
