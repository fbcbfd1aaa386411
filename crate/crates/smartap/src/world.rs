//! The shared simulated world: radio environment plus the simulation clock.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use smartap_core::radio::RadioEnv;

/// Simulation time in seconds. Only the engine driver advances it.
#[derive(Debug, Default)]
pub struct SimClock(AtomicU64);

impl SimClock {
    pub fn new(t: f64) -> Self {
        SimClock(AtomicU64::new(t.to_bits()))
    }

    pub fn now(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Acquire))
    }

    pub fn set(&self, t: f64) {
        self.0.store(t.to_bits(), Ordering::Release);
    }
}

#[derive(Clone)]
pub struct World {
    pub env: Arc<RwLock<RadioEnv>>,
    pub clock: Arc<SimClock>,
}

impl World {
    pub fn new(env: RadioEnv) -> Self {
        World { env: Arc::new(RwLock::new(env)), clock: Arc::new(SimClock::new(0.0)) }
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }
}
