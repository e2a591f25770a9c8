use std::sync::Mutex;
use std::time::Instant;

/// Seconds since the start of a run.
pub trait Clock: Sync {
    fn elapsed(&self) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    start: Instant,
    offset: f64,
}

impl WallClock {
    pub fn start() -> Self {
        Self::resumed_at(0.0)
    }

    /// A clock that reads `offset` seconds now.
    pub fn resumed_at(offset: f64) -> Self {
        Self {
            start: Instant::now(),
            offset,
        }
    }
}

impl Clock for WallClock {
    fn elapsed(&self) -> f64 {
        self.offset + self.start.elapsed().as_secs_f64()
    }
}

/// Deterministic clock that advances by a fixed step on every reading.
#[derive(Debug)]
pub struct StepClock {
    step: f64,
    now: Mutex<f64>,
}

impl StepClock {
    pub fn new(step: f64) -> Self {
        Self {
            step,
            now: Mutex::new(0.0),
        }
    }
}

impl Clock for StepClock {
    fn elapsed(&self) -> f64 {
        let mut now = self.now.lock().expect("clock lock");
        *now += self.step;
        *now
    }
}
