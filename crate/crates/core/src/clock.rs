//! Time source used by the gateway and the prediction pipeline. Tests inject
//! [`ManualClock`] so retries and pauses never sleep for real.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};

pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
    /// Wall-clock time for record timestamps.
    fn wall(&self) -> DateTime<Utc>;
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
    fixed_wall: Option<DateTime<Utc>>,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
            fixed_wall: None,
        }
    }

    /// Real sleeping, but every timestamp reads `wall`. Makes reruns
    /// byte-identical.
    pub fn with_fixed_wall(wall: DateTime<Utc>) -> Self {
        Self {
            origin: Instant::now(),
            fixed_wall: Some(wall),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }

    fn wall(&self) -> DateTime<Utc> {
        self.fixed_wall.unwrap_or_else(Utc::now)
    }
}

/// Virtual time: `sleep` advances `now` instantly and is recorded. The wall
/// clock is frozen.
#[derive(Debug)]
pub struct ManualClock {
    state: Mutex<ManualState>,
    wall: DateTime<Utc>,
}

#[derive(Debug, Default)]
struct ManualState {
    now: Duration,
    sleeps: Vec<Duration>,
}

impl ManualClock {
    pub fn new() -> Self {
        Self {
            state: Mutex::new(ManualState::default()),
            wall: DateTime::<Utc>::UNIX_EPOCH,
        }
    }

    pub fn advance(&self, d: Duration) {
        self.state.lock().expect("clock poisoned").now += d;
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.state.lock().expect("clock poisoned").sleeps.clone()
    }
}

impl Default for ManualClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        self.state.lock().expect("clock poisoned").now
    }

    fn sleep(&self, d: Duration) {
        let mut s = self.state.lock().expect("clock poisoned");
        s.now += d;
        s.sleeps.push(d);
    }

    fn wall(&self) -> DateTime<Utc> {
        self.wall
    }
}
