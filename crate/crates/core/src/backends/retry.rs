use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::BackendError;

/// Exponential backoff for transient backend failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            initial_backoff_ms: 500,
            max_backoff_ms: 16_000,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, retry: u32) -> Duration {
        let ms = self.initial_backoff_ms as f64 * self.multiplier.powi(retry as i32);
        Duration::from_millis(ms.min(self.max_backoff_ms as f64) as u64)
    }

    /// Calls `op` until it succeeds, fails permanently, or attempts run out.
    /// `op` receives the 1-based attempt number.
    pub fn run<T>(&self, mut op: impl FnMut(u32) -> Result<T, BackendError>) -> Result<T, BackendError> {
        let attempts = self.max_attempts.max(1);
        let mut last = None;
        for attempt in 1..=attempts {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e @ (BackendError::Transient(_) | BackendError::RateLimited)) => {
                    log::warn!("attempt {attempt}/{attempts} failed: {e}");
                    last = Some(e);
                    if attempt < attempts {
                        thread::sleep(self.backoff(attempt - 1));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Err(match last {
            Some(BackendError::RateLimited) => BackendError::RateLimitExhausted { attempts },
            Some(e) => BackendError::Transport {
                attempts,
                message: e.to_string(),
            },
            None => unreachable!("at least one attempt"),
        })
    }
}

/// Spaces requests evenly to stay under a requests-per-minute budget.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        RateLimiter {
            interval: Duration::from_secs_f64(60.0 / f64::from(requests.max(1))),
            next: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}
