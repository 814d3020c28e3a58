//! Capped exponential backoff shared by the HTTP clients.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 250,
            max_delay_ms: 4_000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            ..Self::default()
        }
    }

    /// Delay before retry number `attempt` (0-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.min(32)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// What the caller wants done with a failed attempt.
pub enum Attempt<E> {
    Retry(E),
    Fatal(E),
}

/// Runs `op` until it succeeds, fails fatally, or exhausts the policy.
/// Returns the last error together with the number of attempts made.
pub fn with_backoff<T, E>(
    policy: &RetryPolicy,
    mut op: impl FnMut(u32) -> Result<T, Attempt<E>>,
) -> Result<T, (E, u32)> {
    let mut attempt = 0;
    loop {
        match op(attempt) {
            Ok(v) => return Ok(v),
            Err(Attempt::Fatal(e)) => return Err((e, attempt + 1)),
            Err(Attempt::Retry(e)) => {
                if attempt >= policy.max_retries {
                    return Err((e, attempt + 1));
                }
                tracing::debug!(attempt, "retrying after transient failure");
                thread::sleep(policy.delay(attempt));
                attempt += 1;
            }
        }
    }
}

/// Counting semaphore bounding concurrent outbound requests.
#[derive(Debug)]
pub struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

pub struct InFlightGuard<'a>(&'a InFlight);

impl InFlight {
    pub fn new(limit: usize) -> Self {
        InFlight {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut active = self.active.lock().expect("in-flight lock poisoned");
        while *active >= self.limit {
            active = self.freed.wait(active).expect("in-flight lock poisoned");
        }
        *active += 1;
        InFlightGuard(self)
    }

    pub fn active(&self) -> usize {
        *self.active.lock().expect("in-flight lock poisoned")
    }
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().expect("in-flight lock poisoned");
        *active -= 1;
        self.0.freed.notify_one();
    }
}
