//! Retry with exponential backoff, and a shared limiter bounding in-flight
//! requests and request rate for remote backends.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::RngExt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// No waiting between attempts.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `attempt` (1-based): base * 2^(attempt-1),
    /// capped, with up to 50% random jitter subtracted.
    pub fn delay(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(1u32 << attempt.saturating_sub(1).min(16));
        let capped = exp.min(self.max_delay);
        if capped.is_zero() {
            return capped;
        }
        let jitter: f64 = rand::rng().random_range(0.0..0.5);
        capped.mul_f64(1.0 - jitter)
    }

    /// Runs `op` until it succeeds, returns a non-retryable error, or the
    /// attempt budget is spent. Returns the last error and the attempt count.
    pub fn run<T, E>(
        &self,
        mut op: impl FnMut() -> Result<T, E>,
        retryable: impl Fn(&E) -> bool,
    ) -> Result<T, (E, u32)> {
        let mut attempt = 1;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if attempt < self.max_attempts.max(1) && retryable(&e) => {
                    thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                Err(e) => return Err((e, attempt)),
            }
        }
    }
}

/// Bounds concurrent in-flight requests and spaces request starts at least
/// `min_interval` apart.
#[derive(Debug)]
pub struct Throttle {
    max_in_flight: usize,
    min_interval: Duration,
    in_flight: Mutex<usize>,
    freed: Condvar,
    next_start: Mutex<Instant>,
}

pub struct Permit<'a> {
    throttle: &'a Throttle,
}

impl Throttle {
    pub fn new(max_in_flight: usize, min_interval: Duration) -> Self {
        Throttle {
            max_in_flight: max_in_flight.max(1),
            min_interval,
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            next_start: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        {
            let mut n = self.in_flight.lock().expect("throttle poisoned");
            while *n >= self.max_in_flight {
                n = self.freed.wait(n).expect("throttle poisoned");
            }
            *n += 1;
        }
        let wait = {
            let mut next = self.next_start.lock().expect("throttle poisoned");
            let now = Instant::now();
            let start = (*next).max(now);
            *next = start + self.min_interval;
            start - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
        Permit { throttle: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.throttle.in_flight.lock().expect("throttle poisoned") -= 1;
        self.throttle.freed.notify_one();
    }
}
