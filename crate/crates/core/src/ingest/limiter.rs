//! Token-bucket rate limiter shared by every worker talking to the source API.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

const NANO: u64 = 1_000_000_000;

#[derive(Debug)]
struct Bucket {
    /// Available tokens in units of 1e-9 token.
    available: u64,
    last: Instant,
}

#[derive(Debug)]
pub struct RateLimiter {
    capacity: u32,
    refill_per_s: f64,
    bucket: Mutex<Bucket>,
}

impl RateLimiter {
    /// A full bucket of `capacity` tokens refilled at `refill_per_s` tokens per second.
    pub fn new(capacity: u32, refill_per_s: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("rate_capacity", "must be at least 1"));
        }
        if !(refill_per_s.is_finite() && refill_per_s > 0.0) {
            return Err(Error::config("rate_per_s", "must be positive"));
        }
        Ok(RateLimiter {
            capacity,
            refill_per_s,
            bucket: Mutex::new(Bucket {
                available: capacity as u64 * NANO,
                last: Instant::now(),
            }),
        })
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn refill_per_s(&self) -> f64 {
        self.refill_per_s
    }

    fn refill(&self, bucket: &mut Bucket, now: Instant) {
        let elapsed = now.saturating_duration_since(bucket.last).as_nanos() as f64;
        let gained = (elapsed * self.refill_per_s).floor() as u64;
        if gained > 0 {
            bucket.available = (bucket.available + gained).min(self.capacity as u64 * NANO);
            bucket.last = now;
        }
    }

    /// Tokens currently available (after refill).
    pub fn available(&self) -> f64 {
        let mut bucket = self.bucket.lock().unwrap_or_else(|p| p.into_inner());
        self.refill(&mut bucket, Instant::now());
        bucket.available as f64 / NANO as f64
    }

    /// Blocks until `n` tokens can be deducted, then deducts them.
    pub fn acquire(&self, n: u32) -> Result<()> {
        if n > self.capacity {
            return Err(Error::RateLimit {
                requested: n,
                capacity: self.capacity,
            });
        }
        if n == 0 {
            return Ok(());
        }
        let need = n as u64 * NANO;
        loop {
            let wait = {
                let mut bucket = self.bucket.lock().unwrap_or_else(|p| p.into_inner());
                self.refill(&mut bucket, Instant::now());
                if bucket.available >= need {
                    bucket.available -= need;
                    return Ok(());
                }
                let missing = (need - bucket.available) as f64;
                Duration::from_nanos((missing / self.refill_per_s).ceil() as u64 + 1)
            };
            thread::sleep(wait);
        }
    }

    /// Deducts `n` tokens if they are available right now.
    pub fn try_acquire(&self, n: u32) -> Result<bool> {
        if n > self.capacity {
            return Err(Error::RateLimit {
                requested: n,
                capacity: self.capacity,
            });
        }
        let need = n as u64 * NANO;
        let mut bucket = self.bucket.lock().unwrap_or_else(|p| p.into_inner());
        self.refill(&mut bucket, Instant::now());
        if bucket.available >= need {
            bucket.available -= need;
            Ok(true)
        } else {
            Ok(false)
        }
    }
}
