use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ProviderError, ProviderResult};

/// Exponential backoff with bounded jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    /// Fraction in [0, 1] of each delay that may be shaved off at random.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 250,
            max_delay_ms: 8_000,
            jitter: 0.5,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }

    /// Upper bound of the delay before retry number `attempt` (0-based).
    pub fn ceiling(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(32))
            .min(self.max_delay_ms);
        Duration::from_millis(exp)
    }

    pub fn delay(&self, attempt: u32, rng: &mut impl Rng) -> Duration {
        let ceiling = self.ceiling(attempt).as_secs_f64();
        let jitter = self.jitter.clamp(0.0, 1.0);
        let shave = if jitter > 0.0 {
            rng.random_range(0.0..jitter)
        } else {
            0.0
        };
        Duration::from_secs_f64(ceiling * (1.0 - shave))
    }

    /// Runs `op`, retrying retryable failures. Non-idempotent operations are
    /// only retried when the provider rejected them outright (rate limit).
    pub fn run<T>(
        &self,
        idempotent: bool,
        sleep: &dyn Fn(Duration),
        mut op: impl FnMut() -> ProviderResult<T>,
    ) -> ProviderResult<T> {
        let mut rng = rand::rng();
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) => {
                    let may_retry = e.is_retryable()
                        && (idempotent || matches!(e, ProviderError::RateLimited { .. }));
                    if !may_retry || attempt >= self.max_retries {
                        return Err(match e {
                            ProviderError::Http {
                                status,
                                message,
                                retryable,
                                ..
                            } => ProviderError::Http {
                                status,
                                message,
                                retryable,
                                attempts: attempt + 1,
                            },
                            other => other,
                        });
                    }
                    let mut wait = self.delay(attempt, &mut rng);
                    if let Some(hint) = e.retry_after() {
                        wait = wait.max(hint.min(Duration::from_millis(self.max_delay_ms)));
                    }
                    sleep(wait);
                    attempt += 1;
                }
            }
        }
    }
}

/// Shared request budget: `capacity` burst, refilled at `per_second`.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(capacity: u32, per_second: f64) -> Self {
        Self {
            capacity: capacity.max(1) as f64,
            per_second: per_second.max(1e-3),
            state: Mutex::new((capacity.max(1) as f64, Instant::now())),
        }
    }

    /// Takes a token if one is available, otherwise reports how long to wait.
    pub fn try_acquire(&self) -> Result<(), Duration> {
        let mut state = self.state.lock().unwrap();
        let now = Instant::now();
        let refill = now.duration_since(state.1).as_secs_f64() * self.per_second;
        state.0 = (state.0 + refill).min(self.capacity);
        state.1 = now;
        if state.0 >= 1.0 {
            state.0 -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - state.0) / self.per_second))
        }
    }

    /// Blocks until a token is available. The lock is not held while waiting.
    pub fn acquire(&self) {
        while let Err(wait) = self.try_acquire() {
            std::thread::sleep(wait);
        }
    }
}
