use std::time::Duration;

use thiserror::Error;

use super::ChatRequest;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    /// Worth retrying: timeouts, rate limits, 5xx.
    #[error("transient provider failure: {0}")]
    Transient(String),
    /// Authentication or quota failure; the run cannot continue.
    #[error("fatal provider failure: {0}")]
    Fatal(String),
    /// The provider answered with something unusable.
    #[error("invalid provider response: {0}")]
    Invalid(String),
}

pub trait ChatProvider: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    /// One vector per input text.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::ZERO,
        }
    }
}

/// Runs `f` until it succeeds, fails non-transiently, or attempts run out.
pub fn with_retry<T>(
    policy: RetryPolicy,
    mut f: impl FnMut() -> Result<T, ProviderError>,
) -> Result<T, ProviderError> {
    let mut delay = policy.base_delay;
    let mut attempt = 1;
    loop {
        match f() {
            Err(ProviderError::Transient(msg)) if attempt < policy.attempts.max(1) => {
                tracing::debug!(attempt, %msg, "retrying transient failure");
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
                delay *= 2;
                attempt += 1;
            }
            other => return other,
        }
    }
}
