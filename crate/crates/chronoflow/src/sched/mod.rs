//! Message delivery: per-receiver queues governed by delivery policies, a
//! worker pool for pipeline parallelism, back-pressure, and a deterministic
//! single-lane mode for reproducible replay.

mod engine;
pub(crate) mod runtime;

pub(crate) use engine::QueueStats;
pub use runtime::{CompletionReport, EdgeReport, PipelineError, RunHandle};

use crate::time::TimeSpan;
use serde::{Deserialize, Serialize};

/// Admission rule for a receiver's queue when the consumer lags the producer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeliveryPolicy {
    /// Buffer everything; never drop, never block.
    Unlimited,
    /// Keep only the newest undelivered message; older ones are dropped.
    LatestMessage,
    /// Bounded queue that evicts its oldest entry to admit a new one.
    QueueSize(usize),
    /// Bounded queue that blocks the producer until space frees (back-pressure).
    Throttle(usize),
    /// Drop arriving messages whose age (now − originating) exceeds the bound.
    LatencyConstrained(TimeSpan),
}

impl DeliveryPolicy {
    /// Validates the policy parameters: bounds ≥ 1, latency limits ≥ 0.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            DeliveryPolicy::QueueSize(n) | DeliveryPolicy::Throttle(n) => {
                if *n == 0 {
                    return Err("queue bound must be at least 1".into());
                }
            }
            DeliveryPolicy::LatencyConstrained(max) => {
                if max.is_negative() {
                    return Err("latency bound must be non-negative".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Human-readable form used in DOT labels and reports.
    pub fn label(&self) -> String {
        match self {
            DeliveryPolicy::Unlimited => "unlimited".into(),
            DeliveryPolicy::LatestMessage => "latest".into(),
            DeliveryPolicy::QueueSize(n) => format!("queue({n})"),
            DeliveryPolicy::Throttle(n) => format!("throttle({n})"),
            DeliveryPolicy::LatencyConstrained(max) => {
                format!("latency({}ms)", max.as_ns() / 1_000_000)
            }
        }
    }
}

/// Result of posting one message to one edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostOutcome {
    Accepted,
    Dropped,
    /// Throttled edge is full; the caller must wait for space and re-attempt.
    Blocked,
}

/// Worker-pool configuration.
#[derive(Debug, Clone)]
pub struct SchedulerConfig {
    pub worker_count: usize,
    /// Serialize delivery into one lane ordered by
    /// (originating, stream id, sequence); required for bit-reproducible runs.
    pub deterministic: bool,
    /// Budget for drain and finalization before reporting a timeout.
    pub finalize_timeout: std::time::Duration,
    /// Latency highlight threshold for edge metrics.
    pub latency_threshold: TimeSpan,
}

/// Environment variable overriding the default worker count.
pub const WORKERS_ENV: &str = "CHRONOFLOW_WORKERS";

impl Default for SchedulerConfig {
    fn default() -> Self {
        let from_env = std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|n| *n >= 1);
        let worker_count = from_env.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
        SchedulerConfig {
            worker_count,
            deterministic: false,
            finalize_timeout: std::time::Duration::from_secs(30),
            latency_threshold: TimeSpan::from_millis(500),
        }
    }
}

impl SchedulerConfig {
    pub fn with_workers(mut self, n: usize) -> Self {
        self.worker_count = n.max(1);
        self
    }

    pub fn deterministic(mut self) -> Self {
        self.deterministic = true;
        self
    }
}
