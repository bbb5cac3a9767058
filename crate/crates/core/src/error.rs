use thiserror::Error;

use crate::engine::Target;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("event for {target} scheduled at {fire_at} ms, before the clock at {now} ms")]
    ScheduledInPast { target: Target, fire_at: f64, now: f64 },

    #[error("event time {0} is not a finite number")]
    NonFiniteTime(f64),

    #[error("deadlock/starvation in {algorithm} ({scenario}): event queue drained after {dispatched} dispatches before the stop condition held")]
    Deadlock {
        algorithm: String,
        scenario: String,
        dispatched: u64,
    },

    #[error("livelock in {algorithm} ({scenario}): stop condition not reached within {limit} dispatches")]
    DispatchLimit {
        algorithm: String,
        scenario: String,
        limit: u64,
    },

    #[error("no handler for target {0}")]
    UnknownTarget(Target),

    #[error("protocol violation in {algorithm} at node {node}: {detail}")]
    Protocol {
        algorithm: &'static str,
        node: usize,
        detail: String,
    },

    #[error("message from {from} to {to}, which are not tree neighbours")]
    Topology { from: usize, to: usize },

    #[error("token duplicated: {0}")]
    TokenDuplication(String),

    #[error("invariant broken in {algorithm}: {detail}")]
    Invariant {
        algorithm: &'static str,
        detail: String,
    },

    #[error("mutual exclusion violated: node {second} entered at {at} ms while node {first} was in the critical section")]
    Safety { first: usize, second: usize, at: f64 },

    #[error("log integrity: {0}")]
    LogIntegrity(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl SimError {
    pub(crate) fn protocol(algorithm: &'static str, node: usize, detail: impl Into<String>) -> Self {
        SimError::Protocol {
            algorithm,
            node,
            detail: detail.into(),
        }
    }

    /// True for errors that indicate a liveness failure rather than a logic bug.
    pub fn is_liveness(&self) -> bool {
        matches!(self, SimError::Deadlock { .. } | SimError::DispatchLimit { .. })
    }

    pub fn is_safety(&self) -> bool {
        matches!(self, SimError::Safety { .. })
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
