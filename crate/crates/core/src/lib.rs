//! Discrete-event simulation of three distributed mutual-exclusion algorithms
//! (central coordinator, token ring and Raymond's tree) under Gaussian network
//! and processing delays.
//!
//! The core is generic over the [`Scalar`] used for time; the aliases at the
//! crate root fix it to `f64`.

pub mod central;
pub mod cli;
pub mod delay;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod raymond;
pub mod report;
pub mod ring;
pub mod scalar;
pub mod scenario;

pub use error::{Result, SimError};
pub use metrics::{check_mutual_exclusion, client_delays, summarize, sync_delays, MessageKind};
pub use scalar::Scalar;
pub use scenario::{Algorithm, Metric, Regime};

pub type SimTime = engine::SimTime<f64>;
pub type DelayModel = delay::DelayModel<f64>;
pub type MetricsLog = metrics::MetricsLog<f64>;
pub type SummaryStats = metrics::SummaryStats<f64>;
pub type Sample = metrics::Sample<f64>;
pub type ScenarioConfig = scenario::ScenarioConfig<f64>;
pub type RunResult = scenario::RunResult<f64>;

pub type SimTimeF32 = engine::SimTime<f32>;
pub type DelayModelF32 = delay::DelayModel<f32>;
pub type ScenarioConfigF32 = scenario::ScenarioConfig<f32>;
