//! Measurement regimes: unloaded trials for client delay, saturated runs for
//! synchronization delay.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::central::CentralServer;
use crate::delay::DelayModel;
use crate::engine::{derive_seed, Protocol, RngStream, SimTime, Simulation, Target};
use crate::error::{Result, SimError};
use crate::metrics::{client_delays, summarize, sync_delays, MetricsLog, Sample, SummaryStats};
use crate::raymond::Raymond;
use crate::ring::{RingEvent, TokenRing};
use crate::scalar::Scalar;

/// Synchronization samples dropped at the start of a loaded run. The initial
/// holder can re-enter before any other request reaches it.
pub const LOADED_WARMUP: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Central,
    Ring,
    Raymond,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Central, Algorithm::Ring, Algorithm::Raymond];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Central => "central",
            Algorithm::Ring => "ring",
            Algorithm::Raymond => "raymond",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Unloaded,
    Loaded,
}

impl Regime {
    pub const ALL: [Regime; 2] = [Regime::Unloaded, Regime::Loaded];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Unloaded => "unloaded",
            Regime::Loaded => "loaded",
        }
    }

    /// The metric each regime measures.
    pub fn metric(self) -> Metric {
        match self {
            Regime::Unloaded => Metric::ClientDelay,
            Regime::Loaded => Metric::SyncDelay,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ClientDelay,
    SyncDelay,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::ClientDelay => "client_delay",
            Metric::SyncDelay => "sync_delay",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Client behaviour shared by all three protocols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workload<T> {
    /// Time spent inside the critical section.
    pub cs_duration: T,
    /// Ask again immediately after leaving.
    pub rerequest: bool,
}

/// A protocol the scenarios can drive.
pub trait MutexProtocol<T: Scalar>: Protocol<T> {
    /// Local event that makes the target node ask for the critical section.
    fn request_event() -> Self::Message;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig<T> {
    pub algorithm: Algorithm,
    pub regime: Regime,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub cs_duration: T,
    /// Delay parameters; the node count is taken from `n`.
    pub delays: DelayModel<T>,
    /// Check protocol invariants after every dispatch.
    pub check_invariants: bool,
}

impl<T: Scalar> ScenarioConfig<T> {
    pub fn new(algorithm: Algorithm, regime: Regime) -> Self {
        Self {
            algorithm,
            regime,
            n: 100,
            trials: 50,
            seed: 42,
            cs_duration: T::zero(),
            delays: DelayModel::default(),
            check_invariants: false,
        }
    }

    pub fn nodes(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn deterministic(mut self) -> Self {
        self.delays = self.delays.deterministic();
        self
    }

    pub fn delay_model(&self) -> DelayModel<T> {
        DelayModel {
            n: self.n,
            ..self.delays
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(SimError::Config("at least one trial is required".into()));
        }
        if !self.cs_duration.is_finite() || self.cs_duration < T::zero() {
            return Err(SimError::Config(format!(
                "critical-section duration must be non-negative, got {}",
                self.cs_duration
            )));
        }
        self.delay_model().validate()
    }

    fn workload(&self, rerequest: bool) -> Workload<T> {
        Workload {
            cs_duration: self.cs_duration,
            rerequest,
        }
    }
}

/// Everything produced by one (algorithm, regime) run.
#[derive(Debug, Clone)]
pub struct RunResult<T> {
    pub config: ScenarioConfig<T>,
    pub log: MetricsLog<T>,
    pub metric: Metric,
    pub samples: Vec<Sample<T>>,
    pub summary: Option<SummaryStats<T>>,
    pub messages_per_entry: Option<f64>,
}

/// Runs the regime selected in `cfg` and derives its metric.
pub fn run<T: Scalar>(cfg: &ScenarioConfig<T>) -> Result<RunResult<T>> {
    let (log, samples, messages_per_entry) = match cfg.regime {
        Regime::Unloaded => {
            let log = run_unloaded(cfg)?;
            let samples = client_delays(&log)?;
            let per_entry = log.messages_per_entry();
            (log, samples, per_entry)
        }
        Regime::Loaded => {
            let log = run_loaded(cfg)?;
            let samples = sync_delays(&log)?;
            let per_entry = log.messages_per_handoff()?;
            (log, samples, per_entry)
        }
    };
    let values: Vec<T> = samples.iter().map(|s| s.value).collect();
    Ok(RunResult {
        config: cfg.clone(),
        metric: cfg.regime.metric(),
        summary: summarize(&values),
        samples,
        log,
        messages_per_entry,
    })
}

fn simulate<T, P, S>(
    protocol: P,
    cfg: &ScenarioConfig<T>,
    rng: RngStream,
    label: String,
    setup: S,
    stop_after_entries: Option<usize>,
) -> Result<MetricsLog<T>>
where
    T: Scalar,
    P: MutexProtocol<T>,
    S: FnOnce(&mut Simulation<T, P>) -> Result<()>,
{
    let mut sim = Simulation::new(protocol, cfg.delay_model(), rng)
        .with_scenario(label)
        .with_invariant_checks(cfg.check_invariants);
    setup(&mut sim)?;
    match stop_after_entries {
        Some(k) => sim.run(|p| p.log.enters().len() >= k)?,
        None => sim.run(|p| !p.log.exits().is_empty())?,
    }
    Ok(sim.into_log())
}

/// One unloaded trial with its own derived seed: a random idle system, one
/// random requester at a random phase, run until that node leaves.
pub fn run_unloaded_trial<T: Scalar>(cfg: &ScenarioConfig<T>, trial: usize) -> Result<MetricsLog<T>> {
    cfg.validate()?;
    let seed = derive_seed(cfg.seed, trial as u64);
    let mut rng = RngStream::new(seed);
    let n = cfg.n;
    let requester = rng.index(n);
    let holder = rng.index(n);
    let hop = cfg.delays.net_mean + cfg.delays.proc_mean;
    let phase = SimTime(rng.uniform(T::zero(), hop));
    let label = format!("unloaded trial {trial}, seed {seed}");
    let workload = cfg.workload(false);

    match cfg.algorithm {
        Algorithm::Central => simulate(CentralServer::new(n, workload), cfg, rng, label, |sim| {
            sim.schedule(phase, Target::Node(requester), CentralServer::<T>::request_event())
                .map(drop)
        }, None),
        Algorithm::Ring => simulate(TokenRing::new(n, workload), cfg, rng, label, |sim| {
            sim.schedule(SimTime::zero(), Target::Node(holder), RingEvent::Token)?;
            sim.schedule(phase, Target::Node(requester), TokenRing::<T>::request_event())
                .map(drop)
        }, None),
        Algorithm::Raymond => simulate(Raymond::new(n, holder, workload), cfg, rng, label, |sim| {
            sim.schedule(phase, Target::Node(requester), Raymond::<T>::request_event())
                .map(drop)
        }, None),
    }
}

/// `cfg.trials` independent unloaded trials merged into one log.
pub fn run_unloaded<T: Scalar>(cfg: &ScenarioConfig<T>) -> Result<MetricsLog<T>> {
    cfg.validate()?;
    let mut merged = MetricsLog::default();
    for trial in 0..cfg.trials {
        merged.merge(run_unloaded_trial(cfg, trial)?, trial);
    }
    Ok(merged)
}

/// Every node asks at t = 0 and again as soon as it leaves. Stops once enough
/// entries exist for `cfg.trials` synchronization samples after the warm-up.
pub fn run_loaded<T: Scalar>(cfg: &ScenarioConfig<T>) -> Result<MetricsLog<T>> {
    cfg.validate()?;
    let n = cfg.n;
    let rng = RngStream::new(cfg.seed);
    let label = format!("loaded, seed {}", cfg.seed);
    let workload = cfg.workload(true);
    let entries = cfg.trials + 1 + LOADED_WARMUP;

    fn everyone_asks<T: Scalar, P: MutexProtocol<T>>(sim: &mut Simulation<T, P>, n: usize) -> Result<()> {
        for node in 0..n {
            sim.schedule(SimTime::zero(), Target::Node(node), P::request_event())?;
        }
        Ok(())
    }

    let mut log = match cfg.algorithm {
        Algorithm::Central => simulate(CentralServer::new(n, workload), cfg, rng, label, |sim| {
            everyone_asks(sim, n)
        }, Some(entries))?,
        Algorithm::Ring => simulate(TokenRing::new(n, workload), cfg, rng, label, |sim| {
            everyone_asks(sim, n)?;
            sim.schedule(SimTime::zero(), Target::Node(0), RingEvent::Token).map(drop)
        }, Some(entries))?,
        Algorithm::Raymond => simulate(Raymond::new(n, 0, workload), cfg, rng, label, |sim| {
            everyone_asks(sim, n)
        }, Some(entries))?,
    };
    log.set_warmup(LOADED_WARMUP);
    Ok(log)
}
