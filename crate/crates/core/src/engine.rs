//! Discrete-event core: virtual clock, ordered event queue and run loop.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::delay::DelayModel;
use crate::error::{Result, SimError};
use crate::metrics::{MessageKind, MetricsLog};
use crate::scalar::Scalar;

/// Virtual time in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime<T>(pub T);

impl<T: Scalar> SimTime<T> {
    pub fn zero() -> Self {
        SimTime(T::zero())
    }

    pub fn ms(self) -> T {
        self.0
    }

    pub fn after(self, delay: T) -> Self {
        SimTime(self.0 + delay)
    }
}

impl<T: Scalar> fmt::Display for SimTime<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Addressable simulation participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    Node(usize),
    Server,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Node(id) => write!(f, "node {id}"),
            Target::Server => f.write_str("server"),
        }
    }
}

/// A scheduled delivery.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord<T, M> {
    pub fire_at: SimTime<T>,
    pub seq: u64,
    pub target: Target,
    pub payload: M,
}

struct Queued<T, M>(EventRecord<T, M>);

impl<T: Scalar, M> Queued<T, M> {
    fn key(&self) -> (T, u64) {
        (self.0.fire_at.0, self.0.seq)
    }
}

impl<T: Scalar, M> PartialEq for Queued<T, M> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar, M> Eq for Queued<T, M> {}

impl<T: Scalar, M> PartialOrd for Queued<T, M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar, M> Ord for Queued<T, M> {
    // Times are checked finite on insertion, so partial_cmp never fails.
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, sa) = self.key();
        let (tb, sb) = other.key();
        ta.partial_cmp(&tb)
            .unwrap_or(Ordering::Equal)
            .then(sa.cmp(&sb))
    }
}

/// Time-ordered queue with ties broken by scheduling order.
pub struct EventQueue<T, M> {
    heap: BinaryHeap<Reverse<Queued<T, M>>>,
    next_seq: u64,
    now: SimTime<T>,
}

impl<T: Scalar, M> Default for EventQueue<T, M> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar, M> EventQueue<T, M> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: SimTime::zero(),
        }
    }

    pub fn now(&self) -> SimTime<T> {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueues `payload` for `target` at `fire_at` and returns its sequence number.
    pub fn schedule(&mut self, fire_at: SimTime<T>, target: Target, payload: M) -> Result<u64> {
        if !fire_at.0.is_finite() {
            return Err(SimError::NonFiniteTime(fire_at.0.as_f64()));
        }
        if fire_at < self.now {
            return Err(SimError::ScheduledInPast {
                target,
                fire_at: fire_at.0.as_f64(),
                now: self.now.0.as_f64(),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Queued(EventRecord {
            fire_at,
            seq,
            target,
            payload,
        })));
        Ok(seq)
    }

    /// Removes the earliest event and advances the clock to its timestamp.
    pub fn pop(&mut self) -> Option<EventRecord<T, M>> {
        let Reverse(Queued(event)) = self.heap.pop()?;
        debug_assert!(event.fire_at >= self.now);
        self.now = event.fire_at;
        Some(event)
    }

    /// Pending events in no particular order.
    pub fn pending(&self) -> impl Iterator<Item = &EventRecord<T, M>> {
        self.heap.iter().map(|Reverse(Queued(event))| event)
    }
}

/// Seeded pseudo-random stream; ChaCha8 gives the same sequence on every platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Normal(mean, stddev²) draw, resampled until strictly positive.
    /// A zero stddev returns `mean` exactly without consuming randomness.
    pub fn gaussian<T: Scalar>(&mut self, mean: T, stddev: T) -> T {
        debug_assert!(stddev >= T::zero());
        if stddev == T::zero() {
            return mean;
        }
        loop {
            let draw = mean + stddev * T::standard_normal(&mut self.rng);
            if draw > T::zero() {
                return draw;
            }
        }
    }

    /// Uniform draw from `[low, high)`; returns `low` for an empty range.
    pub fn uniform<T: Scalar>(&mut self, low: T, high: T) -> T {
        if high <= low {
            return low;
        }
        low + (high - low) * T::unit_uniform(&mut self.rng)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// Derives an independent per-trial seed (SplitMix64 finaliser over `seed ^ mix(index)`).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(seed ^ splitmix(index))
}

/// Handle given to protocol handlers while an event is dispatched.
pub struct Context<'a, T, M> {
    queue: &'a mut EventQueue<T, M>,
    rng: &'a mut RngStream,
    delays: &'a DelayModel<T>,
    log: &'a mut MetricsLog<T>,
}

impl<'a, T: Scalar, M> Context<'a, T, M> {
    pub fn now(&self) -> SimTime<T> {
        self.queue.now()
    }

    pub fn delays(&self) -> &DelayModel<T> {
        self.delays
    }

    pub fn log(&mut self) -> &mut MetricsLog<T> {
        self.log
    }

    pub fn network_delay(&mut self) -> T {
        self.delays.network_delay(self.rng)
    }

    pub fn processing_delay(&mut self) -> T {
        self.delays.node_processing_delay(self.rng)
    }

    pub fn server_delay(&self) -> T {
        self.delays.server_processing_delay()
    }

    /// Schedules an internal (non-message) event `delay` ms from now.
    pub fn schedule_in(&mut self, delay: T, target: Target, payload: M) -> Result<u64> {
        let at = self.now().after(delay);
        self.queue.schedule(at, target, payload)
    }

    /// Sends a protocol message that departs `departure` ms from now and
    /// arrives one sampled network delay later. The send is counted.
    pub fn send(&mut self, departure: T, to: Target, kind: MessageKind, payload: M) -> Result<u64> {
        let leaves = self.now().after(departure);
        let arrives = leaves.after(self.network_delay());
        self.log.record_message(kind, leaves);
        self.queue.schedule(arrives, to, payload)
    }
}

/// A message-driven protocol dispatched by [`Simulation`].
pub trait Protocol<T: Scalar> {
    type Message: fmt::Debug;

    fn algorithm(&self) -> &'static str;

    fn handle(
        &mut self,
        target: Target,
        payload: Self::Message,
        cx: &mut Context<'_, T, Self::Message>,
    ) -> Result<()>;

    /// Whole-system invariants, checked after every dispatch when enabled.
    fn check_invariants(&self, _queue: &EventQueue<T, Self::Message>) -> Result<()> {
        Ok(())
    }
}

/// Read-only snapshot handed to stop conditions.
pub struct Progress<'a, T> {
    pub now: SimTime<T>,
    pub dispatched: u64,
    pub log: &'a MetricsLog<T>,
}

pub struct Simulation<T: Scalar, P: Protocol<T>> {
    protocol: P,
    queue: EventQueue<T, P::Message>,
    rng: RngStream,
    delays: DelayModel<T>,
    log: MetricsLog<T>,
    scenario: String,
    check_invariants: bool,
    max_dispatches: u64,
    dispatched: u64,
}

impl<T: Scalar, P: Protocol<T>> Simulation<T, P> {
    pub fn new(protocol: P, delays: DelayModel<T>, rng: RngStream) -> Self {
        Self {
            protocol,
            queue: EventQueue::new(),
            rng,
            delays,
            log: MetricsLog::default(),
            scenario: String::new(),
            check_invariants: false,
            max_dispatches: 50_000_000,
            dispatched: 0,
        }
    }

    /// Label used in liveness diagnostics.
    pub fn with_scenario(mut self, label: impl Into<String>) -> Self {
        self.scenario = label.into();
        self
    }

    pub fn with_invariant_checks(mut self, on: bool) -> Self {
        self.check_invariants = on;
        self
    }

    pub fn with_dispatch_limit(mut self, limit: u64) -> Self {
        self.max_dispatches = limit;
        self
    }

    pub fn schedule(&mut self, at: SimTime<T>, target: Target, payload: P::Message) -> Result<u64> {
        self.queue.schedule(at, target, payload)
    }

    pub fn now(&self) -> SimTime<T> {
        self.queue.now()
    }

    pub fn protocol(&self) -> &P {
        &self.protocol
    }

    pub fn log(&self) -> &MetricsLog<T> {
        &self.log
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn queue(&self) -> &EventQueue<T, P::Message> {
        &self.queue
    }

    /// Dispatches one event. Returns `Ok(false)` when the queue is empty.
    pub fn step(&mut self) -> Result<bool> {
        let Some(event) = self.queue.pop() else {
            return Ok(false);
        };
        self.dispatched += 1;
        let mut cx = Context {
            queue: &mut self.queue,
            rng: &mut self.rng,
            delays: &self.delays,
            log: &mut self.log,
        };
        self.protocol.handle(event.target, event.payload, &mut cx)?;
        if self.check_invariants {
            self.protocol.check_invariants(&self.queue)?;
        }
        Ok(true)
    }

    /// Runs until `stop` holds. Draining the queue first is a deadlock.
    pub fn run<F>(&mut self, mut stop: F) -> Result<()>
    where
        F: FnMut(&Progress<'_, T>) -> bool,
    {
        loop {
            let progress = Progress {
                now: self.queue.now(),
                dispatched: self.dispatched,
                log: &self.log,
            };
            if stop(&progress) {
                return Ok(());
            }
            if self.dispatched >= self.max_dispatches {
                return Err(SimError::DispatchLimit {
                    algorithm: self.protocol.algorithm().to_string(),
                    scenario: self.scenario.clone(),
                    limit: self.max_dispatches,
                });
            }
            if !self.step()? {
                return Err(SimError::Deadlock {
                    algorithm: self.protocol.algorithm().to_string(),
                    scenario: self.scenario.clone(),
                    dispatched: self.dispatched,
                });
            }
        }
    }

    pub fn into_log(self) -> MetricsLog<T> {
        self.log
    }
}
