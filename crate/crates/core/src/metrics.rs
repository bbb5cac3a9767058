//! Raw event log, derived delay metrics and summary statistics.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::{Result, SimError};
use crate::scalar::Scalar;

/// Protocol message kinds; internal engine events are never counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    Request,
    Grant,
    Release,
    Token,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stamp<T> {
    pub trial: usize,
    pub node: usize,
    pub at: SimTime<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord<T> {
    pub trial: usize,
    pub kind: MessageKind,
    pub sent_at: SimTime<T>,
}

/// One derived metric value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample<T> {
    pub trial: usize,
    pub node: usize,
    pub value: T,
}

/// A critical-section occupancy; `exit` is `None` while still inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Session<T> {
    pub trial: usize,
    pub node: usize,
    pub enter: SimTime<T>,
    pub exit: Option<SimTime<T>>,
}

/// Timestamped request/enter/exit events and sent messages of one or more runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog<T> {
    requests: Vec<Stamp<T>>,
    enters: Vec<Stamp<T>>,
    exits: Vec<Stamp<T>>,
    messages: Vec<MessageRecord<T>>,
    /// Leading synchronization samples per trial treated as warm-up.
    warmup: usize,
    #[serde(skip)]
    occupant: Option<usize>,
}

impl<T> Default for MetricsLog<T> {
    fn default() -> Self {
        Self {
            requests: Vec::new(),
            enters: Vec::new(),
            exits: Vec::new(),
            messages: Vec::new(),
            warmup: 0,
            occupant: None,
        }
    }
}

impl<T: Scalar> MetricsLog<T> {
    pub fn requests(&self) -> &[Stamp<T>] {
        &self.requests
    }

    pub fn enters(&self) -> &[Stamp<T>] {
        &self.enters
    }

    pub fn exits(&self) -> &[Stamp<T>] {
        &self.exits
    }

    pub fn messages(&self) -> &[MessageRecord<T>] {
        &self.messages
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    pub fn set_warmup(&mut self, samples: usize) {
        self.warmup = samples;
    }

    /// Node currently inside the critical section, if any.
    pub fn occupant(&self) -> Option<usize> {
        self.occupant
    }

    pub fn record_request(&mut self, node: usize, at: SimTime<T>) {
        self.requests.push(Stamp { trial: 0, node, at });
    }

    /// Records a CS entry; fails if another node is still inside.
    pub fn record_enter(&mut self, node: usize, at: SimTime<T>) -> Result<()> {
        if let Some(first) = self.occupant {
            return Err(SimError::Safety {
                first,
                second: node,
                at: at.0.as_f64(),
            });
        }
        self.occupant = Some(node);
        self.enters.push(Stamp { trial: 0, node, at });
        Ok(())
    }

    pub fn record_exit(&mut self, node: usize, at: SimTime<T>) -> Result<()> {
        if self.occupant != Some(node) {
            return Err(SimError::LogIntegrity(format!(
                "node {node} left the critical section at {at} without being inside"
            )));
        }
        self.occupant = None;
        self.exits.push(Stamp { trial: 0, node, at });
        Ok(())
    }

    pub fn record_message(&mut self, kind: MessageKind, sent_at: SimTime<T>) {
        self.messages.push(MessageRecord {
            trial: 0,
            kind,
            sent_at,
        });
    }

    /// Appends `other`, relabelling all of its records with `trial`.
    pub fn merge(&mut self, other: MetricsLog<T>, trial: usize) {
        let relabel = |mut s: Stamp<T>| {
            s.trial = trial;
            s
        };
        self.requests.extend(other.requests.into_iter().map(relabel));
        self.enters.extend(other.enters.into_iter().map(relabel));
        self.exits.extend(other.exits.into_iter().map(relabel));
        self.messages
            .extend(other.messages.into_iter().map(|mut m| {
                m.trial = trial;
                m
            }));
        self.warmup = self.warmup.max(other.warmup);
    }

    /// Messages sent, by kind.
    pub fn message_counts(&self) -> BTreeMap<MessageKind, usize> {
        let mut counts = BTreeMap::new();
        for m in &self.messages {
            *counts.entry(m.kind).or_insert(0) += 1;
        }
        counts
    }

    /// Total messages divided by CS entries.
    pub fn messages_per_entry(&self) -> Option<f64> {
        if self.enters.is_empty() {
            return None;
        }
        Some(self.messages.len() as f64 / self.enters.len() as f64)
    }

    /// Messages sent per measured handoff: those departing in the window from
    /// the first measured exit up to (excluding) the last entry, divided by
    /// the number of synchronization samples in that window.
    pub fn messages_per_handoff(&self) -> Result<Option<f64>> {
        let sessions = sessions(self)?;
        let mut by_trial: BTreeMap<usize, Vec<Session<T>>> = BTreeMap::new();
        for s in sessions {
            by_trial.entry(s.trial).or_default().push(s);
        }
        let (mut sent, mut handoffs) = (0usize, 0usize);
        for (trial, list) in by_trial {
            if list.len() < self.warmup + 2 {
                continue;
            }
            let from = list[self.warmup].exit.ok_or_else(|| {
                SimError::LogIntegrity("measured session never exited".into())
            })?;
            let to = list[list.len() - 1].enter;
            sent += self
                .messages
                .iter()
                .filter(|m| m.trial == trial && m.sent_at >= from && m.sent_at < to)
                .count();
            handoffs += list.len() - 1 - self.warmup;
        }
        Ok((handoffs > 0).then(|| sent as f64 / handoffs as f64))
    }
}

/// Pairs every entry with the same node's next exit, ordered by entry time.
pub fn sessions<T: Scalar>(log: &MetricsLog<T>) -> Result<Vec<Session<T>>> {
    pair_sessions(log, true)
}

fn pair_sessions<T: Scalar>(log: &MetricsLog<T>, strict: bool) -> Result<Vec<Session<T>>> {
    let mut exits: HashMap<(usize, usize), VecDeque<SimTime<T>>> = HashMap::new();
    for e in &log.exits {
        exits.entry((e.trial, e.node)).or_default().push_back(e.at);
    }
    let mut out = Vec::with_capacity(log.enters.len());
    for e in &log.enters {
        let exit = exits.get_mut(&(e.trial, e.node)).and_then(|q| q.pop_front());
        if let Some(x) = exit {
            if strict && x < e.at {
                return Err(SimError::LogIntegrity(format!(
                    "node {} exit at {x} precedes its entry at {}",
                    e.node, e.at
                )));
            }
        }
        out.push(Session {
            trial: e.trial,
            node: e.node,
            enter: e.at,
            exit,
        });
    }
    if let Some(((_, node), _)) = exits.iter().find(|(_, q)| strict && !q.is_empty()) {
        return Err(SimError::LogIntegrity(format!(
            "node {node} has an exit without a matching entry"
        )));
    }
    out.sort_by(|a, b| {
        a.trial
            .cmp(&b.trial)
            .then(a.enter.partial_cmp(&b.enter).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(out)
}

/// Time from each served request to the corresponding CS entry, in request order.
pub fn client_delays<T: Scalar>(log: &MetricsLog<T>) -> Result<Vec<Sample<T>>> {
    let mut pending: HashMap<(usize, usize), VecDeque<usize>> = HashMap::new();
    for (i, r) in log.requests.iter().enumerate() {
        pending.entry((r.trial, r.node)).or_default().push_back(i);
    }
    let mut served = Vec::with_capacity(log.enters.len());
    for e in &log.enters {
        let idx = pending
            .get_mut(&(e.trial, e.node))
            .and_then(|q| q.pop_front())
            .ok_or_else(|| {
                SimError::LogIntegrity(format!(
                    "node {} entered at {} without a pending request",
                    e.node, e.at
                ))
            })?;
        let req = &log.requests[idx];
        if req.at > e.at {
            return Err(SimError::LogIntegrity(format!(
                "node {} entered at {} before requesting at {}",
                e.node, e.at, req.at
            )));
        }
        served.push((
            idx,
            Sample {
                trial: e.trial,
                node: e.node,
                value: e.at.0 - req.at.0,
            },
        ));
    }
    served.sort_by_key(|(idx, _)| *idx);
    Ok(served.into_iter().map(|(_, s)| s).collect())
}

/// Gaps between one session's exit and the next session's entry, per trial,
/// skipping the log's warm-up samples.
pub fn sync_delays<T: Scalar>(log: &MetricsLog<T>) -> Result<Vec<Sample<T>>> {
    let sessions = sessions(log)?;
    let mut out = Vec::new();
    let mut per_trial = 0usize;
    for pair in sessions.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        if prev.trial != next.trial {
            per_trial = 0;
            continue;
        }
        let overlap = SimError::Safety {
            first: prev.node,
            second: next.node,
            at: next.enter.0.as_f64(),
        };
        let exit = prev.exit.ok_or_else(|| overlap.clone())?;
        if next.enter < exit {
            return Err(overlap);
        }
        if per_trial >= log.warmup {
            out.push(Sample {
                trial: next.trial,
                node: next.node,
                value: next.enter.0 - exit.0,
            });
        }
        per_trial += 1;
    }
    Ok(out)
}

/// Two critical-section sessions that overlap in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation<T> {
    pub first: Session<T>,
    pub second: Session<T>,
}

impl<T: Scalar> fmt::Display for Violation<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let end = |s: &Session<T>| s.exit.map_or("open".to_string(), |x| x.to_string());
        write!(
            f,
            "trial {}: node {} [{}, {}] overlaps node {} [{}, {}]",
            self.first.trial,
            self.first.node,
            self.first.enter,
            end(&self.first),
            self.second.node,
            self.second.enter,
            end(&self.second),
        )
    }
}

/// Scans the sessions sorted by entry and returns the first overlapping pair.
/// Touching intervals (exit == next entry) do not overlap; open sessions extend forever.
pub fn check_mutual_exclusion<T: Scalar>(log: &MetricsLog<T>) -> Result<(), Violation<T>> {
    let sessions = pair_sessions(log, false).expect("lenient pairing is infallible");
    check_intervals(&sessions)
}

pub(crate) fn check_intervals<T: Scalar>(sessions: &[Session<T>]) -> Result<(), Violation<T>> {
    let end = |s: &Session<T>| s.exit.map_or(T::infinity(), |x| x.0);
    let mut sorted: Vec<&Session<T>> = sessions.iter().collect();
    sorted.sort_by(|a, b| {
        a.trial
            .cmp(&b.trial)
            .then(a.enter.0.partial_cmp(&b.enter.0).unwrap_or(std::cmp::Ordering::Equal))
            .then(end(a).partial_cmp(&end(b)).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut widest: Option<&Session<T>> = None;
    for s in sorted {
        match widest {
            Some(w) if w.trial == s.trial => {
                if s.enter.0 < end(w) {
                    return Err(Violation {
                        first: *w,
                        second: *s,
                    });
                }
                if end(s) > end(w) {
                    widest = Some(s);
                }
            }
            _ => widest = Some(s),
        }
    }
    Ok(())
}

/// Count, mean, sample standard deviation and range of a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats<T> {
    pub count: usize,
    pub mean: T,
    /// n−1 denominator; absent for a single sample.
    pub stddev: Option<T>,
    pub min: T,
    pub max: T,
}

/// Welford single-pass summary. `None` for an empty sample set.
pub fn summarize<T: Scalar>(samples: &[T]) -> Option<SummaryStats<T>> {
    let first = *samples.first()?;
    let (mut mean, mut m2) = (T::zero(), T::zero());
    let (mut min, mut max) = (first, first);
    for (i, &x) in samples.iter().enumerate() {
        let k = T::from_usize(i + 1).expect("sample count representable");
        let delta = x - mean;
        mean = mean + delta / k;
        m2 = m2 + delta * (x - mean);
        min = min.min(x);
        max = max.max(x);
    }
    let count = samples.len();
    let stddev = (count > 1).then(|| {
        let dof = T::from_usize(count - 1).expect("sample count representable");
        (m2 / dof).max(T::zero()).sqrt()
    });
    Some(SummaryStats {
        count,
        mean: mean.max(min).min(max),
        stddev,
        min,
        max,
    })
}
