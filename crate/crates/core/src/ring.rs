//! Token ring: a single token travels `i -> (i + 1) mod n`; holding it grants
//! the critical section.

use crate::engine::{Context, EventQueue, Protocol, Target};
use crate::error::{Result, SimError};
use crate::metrics::MessageKind;
use crate::scalar::Scalar;
use crate::scenario::{MutexProtocol, Workload};

const NAME: &str = "ring";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingEvent {
    Token,
    WantCs,
    /// Processing of a kept token finished; the node enters.
    EnterCs,
    LeaveCs,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RingNodeState {
    pub id: usize,
    pub successor: usize,
    pub wants_cs: bool,
    pub holds_token: bool,
    pub in_cs: bool,
}

#[derive(Debug, Clone)]
pub struct TokenRing<T> {
    nodes: Vec<RingNodeState>,
    workload: Workload<T>,
}

impl<T: Scalar> TokenRing<T> {
    /// Ring of `n` nodes with no token yet; inject one with a `RingEvent::Token`
    /// delivery to the starting node.
    pub fn new(n: usize, workload: Workload<T>) -> Self {
        let nodes = (0..n)
            .map(|id| RingNodeState {
                id,
                successor: (id + 1) % n,
                ..RingNodeState::default()
            })
            .collect();
        Self { nodes, workload }
    }

    pub fn nodes(&self) -> &[RingNodeState] {
        &self.nodes
    }

    fn node(&mut self, id: usize) -> Result<&mut RingNodeState> {
        self.nodes
            .get_mut(id)
            .ok_or(SimError::UnknownTarget(Target::Node(id)))
    }

    /// Token arrival: one processing delay, then keep it (if wanted) or pass it on.
    pub fn on_token(&mut self, id: usize, cx: &mut Context<'_, T, RingEvent>) -> Result<()> {
        let node = self.node(id)?;
        if node.holds_token {
            return Err(SimError::TokenDuplication(format!(
                "node {id} received a token while holding one"
            )));
        }
        let successor = node.successor;
        let processing = cx.processing_delay();
        if node.wants_cs {
            node.holds_token = true;
            cx.schedule_in(processing, Target::Node(id), RingEvent::EnterCs)?;
        } else {
            cx.send(processing, Target::Node(successor), MessageKind::Token, RingEvent::Token)?;
        }
        Ok(())
    }

    /// Marks the node as waiting; the ring is passive, nothing is sent.
    pub fn request(&mut self, id: usize, cx: &mut Context<'_, T, RingEvent>) -> Result<()> {
        let node = self.node(id)?;
        if node.wants_cs {
            return Err(SimError::protocol(NAME, id, "request while already waiting"));
        }
        node.wants_cs = true;
        let now = cx.now();
        cx.log().record_request(id, now);
        Ok(())
    }

    fn enter(&mut self, id: usize, cx: &mut Context<'_, T, RingEvent>) -> Result<()> {
        let node = self.node(id)?;
        if !node.holds_token || node.in_cs {
            return Err(SimError::protocol(NAME, id, "entry without a kept token"));
        }
        node.in_cs = true;
        let now = cx.now();
        cx.log().record_enter(id, now)?;
        cx.schedule_in(self.workload.cs_duration, Target::Node(id), RingEvent::LeaveCs)?;
        Ok(())
    }

    /// Leaves and forwards the token immediately; entry already paid the processing.
    pub fn exit(&mut self, id: usize, cx: &mut Context<'_, T, RingEvent>) -> Result<()> {
        let node = self.node(id)?;
        if !node.in_cs {
            return Err(SimError::protocol(NAME, id, "exit outside the critical section"));
        }
        node.in_cs = false;
        node.holds_token = false;
        node.wants_cs = false;
        let successor = node.successor;
        let now = cx.now();
        cx.log().record_exit(id, now)?;
        cx.send(T::zero(), Target::Node(successor), MessageKind::Token, RingEvent::Token)?;
        if self.workload.rerequest {
            self.request(id, cx)?;
        }
        Ok(())
    }
}

impl<T: Scalar> Protocol<T> for TokenRing<T> {
    type Message = RingEvent;

    fn algorithm(&self) -> &'static str {
        NAME
    }

    fn handle(&mut self, target: Target, payload: RingEvent, cx: &mut Context<'_, T, RingEvent>) -> Result<()> {
        let Target::Node(id) = target else {
            return Err(SimError::UnknownTarget(target));
        };
        match payload {
            RingEvent::Token => self.on_token(id, cx),
            RingEvent::WantCs => self.request(id, cx),
            RingEvent::EnterCs => self.enter(id, cx),
            RingEvent::LeaveCs => self.exit(id, cx),
        }
    }

    fn check_invariants(&self, queue: &EventQueue<T, RingEvent>) -> Result<()> {
        let held = self.nodes.iter().filter(|n| n.holds_token).count();
        let in_flight = queue
            .pending()
            .filter(|e| e.payload == RingEvent::Token)
            .count();
        if held + in_flight != 1 {
            return Err(SimError::TokenDuplication(format!(
                "{held} held + {in_flight} in flight"
            )));
        }
        if let Some(n) = self.nodes.iter().find(|n| n.in_cs && !n.holds_token) {
            return Err(SimError::Invariant {
                algorithm: NAME,
                detail: format!("node {} inside without the token", n.id),
            });
        }
        Ok(())
    }
}

impl<T: Scalar> MutexProtocol<T> for TokenRing<T> {
    fn request_event() -> RingEvent {
        RingEvent::WantCs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::DelayModel;
    use crate::engine::{RngStream, SimTime, Simulation};

    fn sim(n: usize, rerequest: bool) -> Simulation<f64, TokenRing<f64>> {
        let workload = Workload {
            cs_duration: 0.0,
            rerequest,
        };
        Simulation::new(
            TokenRing::new(n, workload),
            DelayModel::with_nodes(n).deterministic(),
            RngStream::new(5),
        )
        .with_invariant_checks(true)
    }

    #[test]
    fn idle_node_forwards_after_processing_plus_network() {
        let mut s = sim(4, false);
        s.schedule(SimTime(0.0), Target::Node(0), RingEvent::Token).unwrap();
        s.step().unwrap();
        let next = s.queue().pending().next().unwrap();
        assert_eq!((next.fire_at.0, next.target), (45.0, Target::Node(1)));
        assert_eq!(s.log().messages()[0].sent_at.0, 15.0);
    }

    #[test]
    fn two_idle_nodes_alternate() {
        let mut s = sim(2, false);
        s.schedule(SimTime(0.0), Target::Node(0), RingEvent::Token).unwrap();
        let mut arrivals = Vec::new();
        for _ in 0..6 {
            let e = s.queue().pending().next().unwrap();
            arrivals.push((e.fire_at.0, e.target));
            s.step().unwrap();
        }
        let expected: Vec<_> = (0..6).map(|k| (45.0 * k as f64, Target::Node(k % 2))).collect();
        assert_eq!(arrivals, expected);
    }

    #[test]
    fn requesting_node_enters_after_processing() {
        let mut s = sim(3, false);
        s.schedule(SimTime(0.0), Target::Node(0), RingEvent::WantCs).unwrap();
        s.schedule(SimTime(0.0), Target::Node(0), RingEvent::Token).unwrap();
        s.run(|p| !p.log.enters().is_empty()).unwrap();
        assert_eq!(s.log().enters()[0].at.0, 15.0);
        assert!(s.log().messages().is_empty());
    }

    #[test]
    fn waiting_node_served_by_hop_count() {
        let mut s = sim(10, false);
        s.schedule(SimTime(0.0), Target::Node(7), RingEvent::WantCs).unwrap();
        s.schedule(SimTime(0.0), Target::Node(3), RingEvent::Token).unwrap();
        s.run(|p| !p.log.enters().is_empty()).unwrap();
        // four hops 3 -> 7, then processing at 7
        assert_eq!(s.log().enters()[0].at.0, 4.0 * 45.0 + 15.0);
    }

    #[test]
    fn exit_hands_token_to_successor() {
        let mut s = sim(5, true);
        for id in 0..5 {
            s.schedule(SimTime(0.0), Target::Node(id), RingEvent::WantCs).unwrap();
        }
        s.schedule(SimTime(0.0), Target::Node(0), RingEvent::Token).unwrap();
        s.run(|p| p.log.enters().len() == 12).unwrap();
        let order: Vec<usize> = s.log().enters().iter().map(|e| e.node).collect();
        assert_eq!(order, (0..12).map(|k| k % 5).collect::<Vec<_>>());
        let times: Vec<f64> = s.log().enters().iter().map(|e| e.at.0).collect();
        assert!(times.windows(2).all(|w| w[1] - w[0] == 45.0));
    }

    #[test]
    fn double_request_and_stray_exit_fail() {
        let mut s = sim(3, false);
        s.schedule(SimTime(0.0), Target::Node(1), RingEvent::WantCs).unwrap();
        s.schedule(SimTime(0.0), Target::Node(1), RingEvent::WantCs).unwrap();
        s.schedule(SimTime(0.0), Target::Node(0), RingEvent::Token).unwrap();
        s.step().unwrap();
        assert!(s.step().is_err());

        let mut s = sim(3, false);
        s.schedule(SimTime(0.0), Target::Node(1), RingEvent::LeaveCs).unwrap();
        s.schedule(SimTime(1.0), Target::Node(0), RingEvent::Token).unwrap();
        assert!(s.step().is_err());
    }

    #[test]
    fn second_token_is_detected() {
        let mut s = sim(3, false);
        s.schedule(SimTime(0.0), Target::Node(0), RingEvent::Token).unwrap();
        s.schedule(SimTime(0.0), Target::Node(1), RingEvent::Token).unwrap();
        assert!(matches!(s.step().unwrap_err(), SimError::TokenDuplication(_)));
    }
}
