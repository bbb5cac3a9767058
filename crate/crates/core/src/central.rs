//! Central coordinator: clients ask a dedicated server, which grants the
//! critical section to one client at a time in request-arrival order.

use std::collections::VecDeque;

use crate::engine::{Context, EventQueue, Protocol, Target};
use crate::error::{Result, SimError};
use crate::metrics::MessageKind;
use crate::scalar::Scalar;
use crate::scenario::{MutexProtocol, Workload};

const NAME: &str = "central";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CentralKind {
    Request,
    Grant,
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CentralMessage {
    pub kind: CentralKind,
    pub origin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CentralEvent {
    /// Local decision of a client to ask for the critical section.
    WantCs,
    /// Local end of the critical-section occupancy.
    LeaveCs,
    Deliver(CentralMessage),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ServerState {
    pub holder: Option<usize>,
    pub pending: VecDeque<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Client {
    Idle,
    Waiting,
    InCs,
}

#[derive(Debug, Clone)]
pub struct CentralServer<T> {
    server: ServerState,
    clients: Vec<Client>,
    workload: Workload<T>,
}

impl<T: Scalar> CentralServer<T> {
    pub fn new(n: usize, workload: Workload<T>) -> Self {
        Self {
            server: ServerState::default(),
            clients: vec![Client::Idle; n],
            workload,
        }
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    fn client(&mut self, node: usize) -> Result<&mut Client> {
        self.clients
            .get_mut(node)
            .ok_or(SimError::UnknownTarget(Target::Node(node)))
    }

    pub fn request(&mut self, node: usize, cx: &mut Context<'_, T, CentralEvent>) -> Result<()> {
        let client = self.client(node)?;
        if *client != Client::Idle {
            return Err(SimError::protocol(NAME, node, "request while already waiting or inside"));
        }
        *client = Client::Waiting;
        let now = cx.now();
        cx.log().record_request(node, now);
        let msg = CentralMessage {
            kind: CentralKind::Request,
            origin: node,
        };
        cx.send(T::zero(), Target::Server, MessageKind::Request, CentralEvent::Deliver(msg))?;
        Ok(())
    }

    pub fn exit(&mut self, node: usize, cx: &mut Context<'_, T, CentralEvent>) -> Result<()> {
        let client = self.client(node)?;
        if *client != Client::InCs {
            return Err(SimError::protocol(NAME, node, "exit without holding the grant"));
        }
        *client = Client::Idle;
        let now = cx.now();
        cx.log().record_exit(node, now)?;
        let msg = CentralMessage {
            kind: CentralKind::Release,
            origin: node,
        };
        cx.send(T::zero(), Target::Server, MessageKind::Release, CentralEvent::Deliver(msg))?;
        if self.workload.rerequest {
            self.request(node, cx)?;
        }
        Ok(())
    }

    /// Server handling of a request or release; both cost one coordinator delay.
    pub fn on_server_message(
        &mut self,
        msg: CentralMessage,
        cx: &mut Context<'_, T, CentralEvent>,
    ) -> Result<()> {
        let processing = cx.server_delay();
        match msg.kind {
            CentralKind::Request => {
                if self.server.pending.contains(&msg.origin) {
                    return Err(SimError::protocol(NAME, msg.origin, "duplicate queued request"));
                }
                if self.server.holder.is_none() {
                    self.server.holder = Some(msg.origin);
                    grant(msg.origin, processing, cx)?;
                } else {
                    self.server.pending.push_back(msg.origin);
                }
            }
            CentralKind::Release => {
                if self.server.holder != Some(msg.origin) {
                    return Err(SimError::protocol(NAME, msg.origin, "release from a non-holder"));
                }
                self.server.holder = self.server.pending.pop_front();
                if let Some(next) = self.server.holder {
                    grant(next, processing, cx)?;
                }
            }
            CentralKind::Grant => {
                return Err(SimError::protocol(NAME, msg.origin, "server received a grant"));
            }
        }
        Ok(())
    }

    fn on_grant(&mut self, node: usize, cx: &mut Context<'_, T, CentralEvent>) -> Result<()> {
        let client = self.client(node)?;
        if *client != Client::Waiting {
            return Err(SimError::protocol(NAME, node, "grant to a client that is not waiting"));
        }
        *client = Client::InCs;
        let now = cx.now();
        cx.log().record_enter(node, now)?;
        cx.schedule_in(self.workload.cs_duration, Target::Node(node), CentralEvent::LeaveCs)?;
        Ok(())
    }
}

fn grant<T: Scalar>(to: usize, after: T, cx: &mut Context<'_, T, CentralEvent>) -> Result<()> {
    let msg = CentralMessage {
        kind: CentralKind::Grant,
        origin: to,
    };
    cx.send(after, Target::Node(to), MessageKind::Grant, CentralEvent::Deliver(msg))?;
    Ok(())
}

impl<T: Scalar> Protocol<T> for CentralServer<T> {
    type Message = CentralEvent;

    fn algorithm(&self) -> &'static str {
        NAME
    }

    fn handle(
        &mut self,
        target: Target,
        payload: CentralEvent,
        cx: &mut Context<'_, T, CentralEvent>,
    ) -> Result<()> {
        match (target, payload) {
            (Target::Server, CentralEvent::Deliver(msg)) => self.on_server_message(msg, cx),
            (Target::Node(node), CentralEvent::WantCs) => self.request(node, cx),
            (Target::Node(node), CentralEvent::LeaveCs) => self.exit(node, cx),
            (Target::Node(node), CentralEvent::Deliver(msg)) if msg.kind == CentralKind::Grant => {
                self.on_grant(node, cx)
            }
            (target, _) => Err(SimError::UnknownTarget(target)),
        }
    }

    fn check_invariants(&self, _queue: &EventQueue<T, CentralEvent>) -> Result<()> {
        let invariant = |detail: &str| SimError::Invariant {
            algorithm: NAME,
            detail: detail.to_string(),
        };
        if self.server.holder.is_none() && !self.server.pending.is_empty() {
            return Err(invariant("server is free while clients are queued"));
        }
        let mut seen = vec![false; self.clients.len()];
        for &p in &self.server.pending {
            if std::mem::replace(&mut seen[p], true) {
                return Err(invariant("client queued twice"));
            }
        }
        if self.clients.iter().filter(|c| **c == Client::InCs).count() > 1 {
            return Err(invariant("two clients inside the critical section"));
        }
        Ok(())
    }
}

impl<T: Scalar> MutexProtocol<T> for CentralServer<T> {
    fn request_event() -> CentralEvent {
        CentralEvent::WantCs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::DelayModel;
    use crate::engine::{RngStream, SimTime, Simulation};

    // 40 * e (n = 10)
    const P10: f64 = 108.731_273_138_361_81;

    fn sim(n: usize, workload: Workload<f64>) -> Simulation<f64, CentralServer<f64>> {
        let delays = DelayModel::with_nodes(n).deterministic();
        Simulation::new(CentralServer::new(n, workload), delays, RngStream::new(1))
            .with_invariant_checks(true)
    }

    fn once() -> Workload<f64> {
        Workload {
            cs_duration: 0.0,
            rerequest: false,
        }
    }

    #[test]
    fn unloaded_request_is_granted_after_two_hops_and_processing() {
        let mut s = sim(10, once());
        s.schedule(SimTime(0.0), Target::Node(3), CentralEvent::WantCs).unwrap();
        // request departs and reaches the server at t = 30
        s.step().unwrap();
        assert_eq!(s.queue().pending().next().unwrap().fire_at.0, 30.0);
        s.run(|p| p.log.exits().len() == 1).unwrap();
        let log = s.log();
        assert_eq!((log.requests().len(), log.enters().len(), log.exits().len()), (1, 1, 1));
        assert!((log.enters()[0].at.0 - (60.0 + P10)).abs() < 1e-9);
        // RELEASE still in flight: 3 messages in total once it is sent
        assert_eq!(log.messages().len(), 3);
    }

    #[test]
    fn busy_server_queues_request() {
        let mut s = sim(10, Workload { cs_duration: 1e7, rerequest: false });
        s.schedule(SimTime(0.0), Target::Node(3), CentralEvent::WantCs).unwrap();
        s.run(|p| p.log.enters().len() == 1).unwrap();
        s.schedule(s.now(), Target::Node(5), CentralEvent::WantCs).unwrap();
        s.run(|p| p.log.requests().len() == 2).unwrap();
        s.step().unwrap(); // REQUEST from 5 reaches the server
        assert_eq!(s.protocol().server().holder, Some(3));
        assert_eq!(s.protocol().server().pending, VecDeque::from([5]));
        // the next GRANT follows the RELEASE of node 3
        s.run(|p| p.log.enters().len() == 2).unwrap();
        let exit3 = s.log().exits()[0].at.0;
        let enter5 = s.log().enters()[1].at.0;
        assert!((enter5 - exit3 - (60.0 + P10)).abs() < 1e-9);
    }

    #[test]
    fn duplicate_request_is_rejected() {
        let mut s = sim(4, once());
        s.schedule(SimTime(0.0), Target::Node(1), CentralEvent::WantCs).unwrap();
        s.schedule(SimTime(0.0), Target::Node(1), CentralEvent::WantCs).unwrap();
        let err = s.run(|_| false).unwrap_err();
        assert!(matches!(err, SimError::Protocol { node: 1, .. }));
    }

    #[test]
    fn exit_by_non_holder_is_rejected() {
        let mut s = sim(4, once());
        s.schedule(SimTime(0.0), Target::Node(2), CentralEvent::LeaveCs).unwrap();
        assert!(matches!(s.step().unwrap_err(), SimError::Protocol { node: 2, .. }));
    }

    #[test]
    fn release_from_non_holder_is_rejected() {
        let mut s = sim(4, once());
        let release = CentralMessage {
            kind: CentralKind::Release,
            origin: 2,
        };
        s.schedule(SimTime(0.0), Target::Server, CentralEvent::Deliver(release)).unwrap();
        assert!(s.step().is_err());
    }

    #[test]
    fn grants_follow_arrival_order() {
        let mut s = sim(6, Workload { cs_duration: 5.0, rerequest: false });
        for (i, node) in [4usize, 1, 5, 2].iter().enumerate() {
            s.schedule(SimTime(i as f64), Target::Node(*node), CentralEvent::WantCs).unwrap();
        }
        s.run(|p| p.log.exits().len() == 4).unwrap();
        let order: Vec<usize> = s.log().enters().iter().map(|e| e.node).collect();
        assert_eq!(order, vec![4, 1, 5, 2]);
    }
}
