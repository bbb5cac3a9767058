//! Raymond's token algorithm on a fixed binary tree.
//!
//! Every node keeps a `parent` pointer towards the current token holder and a
//! FIFO queue of pending requesters (itself or tree neighbours). Requests climb
//! the pointers hop by hop; only the first queued request is forwarded. When the
//! token moves across an edge the pointer on that edge flips direction.

use std::collections::VecDeque;

use crate::engine::{Context, EventQueue, Protocol, Target};
use crate::error::{Result, SimError};
use crate::metrics::MessageKind;
use crate::scalar::Scalar;
use crate::scenario::{MutexProtocol, Workload};

const NAME: &str = "raymond";

/// Fixed links of one node in the complete binary tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeLinks {
    pub up: Option<usize>,
    pub left: Option<usize>,
    pub right: Option<usize>,
}

impl TreeLinks {
    pub fn neighbours(&self) -> impl Iterator<Item = usize> {
        [self.up, self.left, self.right].into_iter().flatten()
    }
}

/// Complete binary tree in heap layout: children of `i` are `2i+1` and `2i+2`.
pub fn topology(n: usize) -> Vec<TreeLinks> {
    let child = |c: usize| (c < n).then_some(c);
    (0..n)
        .map(|i| TreeLinks {
            up: (i > 0).then(|| (i - 1) / 2),
            left: child(2 * i + 1),
            right: child(2 * i + 2),
        })
        .collect()
}

/// Parent pointers oriented towards `root`, by breadth-first search over the tree.
pub fn orient_towards(links: &[TreeLinks], root: usize) -> Vec<Option<usize>> {
    let mut parent = vec![None; links.len()];
    let mut seen = vec![false; links.len()];
    let mut frontier = VecDeque::from([root]);
    seen[root] = true;
    while let Some(u) = frontier.pop_front() {
        for v in links[u].neighbours() {
            if !std::mem::replace(&mut seen[v], true) {
                parent[v] = Some(u);
                frontier.push_back(v);
            }
        }
    }
    parent
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaymondKind {
    Request,
    Token,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RaymondMessage {
    pub kind: RaymondKind,
    pub sender: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaymondEvent {
    Deliver(RaymondMessage),
    WantCs,
    EnterCs,
    LeaveCs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaymondNodeState {
    pub id: usize,
    pub parent: Option<usize>,
    pub links: TreeLinks,
    pub queue: VecDeque<usize>,
    pub holds_token: bool,
    pub in_cs: bool,
    /// Token committed to this node's own request; entry is pending.
    pub entering: bool,
    pub request_outstanding: bool,
}

impl RaymondNodeState {
    fn idle_holder(&self) -> bool {
        self.holds_token && !self.in_cs && !self.entering
    }
}

#[derive(Debug, Clone)]
pub struct Raymond<T> {
    nodes: Vec<RaymondNodeState>,
    workload: Workload<T>,
}

impl<T: Scalar> Raymond<T> {
    /// Tree of `n` nodes with the token resting at `holder`.
    pub fn new(n: usize, holder: usize, workload: Workload<T>) -> Self {
        assert!(holder < n, "token holder {holder} outside 0..{n}");
        let links = topology(n);
        let parents = orient_towards(&links, holder);
        let nodes = links
            .into_iter()
            .zip(parents)
            .enumerate()
            .map(|(id, (links, parent))| RaymondNodeState {
                id,
                parent,
                links,
                queue: VecDeque::new(),
                holds_token: id == holder,
                in_cs: false,
                entering: false,
                request_outstanding: false,
            })
            .collect();
        Self { nodes, workload }
    }

    pub fn nodes(&self) -> &[RaymondNodeState] {
        &self.nodes
    }

    fn node(&self, id: usize) -> Result<&RaymondNodeState> {
        self.nodes
            .get(id)
            .ok_or(SimError::UnknownTarget(Target::Node(id)))
    }

    pub fn request(&mut self, id: usize, cx: &mut Context<'_, T, RaymondEvent>) -> Result<()> {
        let node = self.node(id)?;
        if node.queue.contains(&id) || node.in_cs || node.entering {
            return Err(SimError::protocol(NAME, id, "request while already waiting or inside"));
        }
        let now = cx.now();
        cx.log().record_request(id, now);
        self.nodes[id].queue.push_back(id);
        let node = &self.nodes[id];
        if node.idle_holder() {
            let processing = cx.processing_delay();
            self.serve_head(id, processing, cx)?;
        } else if !node.holds_token && !node.request_outstanding {
            self.ask_parent(id, T::zero(), cx)?;
        }
        Ok(())
    }

    /// Receipt of a REQUEST or the TOKEN; each costs one processing delay.
    pub fn on_message(
        &mut self,
        id: usize,
        msg: RaymondMessage,
        cx: &mut Context<'_, T, RaymondEvent>,
    ) -> Result<()> {
        let node = self.node(id)?;
        if !node.links.neighbours().any(|v| v == msg.sender) {
            return Err(SimError::Topology {
                from: msg.sender,
                to: id,
            });
        }
        let processing = cx.processing_delay();
        match msg.kind {
            RaymondKind::Request => {
                let node = &mut self.nodes[id];
                if !node.queue.contains(&msg.sender) {
                    node.queue.push_back(msg.sender);
                }
                if node.idle_holder() {
                    self.serve_head(id, processing, cx)?;
                } else if !node.holds_token && !node.request_outstanding {
                    self.ask_parent(id, processing, cx)?;
                }
            }
            RaymondKind::Token => {
                let node = &mut self.nodes[id];
                if node.holds_token {
                    return Err(SimError::TokenDuplication(format!(
                        "node {id} received a token from {} while holding one",
                        msg.sender
                    )));
                }
                node.holds_token = true;
                node.parent = None;
                node.request_outstanding = false;
                self.serve_head(id, processing, cx)?;
            }
        }
        Ok(())
    }

    /// Gives the idle token to the head of the queue: this node enters after
    /// `delay`, or the token leaves after `delay`.
    fn serve_head(&mut self, id: usize, delay: T, cx: &mut Context<'_, T, RaymondEvent>) -> Result<()> {
        let node = &mut self.nodes[id];
        debug_assert!(node.idle_holder());
        match node.queue.pop_front() {
            None => Ok(()),
            Some(head) if head == id => {
                node.entering = true;
                cx.schedule_in(delay, Target::Node(id), RaymondEvent::EnterCs)?;
                Ok(())
            }
            Some(head) => {
                node.holds_token = false;
                node.parent = Some(head);
                let token = RaymondMessage {
                    kind: RaymondKind::Token,
                    sender: id,
                };
                cx.send(delay, Target::Node(head), MessageKind::Token, RaymondEvent::Deliver(token))?;
                if !self.nodes[id].queue.is_empty() {
                    self.ask_parent(id, delay, cx)?;
                }
                Ok(())
            }
        }
    }

    fn ask_parent(&mut self, id: usize, delay: T, cx: &mut Context<'_, T, RaymondEvent>) -> Result<()> {
        let node = &mut self.nodes[id];
        if node.request_outstanding {
            return Err(SimError::protocol(NAME, id, "second request towards the parent"));
        }
        let parent = node
            .parent
            .ok_or_else(|| SimError::protocol(NAME, id, "no parent to ask while lacking the token"))?;
        node.request_outstanding = true;
        let request = RaymondMessage {
            kind: RaymondKind::Request,
            sender: id,
        };
        cx.send(delay, Target::Node(parent), MessageKind::Request, RaymondEvent::Deliver(request))?;
        Ok(())
    }

    fn enter(&mut self, id: usize, cx: &mut Context<'_, T, RaymondEvent>) -> Result<()> {
        let node = &mut self.nodes[id];
        if !node.entering || !node.holds_token {
            return Err(SimError::protocol(NAME, id, "entry without the token"));
        }
        node.entering = false;
        node.in_cs = true;
        let now = cx.now();
        cx.log().record_enter(id, now)?;
        cx.schedule_in(self.workload.cs_duration, Target::Node(id), RaymondEvent::LeaveCs)?;
        Ok(())
    }

    pub fn exit(&mut self, id: usize, cx: &mut Context<'_, T, RaymondEvent>) -> Result<()> {
        let node = &mut self.nodes.get_mut(id).ok_or(SimError::UnknownTarget(Target::Node(id)))?;
        if !node.in_cs {
            return Err(SimError::protocol(NAME, id, "exit outside the critical section"));
        }
        node.in_cs = false;
        let now = cx.now();
        cx.log().record_exit(id, now)?;
        self.serve_head(id, T::zero(), cx)?;
        if self.workload.rerequest {
            self.request(id, cx)?;
        }
        Ok(())
    }

    /// Node the parent pointers should lead to: the holder, or the destination
    /// of the token in flight.
    fn current_root(&self, queue: &EventQueue<T, RaymondEvent>) -> Result<usize> {
        let holders: Vec<usize> = self.nodes.iter().filter(|n| n.holds_token).map(|n| n.id).collect();
        let in_flight: Vec<usize> = queue
            .pending()
            .filter_map(|e| match (e.target, e.payload) {
                (Target::Node(to), RaymondEvent::Deliver(m)) if m.kind == RaymondKind::Token => Some(to),
                _ => None,
            })
            .collect();
        match (holders.as_slice(), in_flight.as_slice()) {
            ([h], []) | ([], [h]) => Ok(*h),
            _ => Err(SimError::TokenDuplication(format!(
                "holders {holders:?}, in flight to {in_flight:?}"
            ))),
        }
    }
}

impl<T: Scalar> Protocol<T> for Raymond<T> {
    type Message = RaymondEvent;

    fn algorithm(&self) -> &'static str {
        NAME
    }

    fn handle(
        &mut self,
        target: Target,
        payload: RaymondEvent,
        cx: &mut Context<'_, T, RaymondEvent>,
    ) -> Result<()> {
        let Target::Node(id) = target else {
            return Err(SimError::UnknownTarget(target));
        };
        match payload {
            RaymondEvent::Deliver(msg) => self.on_message(id, msg, cx),
            RaymondEvent::WantCs => self.request(id, cx),
            RaymondEvent::EnterCs => self.enter(id, cx),
            RaymondEvent::LeaveCs => self.exit(id, cx),
        }
    }

    fn check_invariants(&self, queue: &EventQueue<T, RaymondEvent>) -> Result<()> {
        let broken = |detail: String| SimError::Invariant {
            algorithm: NAME,
            detail,
        };
        let root = self.current_root(queue)?;
        let holder = self.nodes.iter().find(|n| n.holds_token);
        if holder.is_some() {
            let roots = self.nodes.iter().filter(|n| n.parent.is_none()).count();
            if roots != 1 {
                return Err(broken(format!("{roots} nodes without a parent while the token rests")));
            }
        }
        for start in &self.nodes {
            let mut at = start.id;
            let mut steps = 0;
            while at != root {
                at = self.nodes[at]
                    .parent
                    .ok_or_else(|| broken(format!("pointer chain from {} ends at {at}, root is {root}", start.id)))?;
                steps += 1;
                if steps > self.nodes.len() {
                    return Err(broken(format!("cycle in pointers from {}", start.id)));
                }
            }
            let mut seen = Vec::with_capacity(3);
            for &q in &start.queue {
                if q != start.id && !start.links.neighbours().any(|v| v == q) {
                    return Err(broken(format!("node {} queues non-neighbour {q}", start.id)));
                }
                if seen.contains(&q) {
                    return Err(broken(format!("node {} queues {q} twice", start.id)));
                }
                seen.push(q);
            }
            if (start.in_cs || start.entering) && !start.holds_token {
                return Err(broken(format!("node {} inside without the token", start.id)));
            }
            if let Some(p) = start.parent {
                if !start.links.neighbours().any(|v| v == p) {
                    return Err(broken(format!("node {} points at non-neighbour {p}", start.id)));
                }
            }
        }
        Ok(())
    }
}

impl<T: Scalar> MutexProtocol<T> for Raymond<T> {
    fn request_event() -> RaymondEvent {
        RaymondEvent::WantCs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::DelayModel;
    use crate::engine::{RngStream, SimTime, Simulation};

    fn workload(rerequest: bool) -> Workload<f64> {
        Workload {
            cs_duration: 0.0,
            rerequest,
        }
    }

    fn sim(n: usize, holder: usize, rerequest: bool) -> Simulation<f64, Raymond<f64>> {
        Simulation::new(
            Raymond::new(n, holder, workload(rerequest)),
            DelayModel::with_nodes(n).deterministic(),
            RngStream::new(9),
        )
        .with_invariant_checks(true)
    }

    fn deliver(kind: RaymondKind, sender: usize) -> RaymondEvent {
        RaymondEvent::Deliver(RaymondMessage { kind, sender })
    }

    #[test]
    fn heap_layout() {
        let t = topology(1);
        assert_eq!(t[0], TreeLinks { up: None, left: None, right: None });

        let t = topology(3);
        assert_eq!((t[0].left, t[0].right), (Some(1), Some(2)));
        assert_eq!((t[1].up, t[2].up), (Some(0), Some(0)));

        let t = topology(7);
        assert_eq!(t[6].up, Some(2));
        assert_eq!(t[2].up, Some(0));
        assert!(t[3..].iter().all(|l| l.left.is_none() && l.right.is_none()));
    }

    #[test]
    fn reorientation_points_at_holder() {
        let links = topology(7);
        let parents = orient_towards(&links, 6);
        assert_eq!(parents[6], None);
        assert_eq!(parents[2], Some(6));
        assert_eq!(parents[0], Some(2));
        assert_eq!(parents[1], Some(0));
        assert_eq!(parents[3], Some(1));
    }

    #[test]
    fn idle_root_serves_itself_after_processing() {
        let mut s = sim(3, 0, false);
        s.schedule(SimTime(0.0), Target::Node(0), RaymondEvent::WantCs).unwrap();
        s.run(|p| !p.log.enters().is_empty()).unwrap();
        assert_eq!(s.log().enters()[0].at.0, 15.0);
        assert!(s.log().messages().is_empty());
    }

    #[test]
    fn leaf_request_climbs_two_hops() {
        let mut s = sim(7, 0, false);
        s.schedule(SimTime(0.0), Target::Node(6), RaymondEvent::WantCs).unwrap();
        s.run(|p| !p.log.enters().is_empty()).unwrap();
        let kinds: Vec<MessageKind> = s.log().messages().iter().map(|m| m.kind).collect();
        use MessageKind::{Request, Token};
        assert_eq!(kinds, vec![Request, Request, Token, Token]);
        // 6 -> 2 (30), 2 -> 0 (15 + 30), token 0 -> 2 (15 + 30), 2 -> 6 (15 + 30), enter (15)
        assert_eq!(s.log().enters()[0].at.0, 30.0 + 45.0 * 3.0 + 15.0);
        assert_eq!(s.protocol().nodes()[0].parent, Some(2));
        assert_eq!(s.protocol().nodes()[2].parent, Some(6));
        assert_eq!(s.protocol().nodes()[6].parent, None);
    }

    #[test]
    fn outstanding_request_is_not_repeated() {
        let mut s = sim(7, 0, false);
        s.schedule(SimTime(0.0), Target::Node(6), RaymondEvent::WantCs).unwrap();
        s.schedule(SimTime(1.0), Target::Node(2), RaymondEvent::WantCs).unwrap();
        s.run(|p| p.log.enters().len() == 2).unwrap();
        let requests = s
            .log()
            .messages()
            .iter()
            .filter(|m| m.kind == MessageKind::Request)
            .count();
        // 6's request waits behind 2's at node 2 and is never forwarded
        assert_eq!(requests, 2);
    }

    #[test]
    fn request_to_idle_root_flips_edge() {
        let mut s = sim(3, 0, false);
        s.schedule(SimTime(0.0), Target::Node(0), deliver(RaymondKind::Request, 1)).unwrap();
        s.step().unwrap();
        let nodes = s.protocol().nodes();
        assert!(!nodes[0].holds_token);
        assert_eq!(nodes[0].parent, Some(1));
        let e = s.queue().pending().next().unwrap();
        assert_eq!(e.target, Target::Node(1));
        assert_eq!(e.payload, deliver(RaymondKind::Token, 0));
    }

    #[test]
    fn token_with_deferred_self_passes_on_and_asks_back() {
        // token rests at 1; node 2's request passes through 0 before 0 asks itself
        let mut s = sim(3, 1, false);
        s.schedule(SimTime(0.0), Target::Node(2), RaymondEvent::WantCs).unwrap();
        s.schedule(SimTime(40.0), Target::Node(0), RaymondEvent::WantCs).unwrap();
        s.run(|p| p.log.requests().len() == 2).unwrap();
        let zero = &s.protocol().nodes()[0];
        assert_eq!(zero.queue, VecDeque::from([2, 0]));
        assert!(zero.request_outstanding);
        s.run(|p| p.log.enters().len() == 2).unwrap();
        let order: Vec<usize> = s.log().enters().iter().map(|e| e.node).collect();
        assert_eq!(order, vec![2, 0]);
        use MessageKind::{Request, Token};
        let kinds: Vec<MessageKind> = s.log().messages().iter().map(|m| m.kind).collect();
        // 2->0, 0->1, token 1->0, token 0->2 + request 0->2, token 2->0
        assert_eq!(kinds, vec![Request, Request, Token, Token, Request, Token]);
    }

    #[test]
    fn exit_with_empty_queue_keeps_token() {
        let mut s = sim(3, 0, false);
        s.schedule(SimTime(0.0), Target::Node(0), RaymondEvent::WantCs).unwrap();
        s.run(|p| p.log.exits().len() == 1).unwrap();
        let root = &s.protocol().nodes()[0];
        assert!(root.holds_token && root.parent.is_none());
    }

    #[test]
    fn exit_with_waiter_hands_over() {
        let mut s = sim(3, 0, false);
        s.schedule(SimTime(0.0), Target::Node(0), RaymondEvent::WantCs).unwrap();
        s.schedule(SimTime(0.0), Target::Node(1), RaymondEvent::WantCs).unwrap();
        s.run(|p| p.log.enters().len() == 2).unwrap();
        // 0 enters at 15 and leaves at once; 1's request arrives at 30
        let e = s.log().enters();
        assert_eq!((e[0].node, e[0].at.0), (0, 15.0));
        assert_eq!((e[1].node, e[1].at.0), (1, 30.0 + 15.0 + 30.0 + 15.0));
        assert_eq!(s.protocol().nodes()[0].parent, Some(1));
    }

    #[test]
    fn message_from_non_neighbour_rejected() {
        let mut s = sim(7, 0, false);
        s.schedule(SimTime(0.0), Target::Node(0), deliver(RaymondKind::Request, 6)).unwrap();
        assert!(matches!(s.step().unwrap_err(), SimError::Topology { from: 6, to: 0 }));
    }

    #[test]
    fn token_while_holding_rejected() {
        let mut s = sim(3, 0, false);
        s.schedule(SimTime(0.0), Target::Node(0), deliver(RaymondKind::Token, 1)).unwrap();
        assert!(matches!(s.step().unwrap_err(), SimError::TokenDuplication(_)));
    }

    #[test]
    fn duplicate_self_request_and_stray_exit_rejected() {
        let mut s = sim(3, 0, false);
        s.schedule(SimTime(0.0), Target::Node(2), RaymondEvent::WantCs).unwrap();
        s.schedule(SimTime(0.0), Target::Node(2), RaymondEvent::WantCs).unwrap();
        s.step().unwrap();
        assert!(s.step().is_err());

        let mut s = sim(3, 0, false);
        s.schedule(SimTime(0.0), Target::Node(1), RaymondEvent::LeaveCs).unwrap();
        assert!(s.step().is_err());
    }

    #[test]
    fn loaded_three_nodes_alternate_subtrees() {
        let mut s = sim(3, 0, true);
        for id in 0..3 {
            s.schedule(SimTime(0.0), Target::Node(id), RaymondEvent::WantCs).unwrap();
        }
        s.run(|p| p.log.enters().len() == 12).unwrap();
        let order: Vec<usize> = s.log().enters().iter().map(|e| e.node).collect();
        // root serves itself while requests are in flight, then FIFO rotation
        assert_eq!(order[..2], [0, 0]);
        for w in order[2..].windows(2) {
            assert_ne!(w[0], w[1], "{order:?}");
        }
        for id in 0..3 {
            assert!(order.contains(&id));
        }
    }
}
