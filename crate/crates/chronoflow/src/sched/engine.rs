//! The single-threaded delivery core: edge queues, policy admission, work
//! selection, and per-edge accounting. The threaded runtime wraps this in a
//! lock; everything here is deterministic given the call sequence.
//!
//! Accounting contract, per edge: `posted = delivered + dropped + queue_len`
//! at every instant observable under the lock. Messages deferred into a
//! throttle outbox are not yet posted; they are admitted (and counted) when
//! the queue frees.

use crate::ids::{EdgeId, NodeId};
use crate::message::AnyMessage;
use crate::sched::{DeliveryPolicy, PostOutcome};
use crate::time::{Envelope, TimeSpan, Timestamp};
use std::collections::VecDeque;
use std::sync::Arc;

/// Total order used by the deterministic lane and for close-marker placement.
pub(crate) type DeliveryKey = (Timestamp, u32, u64);

pub(crate) fn envelope_key(env: &Envelope) -> DeliveryKey {
    (env.originating, env.stream_id, env.sequence)
}

enum QItem {
    Msg(Envelope, Arc<dyn AnyMessage>),
    /// End-of-stream marker; sorts immediately after the last message of its
    /// stream in the deterministic lane.
    Close(DeliveryKey),
}

impl QItem {
    fn key(&self) -> DeliveryKey {
        match self {
            QItem::Msg(env, _) => envelope_key(env),
            QItem::Close(key) => *key,
        }
    }
}

pub(crate) struct EdgeSlot {
    pub to_node: NodeId,
    pub to_port: usize,
    pub from_node: NodeId,
    pub from_stream: u32,
    pub policy: DeliveryPolicy,
    pub deep_copy: bool,

    queue: VecDeque<QItem>,
    msg_len: usize,
    /// Posts deferred from callback context while a throttled queue is full.
    outbox: VecDeque<(Envelope, Arc<dyn AnyMessage>)>,
    close_pending: Option<DeliveryKey>,
    pub closed_for_post: bool,
    close_requested: bool,

    posted: u64,
    delivered: u64,
    dropped: u64,
    queue_max: usize,
    lat_last: TimeSpan,
    lat_max: TimeSpan,
    lat_sum: i128,
    lat_count: u64,
    over_threshold: bool,
}

impl EdgeSlot {
    fn new(
        to_node: NodeId,
        to_port: usize,
        from_node: NodeId,
        from_stream: u32,
        policy: DeliveryPolicy,
        deep_copy: bool,
    ) -> Self {
        EdgeSlot {
            to_node,
            to_port,
            from_node,
            from_stream,
            policy,
            deep_copy,
            queue: VecDeque::new(),
            msg_len: 0,
            outbox: VecDeque::new(),
            close_pending: None,
            closed_for_post: false,
            close_requested: false,
            posted: 0,
            delivered: 0,
            dropped: 0,
            queue_max: 0,
            lat_last: TimeSpan::ZERO,
            lat_max: TimeSpan::ZERO,
            lat_sum: 0,
            lat_count: 0,
            over_threshold: false,
        }
    }

    fn bound(&self) -> Option<usize> {
        match self.policy {
            DeliveryPolicy::QueueSize(n) | DeliveryPolicy::Throttle(n) => Some(n),
            _ => None,
        }
    }

    fn push_msg(&mut self, env: Envelope, payload: Arc<dyn AnyMessage>) {
        self.queue.push_back(QItem::Msg(env, payload));
        self.msg_len += 1;
        self.posted += 1;
        if self.msg_len > self.queue_max {
            self.queue_max = self.msg_len;
        }
        if let Some(n) = self.bound() {
            assert!(self.msg_len <= n, "policy bound violated on edge queue");
        }
    }

    /// Evicts the oldest undelivered message, counting it as dropped.
    fn evict_oldest(&mut self) -> bool {
        let pos = self
            .queue
            .iter()
            .position(|item| matches!(item, QItem::Msg(..)));
        match pos {
            Some(pos) => {
                self.queue.remove(pos);
                self.msg_len -= 1;
                self.dropped += 1;
                true
            }
            None => false,
        }
    }

    fn front_key(&self) -> Option<DeliveryKey> {
        self.queue.front().map(|item| item.key())
    }

    pub fn stats(&self) -> QueueStats {
        QueueStats {
            queue_len: self.msg_len as u64,
            queue_max: self.queue_max as u64,
            posted: self.posted,
            delivered: self.delivered,
            dropped: self.dropped,
            latency_last: self.lat_last,
            latency_max: self.lat_max,
            latency_avg: if self.lat_count == 0 {
                TimeSpan::ZERO
            } else {
                TimeSpan::from_ns((self.lat_sum / self.lat_count as i128) as i64)
            },
            over_threshold: self.over_threshold,
        }
    }
}

/// Point-in-time accounting view of one edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueStats {
    pub queue_len: u64,
    pub queue_max: u64,
    pub posted: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub latency_last: TimeSpan,
    pub latency_avg: TimeSpan,
    pub latency_max: TimeSpan,
    pub over_threshold: bool,
}

pub(crate) struct EmitterSlot {
    pub owner: NodeId,
    pub last: Option<Envelope>,
    pub next_sequence: u64,
    pub closed: bool,
    /// Merge outputs interleave originating times and opt out of the
    /// strict-monotonicity check.
    pub ordered: bool,
    pub edges: Vec<EdgeId>,
}

#[derive(Default)]
pub(crate) struct NodeSlot {
    /// Receiver edges by port index; `None` for unconnected optional ports.
    pub receivers: Vec<Option<EdgeId>>,
    pub busy: bool,
    /// Number of this node's outgoing edges with a non-empty throttle outbox.
    /// While non-zero the node receives no further callbacks (back-pressure).
    pub suspended: u32,
    pub open_receivers: usize,
    pub finalized: bool,
    rr: usize,
}

/// One unit of work handed to a worker.
pub(crate) struct WorkItem {
    pub node: NodeId,
    pub edge: EdgeId,
    pub port: usize,
    pub kind: WorkKind,
}

pub(crate) enum WorkKind {
    Deliver(Envelope, Arc<dyn AnyMessage>, bool),
    PortClosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("post on a closed edge")]
pub struct ClosedEdge;

pub(crate) struct Engine {
    pub edges: Vec<EdgeSlot>,
    pub emitters: Vec<EmitterSlot>,
    pub nodes: Vec<NodeSlot>,
    pub deterministic: bool,
    pub latency_threshold: TimeSpan,
    /// Set when drain begins; throttle waiters bail out with PipelineStopped.
    pub stopping: bool,
    rr: usize,
    /// Messages currently queued or being delivered, used for quiescence.
    pub pending_items: usize,
    pub in_flight: usize,
}

impl Engine {
    pub fn new(deterministic: bool, latency_threshold: TimeSpan) -> Self {
        Engine {
            edges: Vec::new(),
            emitters: Vec::new(),
            nodes: Vec::new(),
            deterministic,
            latency_threshold,
            stopping: false,
            rr: 0,
            pending_items: 0,
            in_flight: 0,
        }
    }

    pub fn add_node(&mut self, receiver_ports: usize) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(NodeSlot {
            receivers: vec![None; receiver_ports],
            ..Default::default()
        });
        id
    }

    pub fn add_emitter(&mut self, owner: NodeId, ordered: bool) -> u32 {
        let id = self.emitters.len() as u32;
        self.emitters.push(EmitterSlot {
            owner,
            last: None,
            next_sequence: 0,
            closed: false,
            ordered,
            edges: Vec::new(),
        });
        id
    }

    pub fn add_edge(
        &mut self,
        from_stream: u32,
        to_node: NodeId,
        to_port: usize,
        policy: DeliveryPolicy,
        deep_copy: bool,
    ) -> EdgeId {
        let from_node = self.emitters[from_stream as usize].owner;
        let id = EdgeId(self.edges.len() as u32);
        self.edges.push(EdgeSlot::new(
            to_node,
            to_port,
            from_node,
            from_stream,
            policy,
            deep_copy,
        ));
        self.emitters[from_stream as usize].edges.push(id);
        self.nodes[to_node.index()].receivers[to_port] = Some(id);
        self.nodes[to_node.index()].open_receivers += 1;
        id
    }

    /// Admits one message to one edge under its delivery policy.
    ///
    /// `now` is the pipeline clock at post time; `LatencyConstrained` edges
    /// measure message age against it.
    pub fn post(
        &mut self,
        edge: EdgeId,
        env: Envelope,
        payload: Arc<dyn AnyMessage>,
        now: Timestamp,
    ) -> Result<PostOutcome, ClosedEdge> {
        let slot = &mut self.edges[edge.index()];
        if slot.closed_for_post || self.emitters[slot.from_stream as usize].closed {
            return Err(ClosedEdge);
        }
        let mut evicted = 0usize;
        match slot.policy {
            DeliveryPolicy::Unlimited => {
                slot.push_msg(env, payload);
            }
            DeliveryPolicy::LatestMessage => {
                // modeled as a one-slot queue with evict-oldest
                while slot.msg_len >= 1 && slot.evict_oldest() {
                    evicted += 1;
                }
                slot.push_msg(env, payload);
            }
            DeliveryPolicy::QueueSize(n) => {
                if slot.msg_len >= n && slot.evict_oldest() {
                    evicted += 1;
                }
                slot.push_msg(env, payload);
            }
            DeliveryPolicy::Throttle(n) => {
                if slot.msg_len >= n {
                    return Ok(PostOutcome::Blocked);
                }
                slot.push_msg(env, payload);
            }
            DeliveryPolicy::LatencyConstrained(max) => {
                let age = now.saturating_span_since(env.originating);
                if age > max {
                    slot.posted += 1;
                    slot.dropped += 1;
                    return Ok(PostOutcome::Dropped);
                }
                slot.push_msg(env, payload);
            }
        }
        self.pending_items += 1;
        self.pending_items -= evicted;
        Ok(PostOutcome::Accepted)
    }

    /// Defers a callback-context post on a full throttled edge. The producer
    /// is suspended (no further callbacks) until the outbox drains; this is
    /// how back-pressure propagates without parking a worker thread.
    pub fn defer_to_outbox(&mut self, edge: EdgeId, env: Envelope, payload: Arc<dyn AnyMessage>) {
        let slot = &mut self.edges[edge.index()];
        let from = slot.from_node;
        if slot.outbox.is_empty() {
            self.nodes[from.index()].suspended += 1;
        }
        self.edges[edge.index()].outbox.push_back((env, payload));
    }

    pub fn throttle_has_space(&self, edge: EdgeId) -> bool {
        let slot = &self.edges[edge.index()];
        match slot.policy {
            DeliveryPolicy::Throttle(n) => slot.msg_len < n,
            _ => true,
        }
    }

    /// Stamps the next envelope for an emitter and validates the stream
    /// contract. The caller posts the result to each subscriber edge.
    pub fn stamp(
        &mut self,
        stream: u32,
        originating: Timestamp,
        now: Timestamp,
    ) -> Result<Envelope, StampError> {
        let slot = &mut self.emitters[stream as usize];
        if slot.closed {
            return Err(StampError::Closed);
        }
        // Creation never precedes originating, even if the pipeline clock lags.
        let creation = now.max(originating);
        let env = Envelope::new(stream, slot.next_sequence, originating, creation);
        if slot.ordered {
            crate::time::validate_envelope(slot.last.as_ref(), &env)
                .map_err(StampError::Violation)?;
        }
        slot.next_sequence += 1;
        slot.last = Some(env);
        Ok(env)
    }

    pub fn emitter_edges(&self, stream: u32) -> Vec<EdgeId> {
        self.emitters[stream as usize].edges.clone()
    }

    /// Closes an emitter: queues end-of-stream markers on every subscriber
    /// edge. Markers sort right after the stream's last message.
    pub fn close_emitter(&mut self, stream: u32) {
        if self.emitters[stream as usize].closed {
            return;
        }
        self.emitters[stream as usize].closed = true;
        let key = match self.emitters[stream as usize].last {
            Some(env) => (env.originating, env.stream_id, env.sequence + 1),
            None => (Timestamp::MIN, stream, 0),
        };
        for edge in self.emitter_edges(stream) {
            let slot = &mut self.edges[edge.index()];
            if slot.close_requested {
                continue;
            }
            slot.close_requested = true;
            slot.close_pending = Some(key);
            self.flush_close_marker(edge);
        }
    }

    /// The close marker enters the queue only once the outbox has drained,
    /// preserving per-edge order.
    fn flush_close_marker(&mut self, edge: EdgeId) {
        let slot = &mut self.edges[edge.index()];
        if slot.outbox.is_empty() {
            if let Some(key) = slot.close_pending.take() {
                slot.queue.push_back(QItem::Close(key));
                self.pending_items += 1;
            }
        }
    }

    /// Force-closes an edge during cycle drain: queued messages are counted
    /// as dropped and an end-of-stream marker is delivered instead.
    pub fn force_close_edge(&mut self, edge: EdgeId) {
        let slot = &mut self.edges[edge.index()];
        if slot.close_requested {
            return;
        }
        slot.closed_for_post = true;
        slot.close_requested = true;
        let mut removed = 0usize;
        slot.queue.retain(|item| match item {
            QItem::Msg(..) => {
                removed += 1;
                false
            }
            QItem::Close(_) => true,
        });
        slot.dropped += removed as u64;
        slot.msg_len = 0;
        for (_, _) in slot.outbox.drain(..) {
            // Outbox entries were never admitted; account them as posted+dropped
            // so producers and consumers agree on totals.
            slot.posted += 1;
            slot.dropped += 1;
        }
        self.pending_items -= removed;
        let from = slot.from_node;
        if self.nodes[from.index()].suspended > 0 {
            // The producer may have been parked on this edge's outbox.
            self.recount_suspension(from);
        }
        let stream = self.edges[edge.index()].from_stream;
        let key = match self.emitters[stream as usize].last {
            Some(env) => (env.originating, env.stream_id, env.sequence + 1),
            None => (Timestamp::MIN, stream, 0),
        };
        self.edges[edge.index()].queue.push_back(QItem::Close(key));
        self.pending_items += 1;
    }

    /// Removes a misbehaving component from scheduling and reporting it as
    /// finalized so drain can complete.
    pub fn mark_failed(&mut self, node: NodeId) {
        self.nodes[node.index()].finalized = true;
    }

    fn recount_suspension(&mut self, node: NodeId) {
        let count = self
            .edges
            .iter()
            .filter(|e| e.from_node == node && !e.outbox.is_empty())
            .count() as u32;
        self.nodes[node.index()].suspended = count;
    }

    fn node_deliverable(&self, node: &NodeSlot) -> bool {
        !node.busy && node.suspended == 0 && !node.finalized
    }

    /// Non-deterministic selection: round-robin over nodes and their ports,
    /// honoring per-component exclusion, suspension, and per-receiver FIFO.
    fn next_work_any(&mut self) -> Option<(EdgeId, usize)> {
        let n = self.nodes.len();
        if n == 0 {
            return None;
        }
        for step in 0..n {
            let node_idx = (self.rr + step) % n;
            let node = &self.nodes[node_idx];
            if !self.node_deliverable(node) {
                continue;
            }
            let ports = node.receivers.len();
            for pstep in 0..ports {
                let port = (node.rr + pstep) % ports;
                if let Some(edge) = node.receivers[port] {
                    if !self.edges[edge.index()].queue.is_empty() {
                        self.rr = (node_idx + 1) % n;
                        self.nodes[node_idx].rr = (port + 1) % ports;
                        return Some((edge, port));
                    }
                }
            }
        }
        None
    }

    /// Deterministic selection: the globally minimal ready queue-front by
    /// (originating, stream id, sequence). Fronts are per-edge minima because
    /// every edge carries one monotone stream.
    fn next_work_min(&self) -> Option<(EdgeId, usize, DeliveryKey)> {
        let mut best: Option<(EdgeId, usize, DeliveryKey)> = None;
        for (idx, slot) in self.edges.iter().enumerate() {
            if !self.node_deliverable(&self.nodes[slot.to_node.index()]) {
                continue;
            }
            if let Some(key) = slot.front_key() {
                let candidate = (EdgeId(idx as u32), slot.to_port, key);
                best = match best {
                    None => Some(candidate),
                    Some(cur) if key < cur.2 => Some(candidate),
                    Some(cur) => Some(cur),
                };
            }
        }
        best
    }

    /// The key of the next deterministic delivery, if any is ready.
    pub fn peek_min_key(&self) -> Option<DeliveryKey> {
        self.next_work_min().map(|(_, _, key)| key)
    }

    /// Discards items queued for components that can no longer run (failed or
    /// already finalized), so drain can reach quiescence. Messages count as
    /// dropped.
    pub fn purge_unreachable(&mut self) -> bool {
        let mut purged = false;
        let mut resuspend: Vec<NodeId> = Vec::new();
        for idx in 0..self.edges.len() {
            let to = self.edges[idx].to_node;
            if !self.nodes[to.index()].finalized {
                continue;
            }
            let slot = &mut self.edges[idx];
            while let Some(item) = slot.queue.pop_front() {
                purged = true;
                self.pending_items -= 1;
                if matches!(item, QItem::Msg(..)) {
                    slot.msg_len -= 1;
                    slot.dropped += 1;
                }
            }
            if !slot.outbox.is_empty() {
                purged = true;
                for _ in slot.outbox.drain(..) {
                    slot.posted += 1;
                    slot.dropped += 1;
                }
                resuspend.push(slot.from_node);
            }
            slot.close_pending = None;
        }
        for node in resuspend {
            self.recount_suspension(node);
        }
        purged
    }

    /// Pops the next unit of work and marks its component busy.
    ///
    /// `now` is the pipeline clock; message latency is recorded at dequeue.
    pub fn next_work(&mut self, now: Timestamp) -> Option<WorkItem> {
        self.purge_unreachable();
        let (edge, port) = if self.deterministic {
            let (edge, port, _) = self.next_work_min()?;
            (edge, port)
        } else {
            self.next_work_any()?
        };
        let slot = &mut self.edges[edge.index()];
        let item = slot.queue.pop_front().expect("edge had a front item");
        self.pending_items -= 1;
        let node = slot.to_node;
        let work = match item {
            QItem::Msg(env, payload) => {
                slot.msg_len -= 1;
                slot.delivered += 1;
                let latency = now.saturating_span_since(env.originating);
                slot.lat_last = latency;
                slot.lat_sum += latency.as_ns() as i128;
                slot.lat_count += 1;
                if latency > slot.lat_max {
                    slot.lat_max = latency;
                }
                slot.over_threshold = latency > self.latency_threshold;
                let deep = slot.deep_copy;
                self.refill_from_outbox(edge);
                WorkItem {
                    node,
                    edge,
                    port,
                    kind: WorkKind::Deliver(env, payload, deep),
                }
            }
            QItem::Close(_) => WorkItem {
                node,
                edge,
                port,
                kind: WorkKind::PortClosed,
            },
        };
        self.nodes[work.node.index()].busy = true;
        self.in_flight += 1;
        Some(work)
    }

    /// Moves deferred posts into the queue as space frees and lifts the
    /// producer's suspension once the outbox drains.
    fn refill_from_outbox(&mut self, edge: EdgeId) {
        loop {
            let slot = &mut self.edges[edge.index()];
            if slot.outbox.is_empty() {
                break;
            }
            let has_space = match slot.policy {
                DeliveryPolicy::Throttle(n) => slot.msg_len < n,
                _ => true,
            };
            if !has_space {
                return;
            }
            let (env, payload) = slot.outbox.pop_front().unwrap();
            slot.push_msg(env, payload);
            self.pending_items += 1;
        }
        let slot = &self.edges[edge.index()];
        let from = slot.from_node;
        self.recount_suspension(from);
        self.flush_close_marker(edge);
    }

    /// Marks a callback complete, releasing the component for further work.
    pub fn finish(&mut self, node: NodeId) {
        self.nodes[node.index()].busy = false;
        self.in_flight -= 1;
    }

    /// A delivered message whose handler failed is re-accounted as dropped.
    pub fn count_delivery_failed(&mut self, edge: EdgeId) {
        let slot = &mut self.edges[edge.index()];
        slot.delivered -= 1;
        slot.dropped += 1;
    }

    pub fn port_closed(&mut self, node: NodeId) -> usize {
        let slot = &mut self.nodes[node.index()];
        slot.open_receivers -= 1;
        slot.open_receivers
    }

    /// No queued items and no callbacks running anywhere.
    pub fn quiescent(&self) -> bool {
        self.pending_items == 0 && self.in_flight == 0 && self.no_outbox_backlog()
    }

    fn no_outbox_backlog(&self) -> bool {
        self.edges.iter().all(|e| e.outbox.is_empty())
    }

    pub fn stats(&self, edge: EdgeId) -> QueueStats {
        self.edges[edge.index()].stats()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StampError {
    Closed,
    Violation(crate::time::EnvelopeViolation),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::Envelope;

    fn ts(ns: i64) -> Timestamp {
        Timestamp::from_ns(ns)
    }

    fn payload(v: i64) -> Arc<dyn AnyMessage> {
        Arc::new(v)
    }

    /// One producer node (0) feeding one consumer node (1) through a single edge.
    fn pair(policy: DeliveryPolicy) -> (Engine, EdgeId) {
        let mut e = Engine::new(false, TimeSpan::from_millis(500));
        let producer = e.add_node(0);
        let consumer = e.add_node(1);
        let stream = e.add_emitter(producer, true);
        let edge = e.add_edge(stream, consumer, 0, policy, true);
        (e, edge)
    }

    fn post_seq(e: &mut Engine, edge: EdgeId, count: u64) -> Vec<PostOutcome> {
        (0..count)
            .map(|i| {
                let env = e.stamp(0, ts(10 + i as i64), ts(10 + i as i64)).unwrap();
                e.post(edge, env, payload(i as i64), ts(10 + i as i64))
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn unlimited_buffers_everything() {
        let (mut e, edge) = pair(DeliveryPolicy::Unlimited);
        post_seq(&mut e, edge, 1000);
        let s = e.stats(edge);
        assert_eq!(s.queue_len, 1000);
        assert_eq!(s.dropped, 0);
        assert_eq!(s.posted, 1000);
    }

    #[test]
    fn latest_message_keeps_only_newest() {
        let (mut e, edge) = pair(DeliveryPolicy::LatestMessage);
        post_seq(&mut e, edge, 10);
        let s = e.stats(edge);
        assert_eq!(s.queue_len, 1);
        assert_eq!(s.dropped, 9);
        // the consumer sees exactly the last message
        let item = e.next_work(ts(100)).expect("one item ready");
        match item.kind {
            WorkKind::Deliver(env, _, _) => assert_eq!(env.sequence, 9),
            _ => panic!("expected a delivery"),
        }
        e.finish(item.node);
        assert!(e.next_work(ts(100)).is_none());
        let s = e.stats(edge);
        assert_eq!(s.posted, 10);
        assert_eq!(s.delivered + s.dropped, 10);
    }

    #[test]
    fn queue_size_evicts_oldest() {
        let (mut e, edge) = pair(DeliveryPolicy::QueueSize(3));
        post_seq(&mut e, edge, 5);
        let s = e.stats(edge);
        assert_eq!(s.queue_len, 3);
        assert_eq!(s.dropped, 2);
        assert!(s.queue_max <= 3);
        // survivors are the freshest three, in order
        let mut seqs = Vec::new();
        while let Some(item) = e.next_work(ts(100)) {
            if let WorkKind::Deliver(env, _, _) = item.kind {
                seqs.push(env.sequence);
            }
            e.finish(item.node);
        }
        assert_eq!(seqs, vec![2, 3, 4]);
    }

    #[test]
    fn throttle_blocks_when_full() {
        let (mut e, edge) = pair(DeliveryPolicy::Throttle(1));
        let env0 = e.stamp(0, ts(10), ts(10)).unwrap();
        assert_eq!(
            e.post(edge, env0, payload(0), ts(10)).unwrap(),
            PostOutcome::Accepted
        );
        let env1 = e.stamp(0, ts(11), ts(11)).unwrap();
        assert_eq!(
            e.post(edge, env1, payload(1), ts(11)).unwrap(),
            PostOutcome::Blocked
        );
        assert!(!e.throttle_has_space(edge));
        // consuming frees space
        let item = e.next_work(ts(11)).unwrap();
        e.finish(item.node);
        assert!(e.throttle_has_space(edge));
        assert_eq!(
            e.post(edge, env1, payload(1), ts(11)).unwrap(),
            PostOutcome::Accepted
        );
        let s = e.stats(edge);
        assert_eq!(s.dropped, 0);
    }

    #[test]
    fn latency_constrained_drops_stale_messages() {
        let max = TimeSpan::from_millis(500);
        let (mut e, edge) = pair(DeliveryPolicy::LatencyConstrained(max));
        let env = e.stamp(0, ts(0), ts(0)).unwrap();
        // age 600ms > 500ms: dropped
        let now = ts(600 * 1_000_000);
        assert_eq!(
            e.post(edge, env, payload(0), now).unwrap(),
            PostOutcome::Dropped
        );
        let env = e.stamp(0, ts(200 * 1_000_000), ts(200 * 1_000_000)).unwrap();
        // age exactly 500ms: admitted
        let now = ts(700 * 1_000_000);
        assert_eq!(
            e.post(edge, env, payload(1), now).unwrap(),
            PostOutcome::Accepted
        );
        let s = e.stats(edge);
        assert_eq!((s.posted, s.dropped, s.queue_len), (2, 1, 1));
    }

    #[test]
    fn post_after_close_is_an_error() {
        let (mut e, edge) = pair(DeliveryPolicy::Unlimited);
        let env = e.stamp(0, ts(10), ts(10)).unwrap();
        e.close_emitter(0);
        assert_eq!(e.post(edge, env, payload(0), ts(10)), Err(ClosedEdge));
    }

    #[test]
    fn per_receiver_fifo_order() {
        let (mut e, edge) = pair(DeliveryPolicy::Unlimited);
        post_seq(&mut e, edge, 2);
        let first = e.next_work(ts(50)).unwrap();
        match first.kind {
            WorkKind::Deliver(env, _, _) => assert_eq!(env.sequence, 0),
            _ => panic!(),
        }
        assert_eq!(first.edge, edge);
        e.finish(first.node);
        let second = e.next_work(ts(50)).unwrap();
        match second.kind {
            WorkKind::Deliver(env, _, _) => assert_eq!(env.sequence, 1),
            _ => panic!(),
        }
    }

    #[test]
    fn busy_component_is_not_scheduled() {
        let (mut e, edge) = pair(DeliveryPolicy::Unlimited);
        post_seq(&mut e, edge, 2);
        let first = e.next_work(ts(50)).unwrap();
        // component mid-callback: nothing else may be handed out for it
        assert!(e.next_work(ts(50)).is_none());
        e.finish(first.node);
        assert!(e.next_work(ts(50)).is_some());
        let _ = edge;
    }

    #[test]
    fn deterministic_mode_breaks_ties_by_stream_id() {
        let mut e = Engine::new(true, TimeSpan::from_millis(500));
        let p1 = e.add_node(0);
        let p2 = e.add_node(0);
        let consumer1 = e.add_node(1);
        let consumer2 = e.add_node(1);
        let s1 = e.add_emitter(p1, true); // stream 0
        let s2 = e.add_emitter(p2, true); // stream 1
        let e1 = e.add_edge(s1, consumer1, 0, DeliveryPolicy::Unlimited, true);
        let e2 = e.add_edge(s2, consumer2, 0, DeliveryPolicy::Unlimited, true);

        // same originating time on both streams; higher stream id posted first
        let env2 = e.stamp(s2, ts(10), ts(10)).unwrap();
        e.post(e2, env2, payload(2), ts(10)).unwrap();
        let env1 = e.stamp(s1, ts(10), ts(10)).unwrap();
        e.post(e1, env1, payload(1), ts(10)).unwrap();

        let first = e.next_work(ts(10)).unwrap();
        match first.kind {
            WorkKind::Deliver(env, _, _) => assert_eq!(env.stream_id, s1),
            _ => panic!(),
        }
    }

    #[test]
    fn conservation_holds_across_policies() {
        for policy in [
            DeliveryPolicy::Unlimited,
            DeliveryPolicy::LatestMessage,
            DeliveryPolicy::QueueSize(4),
            DeliveryPolicy::LatencyConstrained(TimeSpan::from_ns(3)),
        ] {
            let (mut e, edge) = pair(policy);
            for i in 0..50u64 {
                let t = ts(10 + i as i64);
                let env = e.stamp(0, t, t).unwrap();
                let _ = e.post(edge, env, payload(i as i64), ts(10 + i as i64 + (i % 7) as i64));
                if i % 3 == 0 {
                    if let Some(item) = e.next_work(ts(100)) {
                        e.finish(item.node);
                    }
                }
            }
            let s = e.stats(edge);
            assert_eq!(
                s.posted,
                s.delivered + s.dropped + s.queue_len,
                "conservation violated for {policy:?}"
            );
        }
    }
}
