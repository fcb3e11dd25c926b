//! The executing side of a pipeline: worker pool, callback contexts, source
//! threads, the deterministic single-lane loop, and drain/finalization.
//!
//! Lock order is component → engine; the engine lock is never held across a
//! component callback.

use crate::diag::{self, EdgeMetrics, PipelineGraphSnapshot};
use crate::graph::{GraphError, Pipeline, PipelineState, Topology};
use crate::ids::{EdgeId, NodeId};
use crate::message::{AnyMessage, Payload};
use crate::sched::engine::{Engine, StampError, WorkItem, WorkKind};
use crate::sched::PostOutcome;
use crate::time::{Envelope, EnvelopeViolation, ReplayDescriptor, Speed, TimeSpan, Timestamp};
use crate::Component;
use std::marker::PhantomData;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicI64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

// ---------------------------------------------------------------------------
// Pipeline clock

/// Time source for a running pipeline.
///
/// Deterministic runs use the replay cursor — the maximum originating time
/// posted so far — so every timestamp the run produces is a function of
/// stream contents alone. Paced replay maps wall time linearly; live runs
/// read the wall clock.
pub(crate) enum PipelineClock {
    Real,
    Paced {
        virtual_origin: Timestamp,
        wall_origin: Timestamp,
        speed: Speed,
    },
    Cursor(AtomicI64),
}

impl PipelineClock {
    pub fn now(&self) -> Timestamp {
        match self {
            PipelineClock::Real => Timestamp::wall_now(),
            PipelineClock::Paced {
                virtual_origin,
                wall_origin,
                speed,
            } => {
                let wall = Timestamp::wall_now().max(*wall_origin);
                let clock = crate::time::Clock::Virtual {
                    virtual_origin: *virtual_origin,
                    wall_origin: *wall_origin,
                    speed: *speed,
                };
                clock.virtual_now(wall).unwrap_or(*virtual_origin)
            }
            PipelineClock::Cursor(ns) => Timestamp::from_ns(ns.load(Ordering::Acquire)),
        }
    }

    fn advance(&self, t: Timestamp) {
        if let PipelineClock::Cursor(ns) = self {
            ns.fetch_max(t.as_ns(), Ordering::AcqRel);
        }
    }

    /// Wall time still to wait before the clock reaches `target`; `None`
    /// once reached (or immediately for cursor clocks, which do not pace).
    fn wall_delay_until(&self, target: Timestamp) -> Option<Duration> {
        let now = self.now();
        if now >= target {
            return None;
        }
        let remaining = target.saturating_span_since(now);
        let wall = match self {
            PipelineClock::Real => remaining,
            PipelineClock::Paced { speed, .. } => {
                speed.wall_for(remaining).unwrap_or(TimeSpan::ZERO)
            }
            PipelineClock::Cursor(_) => return None,
        };
        if wall <= TimeSpan::ZERO {
            None
        } else {
            Some(wall.to_std())
        }
    }
}

/// Wall pacing reference for deterministic paced replay: the clock stays a
/// cursor (for reproducible timestamps) while emission is slowed to match the
/// requested speed.
struct Pacing {
    virtual_origin: Timestamp,
    wall_origin: Instant,
    speed: Speed,
}

impl Pacing {
    fn pace_to(&self, target: Timestamp) {
        if self.speed.is_max() || target <= self.virtual_origin {
            return;
        }
        let virtual_span = target.saturating_span_since(self.virtual_origin);
        let wall_span = match self.speed.wall_for(virtual_span) {
            Ok(s) => s.to_std(),
            Err(_) => return,
        };
        let deadline = self.wall_origin + wall_span;
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        }
    }
}

// ---------------------------------------------------------------------------
// Shared runtime state

struct NodeMeta {
    name: String,
    is_source: bool,
    drain_wave: u8,
    streams: Vec<u32>,
    connected_receivers: usize,
}

pub(crate) struct Shared {
    engine: Mutex<Engine>,
    work_cv: Condvar,
    space_cv: Condvar,
    idle_cv: Condvar,
    clock: PipelineClock,
    topology: Arc<Topology>,
    components: Vec<Mutex<Box<dyn Component>>>,
    meta: Vec<NodeMeta>,
    stop_flags: Vec<AtomicBool>,
    stop_all: AtomicBool,
    shutdown: AtomicBool,
    /// Sources that have not yet signaled completion.
    sources_pending: Mutex<Vec<bool>>,
    sources_cv: Condvar,
    state: Mutex<PipelineState>,
    errors: Mutex<Vec<PipelineError>>,
    report: Mutex<Option<CompletionReport>>,
    deterministic: bool,
    started_at: Instant,
}

impl Shared {
    fn engine(&self) -> MutexGuard<'_, Engine> {
        self.engine.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn component(&self, node: NodeId) -> MutexGuard<'_, Box<dyn Component>> {
        self.components[node.index()]
            .lock()
            .unwrap_or_else(|p| p.into_inner())
    }

    fn set_state(&self, s: PipelineState) {
        *self.state.lock().unwrap_or_else(|p| p.into_inner()) = s;
        self.idle_cv.notify_all();
    }

    fn source_completed(&self, node: NodeId) {
        let mut pending = self
            .sources_pending
            .lock()
            .unwrap_or_else(|p| p.into_inner());
        pending[node.index()] = false;
        drop(pending);
        self.sources_cv.notify_all();
    }

    fn record_error(&self, err: PipelineError) {
        self.errors
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(err);
    }
}

/// A failure reported by a component or handler during the run.
#[derive(Debug, Clone)]
pub struct PipelineError {
    pub node: String,
    pub port: usize,
    pub sequence: u64,
    pub detail: String,
}

/// Per-edge totals after drain: `posted = delivered + dropped`.
#[derive(Debug, Clone)]
pub struct EdgeReport {
    pub edge: EdgeId,
    pub from: String,
    pub output: String,
    pub to: String,
    pub input: String,
    pub posted: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub queue_max: u64,
}

/// Result of drain_and_finalize: per-edge accounting plus surfaced errors.
#[derive(Debug, Clone)]
pub struct CompletionReport {
    pub edges: Vec<EdgeReport>,
    pub errors: Vec<PipelineError>,
    pub elapsed: Duration,
}

impl CompletionReport {
    /// The edge from `from`'s output into `to`, when exactly one exists.
    pub fn edge_between(&self, from: &str, to: &str) -> Option<&EdgeReport> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    pub fn edges_into<'a>(&'a self, to: &'a str) -> impl Iterator<Item = &'a EdgeReport> + 'a {
        self.edges.iter().filter(move |e| e.to == to)
    }

    pub fn total_dropped(&self) -> u64 {
        self.edges.iter().map(|e| e.dropped).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DrainError {
    #[error("drain did not reach quiescence within the configured timeout")]
    Timeout,
}

// ---------------------------------------------------------------------------
// Callback context

/// Handle components use inside callbacks to post, close outputs, read the
/// pipeline clock, and signal source completion.
pub struct Ctx<'a> {
    shared: &'a Arc<Shared>,
    node: NodeId,
}

impl<'a> Ctx<'a> {
    fn new(shared: &'a Arc<Shared>, node: NodeId) -> Self {
        Ctx { shared, node }
    }

    pub fn now(&self) -> Timestamp {
        self.shared.clock.now()
    }

    pub fn deterministic(&self) -> bool {
        self.shared.deterministic
    }

    pub fn stop_requested(&self) -> bool {
        self.shared.stop_flags[self.node.index()].load(Ordering::Acquire)
            || self.shared.stop_all.load(Ordering::Acquire)
    }

    /// Stream id assigned to one of this component's output ports.
    pub fn stream_id(&self, port: usize) -> u32 {
        self.shared.meta[self.node.index()].streams[port]
    }

    pub fn output_count(&self) -> usize {
        self.shared.meta[self.node.index()].streams.len()
    }

    /// Posts a message on an output port.
    ///
    /// # Panics
    /// Panics when the post violates the envelope contract (non-monotone
    /// originating time) — that is a component bug. Posting on an
    /// already-closed output during drain is silently ignored.
    pub fn post<T: Clone + Send + Sync + 'static>(
        &mut self,
        port: usize,
        originating: Timestamp,
        value: T,
    ) {
        match self.try_post(port, originating, value) {
            Ok(()) | Err(PostError::Closed) | Err(PostError::Stopped) => {}
            Err(PostError::Violation(v)) => {
                panic!(
                    "component {:?} violated the envelope contract on port {}: {}",
                    self.shared.meta[self.node.index()].name,
                    port,
                    v
                )
            }
        }
    }

    /// Posting variant that surfaces rejections instead of panicking.
    pub fn try_post<T: Clone + Send + Sync + 'static>(
        &mut self,
        port: usize,
        originating: Timestamp,
        value: T,
    ) -> Result<(), PostError> {
        let stream = self.stream_id(port);
        let arc: Arc<dyn AnyMessage> = Arc::new(value);
        post_from_callback(self.shared, stream, originating, arc)
    }

    /// Closes an output port; downstream receivers observe end-of-stream
    /// after all queued messages.
    pub fn close_output(&mut self, port: usize) {
        let stream = self.stream_id(port);
        let mut engine = self.shared.engine();
        engine.close_emitter(stream);
        drop(engine);
        self.shared.work_cv.notify_all();
    }

    /// Signals that this source has produced everything it will produce.
    pub fn complete(&mut self) {
        self.shared.source_completed(self.node);
    }

    /// Re-accounts the message most recently delivered on `port` as dropped
    /// rather than delivered. Operators that discard inputs by design (an
    /// unmatched join primary) use this so the drop surfaces in edge metrics.
    pub fn mark_input_dropped(&mut self, port: usize) {
        let mut engine = self.shared.engine();
        if let Some(edge) = engine.nodes[self.node.index()].receivers[port] {
            engine.count_delivery_failed(edge);
        }
    }

    /// Records a handler failure for a delivered message; the message is
    /// re-accounted as dropped on its edge.
    pub fn report_error(&mut self, port: usize, env: &Envelope, detail: String) {
        let mut engine = self.shared.engine();
        if let Some(edge) = engine.nodes[self.node.index()].receivers[port] {
            engine.count_delivery_failed(edge);
        }
        drop(engine);
        self.shared.record_error(PipelineError {
            node: self.shared.meta[self.node.index()].name.clone(),
            port,
            sequence: env.sequence,
            detail,
        });
    }

    /// A cloneable posting handle for a source's producer thread. Posts block
    /// under throttle back-pressure (that is the point of the policy).
    pub fn thread_output<T: Clone + Send + Sync + 'static>(&self, port: usize) -> ThreadOutput<T> {
        ThreadOutput {
            shared: Arc::clone(self.shared),
            stream: self.stream_id(port),
            _marker: PhantomData,
        }
    }

    /// Completion/stop signaling handle for a source's producer thread.
    pub fn completion_handle(&self) -> CompletionHandle {
        CompletionHandle {
            shared: Arc::clone(self.shared),
            node: self.node,
        }
    }

    /// Consistent point-in-time view of the topology and per-edge metrics.
    pub fn metrics_snapshot(&self) -> (PipelineGraphSnapshot, Vec<EdgeMetrics>) {
        snapshot_of(self.shared)
    }

    /// A cloneable handle for sampling metrics from a producer thread.
    pub fn snapshot_handle(&self) -> SnapshotHandle {
        SnapshotHandle {
            shared: Arc::clone(self.shared),
        }
    }

    /// Pipeline clock handle for pacing producer threads.
    pub fn clock_handle(&self) -> ClockHandle {
        ClockHandle {
            shared: Arc::clone(self.shared),
        }
    }
}

/// Thread-safe view of the pipeline clock.
pub struct ClockHandle {
    shared: Arc<Shared>,
}

impl Clone for ClockHandle {
    fn clone(&self) -> Self {
        ClockHandle {
            shared: Arc::clone(&self.shared),
        }
    }
}

impl ClockHandle {
    pub fn now(&self) -> Timestamp {
        self.shared.clock.now()
    }

    /// Sleeps until the pipeline clock reaches `target`. Returns immediately
    /// on cursor clocks (unpaced replay) and when a stop is requested.
    pub fn wait_until(&self, target: Timestamp) {
        loop {
            if self.shared.stop_all.load(Ordering::Acquire) {
                return;
            }
            match self.shared.clock.wall_delay_until(target) {
                None => return,
                Some(delay) => std::thread::sleep(delay.min(Duration::from_millis(50))),
            }
        }
    }
}

/// Thread-safe metrics sampling handle.
pub struct SnapshotHandle {
    shared: Arc<Shared>,
}

impl Clone for SnapshotHandle {
    fn clone(&self) -> Self {
        SnapshotHandle {
            shared: Arc::clone(&self.shared),
        }
    }
}

impl SnapshotHandle {
    pub fn snapshot(&self) -> (PipelineGraphSnapshot, Vec<EdgeMetrics>) {
        snapshot_of(&self.shared)
    }

    pub fn now(&self) -> Timestamp {
        self.shared.clock.now()
    }
}

fn snapshot_of(shared: &Arc<Shared>) -> (PipelineGraphSnapshot, Vec<EdgeMetrics>) {
    let engine = shared.engine();
    let metrics = (0..engine.edges.len())
        .map(|i| {
            let id = EdgeId(i as u32);
            EdgeMetrics::from_stats(id, &engine.stats(id))
        })
        .collect();
    drop(engine);
    (diag::build_graph_snapshot(&shared.topology), metrics)
}

/// Why a post was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PostError {
    #[error("output is closed")]
    Closed,
    #[error("pipeline stopped while waiting for queue space")]
    Stopped,
    #[error("envelope contract violation: {0}")]
    Violation(EnvelopeViolation),
}

/// Callback-context post: never blocks. A full throttled edge defers the
/// message to the edge outbox and suspends this producer until space frees.
fn post_from_callback(
    shared: &Arc<Shared>,
    stream: u32,
    originating: Timestamp,
    payload: Arc<dyn AnyMessage>,
) -> Result<(), PostError> {
    shared.clock.advance(originating);
    let mut engine = shared.engine();
    let env = match engine.stamp(stream, originating, shared.clock.now()) {
        Ok(env) => env,
        Err(StampError::Closed) => return Err(PostError::Closed),
        Err(StampError::Violation(v)) => return Err(PostError::Violation(v)),
    };
    let now = shared.clock.now();
    let mut accepted = false;
    for edge in engine.emitter_edges(stream) {
        match engine.post(edge, env, Arc::clone(&payload), now) {
            Ok(PostOutcome::Accepted) => accepted = true,
            Ok(PostOutcome::Dropped) => {}
            Ok(PostOutcome::Blocked) => {
                engine.defer_to_outbox(edge, env, Arc::clone(&payload));
            }
            Err(_) => {}
        }
    }
    drop(engine);
    if accepted {
        shared.work_cv.notify_all();
    }
    Ok(())
}

/// Blocking post handle owned by source threads.
pub struct ThreadOutput<T> {
    shared: Arc<Shared>,
    stream: u32,
    _marker: PhantomData<fn(T)>,
}

impl<T> Clone for ThreadOutput<T> {
    fn clone(&self) -> Self {
        ThreadOutput {
            shared: Arc::clone(&self.shared),
            stream: self.stream,
            _marker: PhantomData,
        }
    }
}

impl<T: Clone + Send + Sync + 'static> ThreadOutput<T> {
    /// Posts one message, blocking while any throttled subscriber edge is
    /// full. Returns `Stopped` when drain begins mid-wait.
    pub fn post(&self, originating: Timestamp, value: T) -> Result<(), PostError> {
        let payload: Arc<dyn AnyMessage> = Arc::new(value);
        self.shared.clock.advance(originating);
        let mut engine = self.shared.engine();
        let env = match engine.stamp(self.stream, originating, self.shared.clock.now()) {
            Ok(env) => env,
            Err(StampError::Closed) => return Err(PostError::Closed),
            Err(StampError::Violation(v)) => return Err(PostError::Violation(v)),
        };
        let edges = engine.emitter_edges(self.stream);
        let mut accepted = false;
        for edge in edges {
            loop {
                let now = self.shared.clock.now();
                match engine.post(edge, env, Arc::clone(&payload), now) {
                    Ok(PostOutcome::Accepted) => {
                        accepted = true;
                        break;
                    }
                    Ok(PostOutcome::Dropped) | Err(_) => break,
                    Ok(PostOutcome::Blocked) => {
                        // Back-pressure: this producer does no other work
                        // until the consumer frees space.
                        self.shared.work_cv.notify_all();
                        loop {
                            if engine.stopping {
                                return Err(PostError::Stopped);
                            }
                            if engine.throttle_has_space(edge) {
                                break;
                            }
                            engine = self
                                .shared
                                .space_cv
                                .wait(engine)
                                .unwrap_or_else(|p| p.into_inner());
                        }
                    }
                }
            }
        }
        drop(engine);
        if accepted {
            self.shared.work_cv.notify_all();
        }
        Ok(())
    }

    pub fn close(&self) {
        let mut engine = self.shared.engine();
        engine.close_emitter(self.stream);
        drop(engine);
        self.shared.work_cv.notify_all();
    }
}

/// Completion signaling for source threads.
pub struct CompletionHandle {
    shared: Arc<Shared>,
    node: NodeId,
}

impl CompletionHandle {
    pub fn complete(&self) {
        self.shared.source_completed(self.node);
    }

    pub fn stop_requested(&self) -> bool {
        self.shared.stop_flags[self.node.index()].load(Ordering::Acquire)
            || self.shared.stop_all.load(Ordering::Acquire)
    }
}

// ---------------------------------------------------------------------------
// Startup

pub(crate) fn start(
    pipeline: &mut Pipeline,
    replay: Option<ReplayDescriptor>,
) -> Result<RunHandle, GraphError> {
    let config = pipeline.config().clone();
    let deterministic = config.deterministic || replay.map_or(false, |r| r.deterministic);

    let topology = Arc::new(pipeline.topology());
    let mut engine = Engine::new(deterministic, config.latency_threshold);

    let mut components = Vec::new();
    let mut meta = Vec::new();
    for def in &mut pipeline.nodes {
        let node = engine.add_node(def.inputs.len());
        let mut streams = Vec::new();
        for (_, stream) in &def.outputs {
            let assigned = engine.add_emitter(node, !def.unordered_outputs);
            debug_assert_eq!(assigned, *stream, "stream ids must be dense in node order");
            streams.push(*stream);
        }
        components.push(Mutex::new(
            def.component.take().expect("component already taken"),
        ));
        meta.push(NodeMeta {
            name: def.name.clone(),
            is_source: def.is_source,
            drain_wave: def.drain_wave,
            streams,
            connected_receivers: 0,
        });
    }
    for edge in &pipeline.edges {
        engine.add_edge(
            edge.from_stream,
            edge.to_node,
            edge.to_port,
            edge.policy,
            edge.deep_copy,
        );
        meta[edge.to_node.index()].connected_receivers += 1;
    }

    // Anchor for virtual clocks: the replay window start, or the earliest
    // emission any source knows about.
    let earliest = components
        .iter()
        .map(|c| c.lock().unwrap().earliest_emission())
        .flatten()
        .min();
    let anchor = match replay {
        Some(rd) if rd.start != Timestamp::MIN => Some(rd.start),
        _ => earliest,
    };

    let (clock, pacing) = match (deterministic, replay) {
        (true, rd) => {
            let cursor = anchor.unwrap_or(Timestamp::MIN);
            let pacing = rd.and_then(|rd| match rd.speed {
                Speed::Max => None,
                speed => Some(Pacing {
                    virtual_origin: anchor.unwrap_or_else(Timestamp::wall_now),
                    wall_origin: Instant::now(),
                    speed,
                }),
            });
            (PipelineClock::Cursor(AtomicI64::new(cursor.as_ns())), pacing)
        }
        (false, None) => (PipelineClock::Real, None),
        (false, Some(rd)) => match rd.speed {
            Speed::Max => (
                PipelineClock::Cursor(AtomicI64::new(anchor.unwrap_or(Timestamp::MIN).as_ns())),
                None,
            ),
            speed => (
                PipelineClock::Paced {
                    virtual_origin: anchor.unwrap_or_else(Timestamp::wall_now),
                    wall_origin: Timestamp::wall_now(),
                    speed,
                },
                None,
            ),
        },
    };

    let node_count = components.len();
    let sources_pending: Vec<bool> = meta.iter().map(|m| m.is_source).collect();
    let shared = Arc::new(Shared {
        engine: Mutex::new(engine),
        work_cv: Condvar::new(),
        space_cv: Condvar::new(),
        idle_cv: Condvar::new(),
        clock,
        topology,
        components,
        meta,
        stop_flags: (0..node_count).map(|_| AtomicBool::new(false)).collect(),
        stop_all: AtomicBool::new(false),
        shutdown: AtomicBool::new(false),
        sources_pending: Mutex::new(sources_pending),
        sources_cv: Condvar::new(),
        state: Mutex::new(PipelineState::Running),
        errors: Mutex::new(Vec::new()),
        report: Mutex::new(None),
        deterministic,
        started_at: Instant::now(),
    });

    if deterministic {
        // Every source must be drivable through the pull interface.
        for node in 0..node_count {
            if shared.meta[node].is_source {
                let mut comp = shared.component(NodeId(node as u32));
                if comp.as_pull_source().is_none() {
                    return Err(GraphError::ValidationFailed(format!(
                        "source {:?} cannot run deterministically (no pull interface)",
                        shared.meta[node].name
                    )));
                }
            }
        }
    }

    let mut workers = Vec::new();
    if !deterministic {
        for worker_idx in 0..config.worker_count.max(1) {
            let shared = Arc::clone(&shared);
            workers.push(
                std::thread::Builder::new()
                    .name(format!("chronoflow-worker-{worker_idx}"))
                    .spawn(move || worker_loop(&shared))
                    .expect("spawn worker"),
            );
        }
    }

    // Startup callbacks run sequentially; live sources spawn their threads here.
    for node in 0..node_count {
        let node = NodeId(node as u32);
        let mut comp = shared.component(node);
        let mut ctx = Ctx::new(&shared, node);
        let result = catch_unwind(AssertUnwindSafe(|| comp.on_start(&mut ctx)));
        if let Err(panic) = result {
            shared.record_error(PipelineError {
                node: shared.meta[node.index()].name.clone(),
                port: 0,
                sequence: 0,
                detail: format!("on_start panicked: {}", panic_text(&panic)),
            });
            let mut engine = shared.engine();
            engine.mark_failed(node);
            let streams = shared.meta[node.index()].streams.clone();
            for stream in streams {
                engine.close_emitter(stream);
            }
            drop(engine);
            shared.source_completed(node);
        }
    }

    let det_thread = if deterministic {
        let shared = Arc::clone(&shared);
        let finalize_timeout = config.finalize_timeout;
        Some(
            std::thread::Builder::new()
                .name("chronoflow-det".into())
                .spawn(move || deterministic_loop(&shared, pacing, finalize_timeout))
                .expect("spawn deterministic lane"),
        )
    } else {
        None
    };

    Ok(RunHandle {
        shared,
        workers: Mutex::new(workers),
        det_thread: Mutex::new(det_thread),
        finalize_timeout: config.finalize_timeout,
    })
}

fn panic_text(panic: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

// ---------------------------------------------------------------------------
// Worker execution

fn worker_loop(shared: &Arc<Shared>) {
    loop {
        let item = {
            let mut engine = shared.engine();
            loop {
                if shared.shutdown.load(Ordering::Acquire) {
                    return;
                }
                if let Some(item) = engine.next_work(shared.clock.now()) {
                    break item;
                }
                engine = shared
                    .work_cv
                    .wait(engine)
                    .unwrap_or_else(|p| p.into_inner());
            }
        };
        // A dequeue may have freed throttle space or unsuspended a producer.
        shared.space_cv.notify_all();
        execute_item(shared, item);
    }
}

fn execute_item(shared: &Arc<Shared>, item: WorkItem) {
    let WorkItem {
        node,
        edge,
        port,
        kind,
    } = item;
    match kind {
        WorkKind::Deliver(env, payload_arc, deep) => {
            let payload = if deep {
                Payload::Owned((*payload_arc).clone_boxed())
            } else {
                Payload::Shared(payload_arc)
            };
            let mut comp = shared.component(node);
            let mut ctx = Ctx::new(shared, node);
            let result = catch_unwind(AssertUnwindSafe(|| {
                comp.on_message(port, &env, payload, &mut ctx)
            }));
            drop(comp);
            if let Err(panic) = result {
                let mut engine = shared.engine();
                engine.count_delivery_failed(edge);
                engine.mark_failed(node);
                let streams = shared.meta[node.index()].streams.clone();
                for stream in streams {
                    engine.close_emitter(stream);
                }
                drop(engine);
                shared.record_error(PipelineError {
                    node: shared.meta[node.index()].name.clone(),
                    port,
                    sequence: env.sequence,
                    detail: format!("on_message panicked: {}", panic_text(&panic)),
                });
            }
        }
        WorkKind::PortClosed => {
            let mut comp = shared.component(node);
            let mut ctx = Ctx::new(shared, node);
            let _ = catch_unwind(AssertUnwindSafe(|| comp.on_closed(port, &mut ctx)));
            drop(comp);
            let remaining = {
                let mut engine = shared.engine();
                engine.port_closed(node)
            };
            if remaining == 0 {
                finalize_node(shared, node);
            }
        }
    }
    let mut engine = shared.engine();
    engine.finish(node);
    let quiescent = engine.quiescent();
    drop(engine);
    shared.work_cv.notify_all();
    shared.space_cv.notify_all();
    if quiescent {
        shared.idle_cv.notify_all();
    }
}

/// Runs `on_final` once and closes the node's emitters, propagating
/// end-of-stream downstream.
fn finalize_node(shared: &Arc<Shared>, node: NodeId) {
    {
        let engine = shared.engine();
        if engine.nodes[node.index()].finalized {
            return;
        }
    }
    let mut comp = shared.component(node);
    let mut ctx = Ctx::new(shared, node);
    let _ = catch_unwind(AssertUnwindSafe(|| comp.on_final(&mut ctx)));
    drop(comp);
    let mut engine = shared.engine();
    let streams = shared.meta[node.index()].streams.clone();
    for stream in streams {
        engine.close_emitter(stream);
    }
    engine.nodes[node.index()].finalized = true;
    drop(engine);
    shared.work_cv.notify_all();
    shared.idle_cv.notify_all();
}

fn close_emitters_of(shared: &Arc<Shared>, node: NodeId) {
    let mut engine = shared.engine();
    let streams = shared.meta[node.index()].streams.clone();
    for stream in streams {
        engine.close_emitter(stream);
    }
    drop(engine);
    shared.work_cv.notify_all();
}

// ---------------------------------------------------------------------------
// Drain and finalization

fn source_waves(shared: &Shared) -> Vec<u8> {
    let mut waves: Vec<u8> = shared
        .meta
        .iter()
        .filter(|m| m.is_source)
        .map(|m| m.drain_wave)
        .collect();
    waves.push(0);
    waves.sort_unstable();
    waves.dedup();
    waves
}

fn wave_sources(shared: &Shared, wave: u8) -> Vec<NodeId> {
    shared
        .meta
        .iter()
        .enumerate()
        .filter(|(_, m)| m.is_source && m.drain_wave == wave)
        .map(|(i, _)| NodeId(i as u32))
        .collect()
}

/// Sources and their wave-end finalization, shared by both run modes.
fn finalize_wave_nodes(shared: &Arc<Shared>, wave: u8, first_wave: bool) {
    for node in wave_sources(shared, wave) {
        if shared.meta[node.index()].connected_receivers == 0 {
            finalize_node(shared, node);
        } else {
            close_emitters_of(shared, node);
        }
    }
    if first_wave {
        // Non-source nodes with no connected inputs can never be triggered;
        // finalize them with the sources.
        for (idx, m) in shared.meta.iter().enumerate() {
            if !m.is_source && m.connected_receivers == 0 {
                finalize_node(shared, NodeId(idx as u32));
            }
        }
    }
}

/// Strongly connected components in topological order of the condensation
/// (Kosaraju, iterative).
fn condensation_topo_order(node_count: usize, edges: &[(NodeId, NodeId)]) -> Vec<Vec<NodeId>> {
    let mut fwd = vec![Vec::new(); node_count];
    let mut rev = vec![Vec::new(); node_count];
    for (from, to) in edges {
        fwd[from.index()].push(to.index());
        rev[to.index()].push(from.index());
    }

    let mut finish_order = Vec::with_capacity(node_count);
    let mut visited = vec![false; node_count];
    for start in 0..node_count {
        if visited[start] {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        visited[start] = true;
        while let Some((node, child)) = stack.pop() {
            if child < fwd[node].len() {
                stack.push((node, child + 1));
                let next = fwd[node][child];
                if !visited[next] {
                    visited[next] = true;
                    stack.push((next, 0));
                }
            } else {
                finish_order.push(node);
            }
        }
    }

    let mut assigned = vec![false; node_count];
    let mut sccs = Vec::new();
    for &start in finish_order.iter().rev() {
        if assigned[start] {
            continue;
        }
        let mut component = Vec::new();
        let mut stack = vec![start];
        assigned[start] = true;
        while let Some(node) = stack.pop() {
            component.push(NodeId(node as u32));
            for &next in &rev[node] {
                if !assigned[next] {
                    assigned[next] = true;
                    stack.push(next);
                }
            }
        }
        component.sort_unstable();
        sccs.push(component);
    }
    sccs
}

/// Force-closes the inbound edges of the first (in condensation topological
/// order) strongly connected component that still has unfinalized nodes.
/// Returns false when nothing was left to force.
fn force_next_cycle(shared: &Arc<Shared>) -> bool {
    let mut engine = shared.engine();
    let node_count = engine.nodes.len();
    let edge_endpoints: Vec<(NodeId, NodeId)> = engine
        .edges
        .iter()
        .map(|e| (e.from_node, e.to_node))
        .collect();
    let unfinalized: Vec<bool> = engine.nodes.iter().map(|n| !n.finalized).collect();
    if !unfinalized.iter().any(|u| *u) {
        return false;
    }
    let sccs = condensation_topo_order(node_count, &edge_endpoints);
    for scc in sccs {
        if !scc.iter().any(|n| unfinalized[n.index()]) {
            continue;
        }
        let targets: Vec<EdgeId> = engine
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| scc.contains(&e.to_node))
            .map(|(i, _)| EdgeId(i as u32))
            .collect();
        for edge in targets {
            engine.force_close_edge(edge);
        }
        drop(engine);
        shared.work_cv.notify_all();
        return true;
    }
    false
}

fn wait_quiescent(shared: &Arc<Shared>, deadline: Instant) -> Result<(), DrainError> {
    let mut engine = shared.engine();
    loop {
        if engine.purge_unreachable() {
            drop(engine);
            shared.work_cv.notify_all();
            engine = shared.engine();
        }
        if engine.quiescent() {
            return Ok(());
        }
        let now = Instant::now();
        if now >= deadline {
            return Err(DrainError::Timeout);
        }
        let (guard, _) = shared
            .idle_cv
            .wait_timeout(engine, (deadline - now).min(Duration::from_millis(100)))
            .unwrap_or_else(|p| p.into_inner());
        engine = guard;
    }
}

/// Waits until every source of `wave` signaled completion.
fn wait_wave_sources(shared: &Arc<Shared>, wave: u8, deadline: Option<Instant>) -> bool {
    let mut pending = shared
        .sources_pending
        .lock()
        .unwrap_or_else(|p| p.into_inner());
    loop {
        let any_pending = shared
            .meta
            .iter()
            .enumerate()
            .any(|(i, m)| m.is_source && m.drain_wave == wave && pending[i]);
        if !any_pending {
            return true;
        }
        match deadline {
            None => {
                pending = shared
                    .sources_cv
                    .wait(pending)
                    .unwrap_or_else(|p| p.into_inner());
            }
            Some(deadline) => {
                let now = Instant::now();
                if now >= deadline {
                    return false;
                }
                let (guard, _) = shared
                    .sources_cv
                    .wait_timeout(pending, (deadline - now).min(Duration::from_millis(100)))
                    .unwrap_or_else(|p| p.into_inner());
                pending = guard;
            }
        }
    }
}

/// Live-mode drain: stop sources wave by wave, flush queues, close cycles,
/// and finalize every component.
fn drain_live(shared: &Arc<Shared>, timeout: Duration) -> Result<(), DrainError> {
    shared.set_state(PipelineState::Draining);
    {
        let mut engine = shared.engine();
        engine.stopping = true;
    }
    shared.space_cv.notify_all();
    shared.work_cv.notify_all();

    let deadline = Instant::now() + timeout;
    let waves = source_waves(shared);
    for (idx, wave) in waves.iter().enumerate() {
        for node in wave_sources(shared, *wave) {
            shared.stop_flags[node.index()].store(true, Ordering::Release);
        }
        if !wait_wave_sources(shared, *wave, Some(deadline)) {
            return Err(DrainError::Timeout);
        }
        finalize_wave_nodes(shared, *wave, idx == 0);
        wait_quiescent(shared, deadline)?;
    }

    loop {
        wait_quiescent(shared, deadline)?;
        if !force_next_cycle(shared) {
            break;
        }
    }

    // Anything still unfinalized has no path to an in-band close; finalize directly.
    let stragglers: Vec<NodeId> = {
        let engine = shared.engine();
        engine
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.finalized)
            .map(|(i, _)| NodeId(i as u32))
            .collect()
    };
    for node in stragglers {
        finalize_node(shared, node);
    }
    wait_quiescent(shared, deadline)?;
    Ok(())
}

fn build_report(shared: &Arc<Shared>) -> CompletionReport {
    let engine = shared.engine();
    let edges = engine
        .edges
        .iter()
        .enumerate()
        .map(|(idx, _)| {
            let stats = engine.stats(EdgeId(idx as u32));
            let topo = &shared.topology.edges[idx];
            EdgeReport {
                edge: EdgeId(idx as u32),
                from: shared.topology.nodes[topo.from_node.index()].name.clone(),
                output: topo.from_port_name.clone(),
                to: shared.topology.nodes[topo.to_node.index()].name.clone(),
                input: topo.to_port_name.clone(),
                posted: stats.posted,
                delivered: stats.delivered,
                dropped: stats.dropped,
                queue_max: stats.queue_max,
            }
        })
        .collect();
    drop(engine);
    CompletionReport {
        edges,
        errors: shared
            .errors
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .clone(),
        elapsed: shared.started_at.elapsed(),
    }
}

// ---------------------------------------------------------------------------
// Deterministic single-lane execution

/// Runs the whole pipeline in one thread: sources are pulled in global
/// (originating, stream, sequence) order, interleaved with deliveries in the
/// same order, making the entire execution a function of stream contents.
fn deterministic_loop(shared: &Arc<Shared>, pacing: Option<Pacing>, _timeout: Duration) {
    let waves = source_waves(shared);
    let pull_nodes: Vec<NodeId> = shared
        .meta
        .iter()
        .enumerate()
        .filter(|(_, m)| m.is_source)
        .map(|(i, _)| NodeId(i as u32))
        .collect();

    for (idx, wave) in waves.iter().enumerate() {
        if idx > 0 {
            shared.set_state(PipelineState::Draining);
            for node in wave_sources(shared, *wave) {
                let mut comp = shared.component(node);
                if let Some(pull) = comp.as_pull_source() {
                    pull.on_drain();
                }
            }
        }

        loop {
            if shared.stop_all.load(Ordering::Acquire) {
                break;
            }
            let work_key = shared.engine().peek_min_key();
            let mut best: Option<(crate::graph::EmissionKey, NodeId)> = None;
            for &node in &pull_nodes {
                {
                    let engine = shared.engine();
                    let slot = &engine.nodes[node.index()];
                    if slot.finalized || slot.suspended > 0 {
                        continue;
                    }
                }
                let mut comp = shared.component(node);
                if let Some(pull) = comp.as_pull_source() {
                    if let Some(key) = pull.peek() {
                        best = match best {
                            None => Some((key, node)),
                            Some((bk, bn)) if key < bk => {
                                let _ = bn;
                                Some((key, node))
                            }
                            keep => keep,
                        };
                    }
                }
            }

            let emit = match (work_key, &best) {
                (None, None) => break,
                (None, Some(_)) => true,
                (Some(_), None) => false,
                (Some(wk), Some((sk, _))) => *sk < wk,
            };
            if emit {
                let (key, node) = best.unwrap();
                if let Some(p) = &pacing {
                    p.pace_to(key.0);
                }
                let mut comp = shared.component(node);
                let mut ctx = Ctx::new(shared, node);
                let result = catch_unwind(AssertUnwindSafe(|| {
                    comp.as_pull_source()
                        .expect("validated pull source")
                        .emit_next(&mut ctx)
                }));
                drop(comp);
                if let Err(panic) = result {
                    shared.record_error(PipelineError {
                        node: shared.meta[node.index()].name.clone(),
                        port: 0,
                        sequence: 0,
                        detail: format!("source emission panicked: {}", panic_text(&panic)),
                    });
                    shared.engine().mark_failed(node);
                }
            } else {
                let item = {
                    let mut engine = shared.engine();
                    engine.next_work(shared.clock.now())
                };
                match item {
                    Some(item) => execute_item(shared, item),
                    None => break,
                }
            }
        }

        for node in wave_sources(shared, *wave) {
            shared.source_completed(node);
        }
        finalize_wave_nodes(shared, *wave, idx == 0);
        drain_all_deterministic(shared);
    }

    loop {
        drain_all_deterministic(shared);
        if !force_next_cycle(shared) {
            break;
        }
    }
    let stragglers: Vec<NodeId> = {
        let engine = shared.engine();
        engine
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.finalized)
            .map(|(i, _)| NodeId(i as u32))
            .collect()
    };
    for node in stragglers {
        finalize_node(shared, node);
    }
    drain_all_deterministic(shared);

    let report = build_report(shared);
    *shared.report.lock().unwrap_or_else(|p| p.into_inner()) = Some(report);
    shared.set_state(PipelineState::Completed);
}

fn drain_all_deterministic(shared: &Arc<Shared>) {
    loop {
        let item = {
            let mut engine = shared.engine();
            engine.next_work(shared.clock.now())
        };
        match item {
            Some(item) => execute_item(shared, item),
            None => break,
        }
    }
}

// ---------------------------------------------------------------------------
// Run handle

/// Handle to a running pipeline: await completion, stop early, inspect state
/// and metrics. Safe to use from any thread.
pub struct RunHandle {
    shared: Arc<Shared>,
    workers: Mutex<Vec<std::thread::JoinHandle<()>>>,
    det_thread: Mutex<Option<std::thread::JoinHandle<()>>>,
    finalize_timeout: Duration,
}

impl RunHandle {
    pub fn state(&self) -> PipelineState {
        *self.shared.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Consistent point-in-time topology and per-edge metrics.
    pub fn snapshot(&self) -> (PipelineGraphSnapshot, Vec<EdgeMetrics>) {
        let engine = self.shared.engine();
        let metrics = (0..engine.edges.len())
            .map(|i| {
                let id = EdgeId(i as u32);
                EdgeMetrics::from_stats(id, &engine.stats(id))
            })
            .collect();
        drop(engine);
        (diag::build_graph_snapshot(&self.shared.topology), metrics)
    }

    /// Errors surfaced by components so far.
    pub fn errors(&self) -> Vec<PipelineError> {
        self.shared
            .errors
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
    }

    /// Waits for all sources to complete naturally, then drains and
    /// finalizes the pipeline.
    pub fn join(&self) -> Result<CompletionReport, DrainError> {
        self.finish(None)
    }

    /// Requests an early stop, then drains and finalizes.
    pub fn stop(&self) -> Result<CompletionReport, DrainError> {
        self.shared.stop_all.store(true, Ordering::Release);
        self.shared.work_cv.notify_all();
        self.shared.space_cv.notify_all();
        self.finish(Some(Instant::now() + self.finalize_timeout))
    }

    fn finish(&self, source_deadline: Option<Instant>) -> Result<CompletionReport, DrainError> {
        if let Some(report) = self
            .shared
            .report
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
        {
            return Ok(report);
        }

        if self.shared.deterministic {
            let handle = self
                .det_thread
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .take();
            if let Some(handle) = handle {
                let _ = handle.join();
            }
            return self
                .shared
                .report
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .clone()
                .ok_or(DrainError::Timeout);
        }

        // Live mode: the joining thread drives the drain.
        wait_wave_sources(&self.shared, 0, source_deadline);
        let result = drain_live(&self.shared, self.finalize_timeout);
        let report = build_report(&self.shared);
        self.shared.shutdown.store(true, Ordering::Release);
        self.shared.work_cv.notify_all();
        self.shared.space_cv.notify_all();
        let workers = std::mem::take(
            &mut *self.workers.lock().unwrap_or_else(|p| p.into_inner()),
        );
        match result {
            Ok(()) => {
                for w in workers {
                    let _ = w.join();
                }
                *self
                    .shared
                    .report
                    .lock()
                    .unwrap_or_else(|p| p.into_inner()) = Some(report.clone());
                self.shared.set_state(PipelineState::Completed);
                Ok(report)
            }
            Err(e) => {
                // Workers may be stuck in a callback; detach rather than hang.
                drop(workers);
                Err(e)
            }
        }
    }
}
