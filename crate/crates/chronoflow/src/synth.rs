//! Synthetic sources, sinks, and the benchmark harness.
//!
//! These stand in for hardware sensors: generators emit configurable message
//! sequences (live-threaded or pull-driven for deterministic runs), sinks
//! collect or discard, and the bench harness wires source → N equal-cost
//! stages → sink to measure pipeline parallelism.

use crate::graph::{Component, EmissionKey, PortRegistry, PullSource};
use crate::ops;
use crate::sched::runtime::Ctx;
use crate::sched::{DeliveryPolicy, SchedulerConfig};
use crate::time::{Envelope, TimeSpan, Timestamp};
use crate::{GraphError, Payload, Pipeline};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

/// Emits `count` messages with originating times on a fixed grid, payload
/// `f(i)`. Runs a producer thread live, or the pull interface when
/// deterministic.
pub struct Generator<T, F> {
    count: u64,
    start: Timestamp,
    step: TimeSpan,
    make: F,
    /// Wall-time delay between live emissions (a crude sensor rate model).
    pace: Option<std::time::Duration>,
    emitted: u64,
    stream: u32,
    _marker: std::marker::PhantomData<fn() -> T>,
}

impl<T, F> Generator<T, F>
where
    T: Clone + Send + Sync + 'static,
    F: FnMut(u64) -> T + Send + Clone + 'static,
{
    pub fn new(count: u64, start: Timestamp, step: TimeSpan, make: F) -> Self {
        assert!(step.as_ns() > 0, "generator step must be positive");
        Generator {
            count,
            start,
            step,
            make,
            pace: None,
            emitted: 0,
            stream: 0,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn paced(mut self, pace: std::time::Duration) -> Self {
        self.pace = Some(pace);
        self
    }

    fn originating(&self, index: u64) -> Timestamp {
        Timestamp::from_ns(self.start.as_ns() + self.step.as_ns() * index as i64)
    }
}

impl<T, F> Component for Generator<T, F>
where
    T: Clone + Send + Sync + 'static,
    F: FnMut(u64) -> T + Send + Clone + 'static,
{
    fn register(&mut self, reg: &mut PortRegistry) {
        reg.mark_source();
        reg.output::<T>("out");
    }

    fn earliest_emission(&self) -> Option<Timestamp> {
        (self.count > 0).then_some(self.start)
    }

    fn on_start(&mut self, ctx: &mut Ctx<'_>) {
        self.stream = ctx.stream_id(0);
        if ctx.deterministic() {
            return;
        }
        let out = ctx.thread_output::<T>(0);
        let done = ctx.completion_handle();
        let count = self.count;
        let start = self.start;
        let step = self.step;
        let pace = self.pace;
        let mut make = self.make.clone();
        std::thread::Builder::new()
            .name("chronoflow-generator".into())
            .spawn(move || {
                for i in 0..count {
                    if done.stop_requested() {
                        break;
                    }
                    let t = Timestamp::from_ns(start.as_ns() + step.as_ns() * i as i64);
                    if out.post(t, make(i)).is_err() {
                        break;
                    }
                    if let Some(pace) = pace {
                        std::thread::sleep(pace);
                    }
                }
                out.close();
                done.complete();
            })
            .expect("spawn generator");
    }

    fn as_pull_source(&mut self) -> Option<&mut dyn PullSource> {
        Some(self)
    }
}

impl<T, F> PullSource for Generator<T, F>
where
    T: Clone + Send + Sync + 'static,
    F: FnMut(u64) -> T + Send + Clone + 'static,
{
    fn peek(&mut self) -> Option<EmissionKey> {
        if self.emitted >= self.count {
            return None;
        }
        Some((self.originating(self.emitted), self.stream, self.emitted))
    }

    fn emit_next(&mut self, ctx: &mut Ctx<'_>) {
        let i = self.emitted;
        self.emitted += 1;
        let value = (self.make)(i);
        ctx.post(0, self.originating(i), value);
    }
}

/// Emits a fixed log of (originating, payload) pairs; originating times must
/// be strictly increasing.
pub struct VecSource<T> {
    log: Vec<(Timestamp, T)>,
    emitted: usize,
    stream: u32,
}

impl<T: Clone + Send + Sync + 'static> VecSource<T> {
    pub fn new(log: Vec<(Timestamp, T)>) -> Self {
        assert!(log.windows(2).all(|w| w[0].0 < w[1].0));
        VecSource {
            log,
            emitted: 0,
            stream: 0,
        }
    }
}

impl<T: Clone + Send + Sync + 'static> Component for VecSource<T> {
    fn register(&mut self, reg: &mut PortRegistry) {
        reg.mark_source();
        reg.output::<T>("out");
    }

    fn earliest_emission(&self) -> Option<Timestamp> {
        self.log.first().map(|(t, _)| *t)
    }

    fn on_start(&mut self, ctx: &mut Ctx<'_>) {
        self.stream = ctx.stream_id(0);
        if ctx.deterministic() {
            return;
        }
        let out = ctx.thread_output::<T>(0);
        let done = ctx.completion_handle();
        let log = std::mem::take(&mut self.log);
        std::thread::Builder::new()
            .name("chronoflow-vecsource".into())
            .spawn(move || {
                for (t, value) in log {
                    if done.stop_requested() || out.post(t, value).is_err() {
                        break;
                    }
                }
                out.close();
                done.complete();
            })
            .expect("spawn vec source");
    }

    fn as_pull_source(&mut self) -> Option<&mut dyn PullSource> {
        Some(self)
    }
}

impl<T: Clone + Send + Sync + 'static> PullSource for VecSource<T> {
    fn peek(&mut self) -> Option<EmissionKey> {
        self.log
            .get(self.emitted)
            .map(|(t, _)| (*t, self.stream, self.emitted as u64))
    }

    fn emit_next(&mut self, ctx: &mut Ctx<'_>) {
        if let Some((t, value)) = self.log.get(self.emitted).cloned() {
            self.emitted += 1;
            ctx.post(0, t, value);
        }
    }
}

/// Collects every delivered `(Envelope, T)` pair for later inspection.
pub struct Collector<T> {
    seen: Arc<Mutex<Vec<(Envelope, T)>>>,
    /// Artificial per-message processing cost (a slow consumer model).
    delay: Option<std::time::Duration>,
}

impl<T: Clone + Send + Sync + 'static> Collector<T> {
    pub fn new() -> (Self, Arc<Mutex<Vec<(Envelope, T)>>>) {
        let seen = Arc::new(Mutex::new(Vec::new()));
        (
            Collector {
                seen: Arc::clone(&seen),
                delay: None,
            },
            seen,
        )
    }

    pub fn with_delay(mut self, delay: std::time::Duration) -> Self {
        self.delay = Some(delay);
        self
    }
}

impl<T: Clone + Send + Sync + 'static> Component for Collector<T> {
    fn register(&mut self, reg: &mut PortRegistry) {
        reg.input::<T>("in");
    }

    fn on_message(&mut self, _port: usize, env: &Envelope, payload: Payload, _ctx: &mut Ctx<'_>) {
        if let Some(delay) = self.delay {
            std::thread::sleep(delay);
        }
        self.seen
            .lock()
            .unwrap()
            .push((*env, payload.into_value::<T>()));
    }
}

/// Discards everything it receives across any number of ports; counts
/// deliveries.
pub struct CountingSink<T> {
    inputs: usize,
    count: Arc<AtomicU64>,
    _marker: std::marker::PhantomData<fn(T)>,
}

impl<T: Clone + Send + Sync + 'static> CountingSink<T> {
    pub fn new(inputs: usize) -> (Self, Arc<AtomicU64>) {
        let count = Arc::new(AtomicU64::new(0));
        (
            CountingSink {
                inputs,
                count: Arc::clone(&count),
                _marker: std::marker::PhantomData,
            },
            count,
        )
    }
}

impl<T: Clone + Send + Sync + 'static> Component for CountingSink<T> {
    fn register(&mut self, reg: &mut PortRegistry) {
        for idx in 0..self.inputs {
            reg.input::<T>(&format!("in{idx}"));
        }
    }

    fn on_message(&mut self, _port: usize, _env: &Envelope, _payload: Payload, _ctx: &mut Ctx<'_>) {
        self.count.fetch_add(1, Ordering::Relaxed);
    }
}

/// Deterministic CPU burn; the unit of "equal-cost stage" work.
pub fn busy_work(iterations: u64) -> u64 {
    let mut acc: u64 = 0x9e3779b97f4a7c15;
    for i in 0..iterations {
        acc = acc.wrapping_mul(6364136223846793005).wrapping_add(i);
        acc ^= acc >> 29;
    }
    std::hint::black_box(acc)
}

/// Benchmark parameters: a source fanning out to `stages` equal-cost map
/// stages, all feeding one sink.
#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub stages: usize,
    pub messages: u64,
    pub workers: usize,
    pub payload_bytes: usize,
    /// busy-work iterations per message per stage
    pub cost: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            stages: 4,
            messages: 1000,
            workers: 1,
            payload_bytes: 64,
            cost: 20_000,
        }
    }
}

/// Outcome of one benchmark run.
#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub wall: std::time::Duration,
    pub throughput_msg_per_s: f64,
    pub report: crate::CompletionReport,
    pub metrics: Vec<crate::diag::EdgeMetrics>,
    pub graph: crate::diag::PipelineGraphSnapshot,
}

/// Builds and runs the synthetic parallelism pipeline.
pub fn run_bench(spec: &BenchSpec) -> Result<BenchOutcome, GraphError> {
    let config = SchedulerConfig::default().with_workers(spec.workers);
    let mut p = Pipeline::with_config(config);

    let payload_bytes = spec.payload_bytes;
    let generator = Generator::new(
        spec.messages,
        Timestamp::from_ns(0),
        TimeSpan::from_micros(1),
        move |i| vec![(i % 251) as u8; payload_bytes],
    );
    let source = p.add("source", generator)?;
    let source_out = source.output::<Vec<u8>>(0)?;

    let (sink, delivered) = CountingSink::<u64>::new(spec.stages);
    let sink_node = p.add("sink", sink)?;

    for stage in 0..spec.stages {
        let cost = spec.cost;
        let stage_out = ops::map(
            &mut p,
            &format!("stage{stage}"),
            &source_out,
            move |bytes: &Vec<u8>| busy_work(cost) ^ bytes.len() as u64,
        )?;
        p.connect(
            &stage_out,
            &sink_node.input::<u64>(stage)?,
            DeliveryPolicy::Unlimited,
        )?;
    }

    let started = Instant::now();
    p.run(None)?;
    let handle = p.take_handle().expect("pipeline just started");
    let report = handle.join().map_err(|e| {
        GraphError::ValidationFailed(format!("bench run failed to drain: {e}"))
    })?;
    let wall = started.elapsed();
    let (graph, metrics) = handle.snapshot();

    let total = spec.messages * spec.stages as u64;
    let throughput = total as f64 / wall.as_secs_f64().max(1e-9);
    let _ = delivered;
    Ok(BenchOutcome {
        wall,
        throughput_msg_per_s: throughput,
        report,
        metrics,
        graph,
    })
}
