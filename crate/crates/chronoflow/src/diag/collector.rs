//! Periodic metrics snapshots emitted as an ordinary stream, persistable like
//! any other data.
//!
//! The collector drains after everything else (a later drain wave), so its
//! last frame carries the final counters of the run.

use super::{EdgeMetrics, PipelineGraphSnapshot};
use crate::graph::{Component, EmissionKey, EmitterRef, GraphError, Pipeline, PortRegistry, PullSource};
use crate::sched::runtime::Ctx;
use crate::time::{TimeSpan, Timestamp};
use serde::{Deserialize, Serialize};

/// Store stream name under which metrics are persisted.
pub const METRICS_STREAM: &str = "__diagnostics";

/// One persisted metrics message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFrame {
    pub graph: PipelineGraphSnapshot,
    pub edges: Vec<EdgeMetrics>,
}

impl MetricsFrame {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("metrics frame serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, serde_json::Error> {
        serde_json::from_value(value.clone())
    }
}

/// Source that samples the pipeline's own metrics on a fixed cadence and
/// emits them as `serde_json::Value` messages.
///
/// In deterministic runs periodic wall-clock sampling would not be
/// reproducible, so only the final frame (staged at drain) is emitted.
pub struct MetricsCollector {
    cadence: TimeSpan,
    final_pending: bool,
    emitted: u64,
    last_originating: Option<Timestamp>,
    stream: u32,
}

impl MetricsCollector {
    pub fn new(cadence: TimeSpan) -> Self {
        MetricsCollector {
            cadence,
            final_pending: false,
            emitted: 0,
            last_originating: None,
            stream: 0,
        }
    }

    fn next_originating(last: Option<Timestamp>, now: Timestamp) -> Timestamp {
        match last {
            Some(last) if now <= last => Timestamp::from_ns(last.as_ns() + 1),
            _ => now,
        }
    }
}

impl Component for MetricsCollector {
    fn register(&mut self, reg: &mut PortRegistry) {
        reg.mark_source();
        reg.output::<serde_json::Value>("metrics");
    }

    fn on_start(&mut self, ctx: &mut Ctx<'_>) {
        self.stream = ctx.stream_id(0);
        if ctx.deterministic() {
            return;
        }
        let out = ctx.thread_output::<serde_json::Value>(0);
        let done = ctx.completion_handle();
        let sampler = ctx.snapshot_handle();
        let cadence = self.cadence.to_std();
        std::thread::Builder::new()
            .name("chronoflow-metrics".into())
            .spawn(move || {
                let mut last: Option<Timestamp> = None;
                loop {
                    let stopped = done.stop_requested();
                    let (graph, edges) = sampler.snapshot();
                    let frame = MetricsFrame { graph, edges };
                    let at = MetricsCollector::next_originating(last, sampler.now());
                    last = Some(at);
                    if out.post(at, frame.to_json()).is_err() {
                        break;
                    }
                    if stopped {
                        // final frame emitted after the stop request; everything
                        // in earlier drain waves has already quiesced
                        break;
                    }
                    std::thread::sleep(cadence);
                }
                out.close();
                done.complete();
            })
            .expect("spawn metrics sampler");
    }
}

impl PullSource for MetricsCollector {
    fn peek(&mut self) -> Option<EmissionKey> {
        if self.final_pending {
            Some((Timestamp::MAX, self.stream, self.emitted))
        } else {
            None
        }
    }

    fn emit_next(&mut self, ctx: &mut Ctx<'_>) {
        self.final_pending = false;
        let (graph, edges) = ctx.metrics_snapshot();
        let frame = MetricsFrame { graph, edges };
        let at = Self::next_originating(self.last_originating, ctx.now());
        self.last_originating = Some(at);
        self.emitted += 1;
        ctx.post(0, at, frame.to_json());
    }

    fn on_drain(&mut self) {
        self.final_pending = true;
    }
}

/// Adds a metrics collector to the pipeline, returning its output stream for
/// wiring into a store sink (conventionally as stream [`METRICS_STREAM`]).
pub fn attach_metrics(
    pipeline: &mut Pipeline,
    cadence: TimeSpan,
) -> Result<EmitterRef<serde_json::Value>, GraphError> {
    let node = pipeline.add_in_wave(METRICS_STREAM, MetricsCollector::new(cadence), 1)?;
    node.output::<serde_json::Value>(0)
}
