//! A single-process, multi-worker dataflow runtime for time-aware streams.
//!
//! Pipelines are graphs of lightweight components connected by typed streams.
//! Every message carries an originating timestamp (when its content entered
//! the system from the world) alongside its creation timestamp, and all
//! synchronization is defined over originating times. The runtime provides
//! configurable delivery policies with back-pressure, certainty-gated stream
//! fusion that is reproducible by construction, bit-exact persistence with
//! deterministic replay, and diagnostics for inspecting a running graph.

pub mod diag;
pub mod graph;
mod ids;
mod message;
pub mod ops;
pub mod sched;
pub mod store;
pub mod synth;
pub mod time;

pub use graph::{
    AnyEmitterRef, AnyReceiverRef, Component, Composite, CompositeHandle, EdgeOptions, EmitterRef,
    GraphError, NodeHandle, Pipeline, PipelineState, PortRegistry, PullSource, ReceiverRef,
};
pub use ops::Interpolator;
pub use ids::{EdgeId, GroupId, NodeId};
pub use message::{AnyMessage, Payload, PortType};
pub use sched::runtime::{CompletionHandle, Ctx, PostError, SnapshotHandle, ThreadOutput};
pub use sched::{
    CompletionReport, DeliveryPolicy, EdgeReport, PipelineError, RunHandle, SchedulerConfig,
};
pub use time::{
    validate_envelope, Clock, Envelope, EnvelopeViolation, ReplayDescriptor, Speed, TimeError,
    TimeSpan, Timestamp,
};
