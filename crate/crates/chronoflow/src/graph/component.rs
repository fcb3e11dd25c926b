//! The component contract: lifecycle callbacks, port declaration, and the
//! pull interface deterministic runs use to drive sources in lockstep.
//!
//! Callbacks of one component are never invoked concurrently with each other,
//! so component state needs no internal locking. Payloads crossing edges must
//! be safe to hand between workers.

use crate::message::PortType;
use crate::sched::runtime::Ctx;
use crate::time::{Envelope, Timestamp};
use crate::Payload;

/// A unit of computation in the pipeline graph.
///
/// Implementations declare their ports in [`Component::register`], then react
/// to runtime callbacks. Sources either spawn their own thread from
/// [`Component::on_start`] (live runs) or expose a [`PullSource`]
/// (deterministic runs); other components are purely reactive.
pub trait Component: Send + 'static {
    /// Declares receivers and emitters. Called exactly once, before the
    /// component joins the graph.
    fn register(&mut self, reg: &mut PortRegistry);

    /// Pipeline startup. Live sources spawn their producer thread here.
    fn on_start(&mut self, _ctx: &mut Ctx<'_>) {}

    /// One message delivered to one receiver port.
    fn on_message(&mut self, _port: usize, _env: &Envelope, _payload: Payload, _ctx: &mut Ctx<'_>) {
    }

    /// The stream feeding a receiver port has ended.
    fn on_closed(&mut self, _port: usize, _ctx: &mut Ctx<'_>) {}

    /// All inputs have closed (or the pipeline is draining); invoked exactly
    /// once, after which the component's own emitters are closed.
    fn on_final(&mut self, _ctx: &mut Ctx<'_>) {}

    /// Deterministic runs drive sources through this interface instead of a
    /// free-running thread. Sources that cannot provide it are rejected when
    /// a deterministic run starts.
    fn as_pull_source(&mut self) -> Option<&mut dyn PullSource> {
        None
    }

    /// Earliest originating time this source will emit, when known ahead of
    /// the run. Used to anchor the virtual clock for paced replay.
    fn earliest_emission(&self) -> Option<Timestamp> {
        None
    }
}

/// Global ordering key for deterministic emission and delivery:
/// (originating, stream id, sequence).
pub type EmissionKey = (Timestamp, u32, u64);

/// Lockstep source interface for deterministic runs. The scheduler peeks all
/// sources, picks the globally smallest key, and asks that source to emit
/// exactly one message.
pub trait PullSource {
    /// Key of the next message this source would emit, or `None` when done.
    fn peek(&mut self) -> Option<EmissionKey>;

    /// Emits exactly the message reported by the last `peek`.
    fn emit_next(&mut self, ctx: &mut Ctx<'_>);

    /// The source's drain wave has begun; a last emission may be staged
    /// (diagnostics use this for the final snapshot).
    fn on_drain(&mut self) {}
}

/// Declared shape of one port.
#[derive(Debug, Clone)]
pub struct PortDecl {
    pub name: String,
    pub ty: PortType,
    pub optional: bool,
}

/// Collects a component's port declarations at registration time.
#[derive(Default)]
pub struct PortRegistry {
    pub(crate) inputs: Vec<PortDecl>,
    pub(crate) outputs: Vec<PortDecl>,
    pub(crate) is_source: bool,
    pub(crate) unordered_outputs: bool,
}

impl PortRegistry {
    /// Declares a receiver port; connection is required for the run to start.
    pub fn input<T: 'static>(&mut self, name: &str) -> usize {
        self.inputs.push(PortDecl {
            name: name.to_string(),
            ty: PortType::of::<T>(),
            optional: false,
        });
        self.inputs.len() - 1
    }

    /// Declares a receiver port whose type is only known at runtime.
    pub fn input_of(&mut self, name: &str, ty: PortType) -> usize {
        self.inputs.push(PortDecl {
            name: name.to_string(),
            ty,
            optional: false,
        });
        self.inputs.len() - 1
    }

    /// Declares a receiver port that may legally stay unconnected.
    pub fn input_optional<T: 'static>(&mut self, name: &str) -> usize {
        self.inputs.push(PortDecl {
            name: name.to_string(),
            ty: PortType::of::<T>(),
            optional: true,
        });
        self.inputs.len() - 1
    }

    /// Declares an emitter port.
    pub fn output<T: Clone + Send + Sync + 'static>(&mut self, name: &str) -> usize {
        self.output_of(name, PortType::of::<T>())
    }

    /// Declares an emitter port whose type is only known at runtime (replay
    /// sources pick types from stream codecs).
    pub fn output_of(&mut self, name: &str, ty: PortType) -> usize {
        self.outputs.push(PortDecl {
            name: name.to_string(),
            ty,
            optional: false,
        });
        self.outputs.len() - 1
    }

    /// Marks this component as a source: it produces messages without inputs
    /// and must eventually signal completion.
    pub fn mark_source(&mut self) {
        self.is_source = true;
    }

    /// Opts this component's emitters out of the strict originating-time
    /// monotonicity check. Only arrival-order interleaves (merge) use this;
    /// their outputs cannot feed time-synchronized operators or stores.
    pub fn mark_unordered_outputs(&mut self) {
        self.unordered_outputs = true;
    }
}
