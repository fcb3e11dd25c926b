//! Pipeline construction: typed emitters/receivers, connections, composite
//! subgraphs, and the lifecycle from `Created` through `Completed`.
//!
//! Construction is single-threaded and happens entirely before `run`. Typed
//! port references make most wiring mistakes compile-time errors; the dynamic
//! variants used by tools check types at connect time instead.

pub mod component;
mod composite;

pub use component::{Component, EmissionKey, PortRegistry, PullSource};
pub use composite::{Composite, CompositeHandle};

use crate::ids::{EdgeId, GroupId, NodeId};
use crate::message::PortType;
use crate::sched::runtime::{self, RunHandle};
use crate::sched::{DeliveryPolicy, SchedulerConfig};
use crate::time::ReplayDescriptor;
use component::PortDecl;
use std::collections::HashSet;
use std::marker::PhantomData;
use std::sync::Arc;

/// Construction and wiring errors.
#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("a component named {0:?} already exists")]
    DuplicateName(String),
    #[error("the pipeline has already started")]
    PipelineAlreadyStarted,
    #[error("port type mismatch: emitter carries {emitter}, receiver expects {receiver}")]
    TypeMismatch { emitter: String, receiver: String },
    #[error("pipeline validation failed: {0}")]
    ValidationFailed(String),
    #[error("the inner pipeline of a composite has already started")]
    InnerAlreadyStarted,
    #[error("receiver {node}.{port} is already connected")]
    ReceiverAlreadyConnected { node: String, port: String },
    #[error("no such port: {0}")]
    UnknownPort(String),
    #[error("invalid delivery policy: {0}")]
    InvalidPolicy(String),
}

/// Lifecycle of a pipeline. Transitions are strictly forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineState {
    Created,
    Running,
    Draining,
    Completed,
}

/// Typed reference to an emitter port.
pub struct EmitterRef<T> {
    pub(crate) node: NodeId,
    pub(crate) port: usize,
    pub(crate) stream: u32,
    _marker: PhantomData<fn() -> T>,
}

impl<T> Clone for EmitterRef<T> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<T> Copy for EmitterRef<T> {}

impl<T: 'static> EmitterRef<T> {
    pub fn stream_id(&self) -> u32 {
        self.stream
    }

    pub fn erase(&self) -> AnyEmitterRef {
        AnyEmitterRef {
            node: self.node,
            port: self.port,
            stream: self.stream,
            ty: PortType::of::<T>(),
        }
    }
}

/// Typed reference to a receiver port.
pub struct ReceiverRef<T> {
    pub(crate) node: NodeId,
    pub(crate) port: usize,
    _marker: PhantomData<fn(T)>,
}

impl<T> Clone for ReceiverRef<T> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<T> Copy for ReceiverRef<T> {}

impl<T: 'static> ReceiverRef<T> {
    pub fn erase(&self) -> AnyReceiverRef {
        AnyReceiverRef {
            node: self.node,
            port: self.port,
            ty: PortType::of::<T>(),
        }
    }
}

/// Type-erased emitter reference for dynamic wiring (tools, replay).
#[derive(Debug, Clone, Copy)]
pub struct AnyEmitterRef {
    pub(crate) node: NodeId,
    pub(crate) port: usize,
    pub(crate) stream: u32,
    pub(crate) ty: PortType,
}

/// Type-erased receiver reference for dynamic wiring.
#[derive(Debug, Clone, Copy)]
pub struct AnyReceiverRef {
    pub(crate) node: NodeId,
    pub(crate) port: usize,
    pub(crate) ty: PortType,
}

/// Handle to an added component, giving access to its ports.
pub struct NodeHandle {
    pub(crate) id: NodeId,
    inputs: Vec<PortDecl>,
    outputs: Vec<(PortDecl, u32)>,
}

impl NodeHandle {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn output<T: 'static>(&self, port: usize) -> Result<EmitterRef<T>, GraphError> {
        let (decl, stream) = self
            .outputs
            .get(port)
            .ok_or_else(|| GraphError::UnknownPort(format!("output {port}")))?;
        if decl.ty != PortType::of::<T>() {
            return Err(GraphError::TypeMismatch {
                emitter: decl.ty.name.to_string(),
                receiver: std::any::type_name::<T>().to_string(),
            });
        }
        Ok(EmitterRef {
            node: self.id,
            port,
            stream: *stream,
            _marker: PhantomData,
        })
    }

    pub fn input<T: 'static>(&self, port: usize) -> Result<ReceiverRef<T>, GraphError> {
        let decl = self
            .inputs
            .get(port)
            .ok_or_else(|| GraphError::UnknownPort(format!("input {port}")))?;
        if decl.ty != PortType::of::<T>() {
            return Err(GraphError::TypeMismatch {
                emitter: std::any::type_name::<T>().to_string(),
                receiver: decl.ty.name.to_string(),
            });
        }
        Ok(ReceiverRef {
            node: self.id,
            port,
            _marker: PhantomData,
        })
    }

    pub fn output_dyn(&self, port: usize) -> Result<AnyEmitterRef, GraphError> {
        let (decl, stream) = self
            .outputs
            .get(port)
            .ok_or_else(|| GraphError::UnknownPort(format!("output {port}")))?;
        Ok(AnyEmitterRef {
            node: self.id,
            port,
            stream: *stream,
            ty: decl.ty,
        })
    }

    pub fn input_dyn(&self, port: usize) -> Result<AnyReceiverRef, GraphError> {
        let decl = self
            .inputs
            .get(port)
            .ok_or_else(|| GraphError::UnknownPort(format!("input {port}")))?;
        Ok(AnyReceiverRef {
            node: self.id,
            port,
            ty: decl.ty,
        })
    }

    pub fn output_count(&self) -> usize {
        self.outputs.len()
    }

    pub fn input_count(&self) -> usize {
        self.inputs.len()
    }
}

pub(crate) struct NodeDef {
    pub name: String,
    pub component: Option<Box<dyn Component>>,
    pub inputs: Vec<PortDecl>,
    pub outputs: Vec<(PortDecl, u32)>,
    pub is_source: bool,
    pub unordered_outputs: bool,
    pub parent: Option<GroupId>,
    pub drain_wave: u8,
}

pub(crate) struct GroupDef {
    pub name: String,
    pub parent: Option<GroupId>,
}

pub(crate) struct EdgeDef {
    pub from_node: NodeId,
    pub from_port: usize,
    pub from_stream: u32,
    pub to_node: NodeId,
    pub to_port: usize,
    pub policy: DeliveryPolicy,
    pub deep_copy: bool,
}

/// Per-edge wiring options beyond the delivery policy.
#[derive(Debug, Clone, Copy, Default)]
pub struct EdgeOptions {
    /// Skip the isolating deep copy on delivery. Subscribers then share one
    /// value; payloads with interior mutability alias across components.
    pub zero_copy: bool,
}

/// Static description of the component graph under construction.
pub struct Pipeline {
    pub(crate) nodes: Vec<NodeDef>,
    pub(crate) groups: Vec<GroupDef>,
    pub(crate) edges: Vec<EdgeDef>,
    pub(crate) next_stream: u32,
    names: HashSet<String>,
    state: PipelineState,
    config: SchedulerConfig,
    run_handle: Option<RunHandle>,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self::new()
    }
}

impl Pipeline {
    pub fn new() -> Self {
        Pipeline::with_config(SchedulerConfig::default())
    }

    pub fn with_config(config: SchedulerConfig) -> Self {
        Pipeline {
            nodes: Vec::new(),
            groups: Vec::new(),
            edges: Vec::new(),
            next_stream: 0,
            names: HashSet::new(),
            state: PipelineState::Created,
            config,
            run_handle: None,
        }
    }

    pub fn state(&self) -> PipelineState {
        match (&self.run_handle, self.state) {
            (Some(handle), PipelineState::Running) => handle.state(),
            _ => self.state,
        }
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut SchedulerConfig {
        &mut self.config
    }

    /// Registers a component. Its emitters receive fresh pipeline-wide stream
    /// ids, assigned densely from 0 in registration order.
    pub fn add<C: Component>(&mut self, name: &str, component: C) -> Result<NodeHandle, GraphError> {
        self.add_in_wave(name, component, 0)
    }

    pub(crate) fn add_in_wave<C: Component>(
        &mut self,
        name: &str,
        mut component: C,
        drain_wave: u8,
    ) -> Result<NodeHandle, GraphError> {
        self.ensure_created()?;
        if !self.names.insert(name.to_string()) {
            return Err(GraphError::DuplicateName(name.to_string()));
        }
        let mut reg = PortRegistry::default();
        component.register(&mut reg);
        let id = NodeId(self.nodes.len() as u32);
        let outputs: Vec<(PortDecl, u32)> = reg
            .outputs
            .into_iter()
            .map(|decl| {
                let stream = self.next_stream;
                self.next_stream += 1;
                (decl, stream)
            })
            .collect();
        let def = NodeDef {
            name: name.to_string(),
            component: Some(Box::new(component)),
            inputs: reg.inputs,
            outputs,
            is_source: reg.is_source,
            unordered_outputs: reg.unordered_outputs,
            parent: None,
            drain_wave,
        };
        let handle = NodeHandle {
            id,
            inputs: def.inputs.clone(),
            outputs: def.outputs.clone(),
        };
        self.nodes.push(def);
        Ok(handle)
    }

    /// Connects an emitter to a receiver with the isolating deep copy.
    pub fn connect<T: 'static>(
        &mut self,
        from: &EmitterRef<T>,
        to: &ReceiverRef<T>,
        policy: DeliveryPolicy,
    ) -> Result<EdgeId, GraphError> {
        self.connect_with(from, to, policy, EdgeOptions::default())
    }

    pub fn connect_with<T: 'static>(
        &mut self,
        from: &EmitterRef<T>,
        to: &ReceiverRef<T>,
        policy: DeliveryPolicy,
        options: EdgeOptions,
    ) -> Result<EdgeId, GraphError> {
        self.connect_dyn_with(&from.erase(), &to.erase(), policy, options)
    }

    /// Dynamically-typed connect; fails with `TypeMismatch` when the ports
    /// disagree.
    pub fn connect_dyn(
        &mut self,
        from: &AnyEmitterRef,
        to: &AnyReceiverRef,
        policy: DeliveryPolicy,
    ) -> Result<EdgeId, GraphError> {
        self.connect_dyn_with(from, to, policy, EdgeOptions::default())
    }

    pub fn connect_dyn_with(
        &mut self,
        from: &AnyEmitterRef,
        to: &AnyReceiverRef,
        policy: DeliveryPolicy,
        options: EdgeOptions,
    ) -> Result<EdgeId, GraphError> {
        self.ensure_created()?;
        if from.ty != to.ty {
            return Err(GraphError::TypeMismatch {
                emitter: from.ty.name.to_string(),
                receiver: to.ty.name.to_string(),
            });
        }
        policy.validate().map_err(GraphError::InvalidPolicy)?;
        if self
            .edges
            .iter()
            .any(|e| e.to_node == to.node && e.to_port == to.port)
        {
            return Err(GraphError::ReceiverAlreadyConnected {
                node: self.nodes[to.node.index()].name.clone(),
                port: self.nodes[to.node.index()].inputs[to.port].name.clone(),
            });
        }
        let id = EdgeId(self.edges.len() as u32);
        self.edges.push(EdgeDef {
            from_node: from.node,
            from_port: from.port,
            from_stream: from.stream,
            to_node: to.node,
            to_port: to.port,
            policy,
            deep_copy: !options.zero_copy,
        });
        Ok(id)
    }

    /// Starts the pipeline. With no replay descriptor the clock is real wall
    /// time; otherwise it is virtual per the descriptor. Deterministic runs
    /// (descriptor flag or scheduler config) execute in a single totally
    /// ordered lane.
    pub fn run(&mut self, replay: Option<ReplayDescriptor>) -> Result<&RunHandle, GraphError> {
        self.ensure_created()?;
        self.validate()?;
        self.state = PipelineState::Running;
        let handle = runtime::start(self, replay)?;
        self.run_handle = Some(handle);
        Ok(self.run_handle.as_ref().unwrap())
    }

    /// Takes the run handle for independent ownership (joining from another
    /// scope).
    pub fn take_handle(&mut self) -> Option<RunHandle> {
        self.run_handle.take()
    }

    fn ensure_created(&self) -> Result<(), GraphError> {
        if self.state != PipelineState::Created {
            return Err(GraphError::PipelineAlreadyStarted);
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), GraphError> {
        for (idx, node) in self.nodes.iter().enumerate() {
            for (port, decl) in node.inputs.iter().enumerate() {
                let connected = self
                    .edges
                    .iter()
                    .any(|e| e.to_node.index() == idx && e.to_port == port);
                if !connected && !decl.optional {
                    return Err(GraphError::ValidationFailed(format!(
                        "receiver {}.{} is not connected",
                        node.name, decl.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Point-in-time topology and metrics view. Before the run starts all
    /// counters are zero; afterwards the live engine counters are reported.
    pub fn snapshot(&self) -> (crate::diag::PipelineGraphSnapshot, Vec<crate::diag::EdgeMetrics>) {
        match &self.run_handle {
            Some(handle) => handle.snapshot(),
            None => {
                let topo = Arc::new(self.topology());
                let zeros = (0..self.edges.len())
                    .map(|i| crate::diag::EdgeMetrics::zero(EdgeId(i as u32)))
                    .collect();
                (crate::diag::build_graph_snapshot(&topo), zeros)
            }
        }
    }

    pub(crate) fn topology(&self) -> Topology {
        Topology {
            nodes: self
                .nodes
                .iter()
                .map(|n| TopologyNode {
                    name: n.name.clone(),
                    is_source: n.is_source,
                    parent: n.parent,
                })
                .collect(),
            groups: self
                .groups
                .iter()
                .map(|g| TopologyGroup {
                    name: g.name.clone(),
                    parent: g.parent,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| TopologyEdge {
                    from_node: e.from_node,
                    from_port_name: self.nodes[e.from_node.index()].outputs[e.from_port]
                        .0
                        .name
                        .clone(),
                    from_stream: e.from_stream,
                    to_node: e.to_node,
                    to_port: e.to_port,
                    to_port_name: self.nodes[e.to_node.index()].inputs[e.to_port].name.clone(),
                    policy: e.policy,
                    type_name: self.nodes[e.from_node.index()].outputs[e.from_port]
                        .0
                        .ty
                        .short_name()
                        .to_string(),
                })
                .collect(),
        }
    }
}

/// Name/shape metadata describing the constructed graph, shared with the
/// runtime and diagnostics.
#[derive(Debug, Clone)]
pub(crate) struct Topology {
    pub nodes: Vec<TopologyNode>,
    pub groups: Vec<TopologyGroup>,
    pub edges: Vec<TopologyEdge>,
}

#[derive(Debug, Clone)]
pub(crate) struct TopologyNode {
    pub name: String,
    pub is_source: bool,
    pub parent: Option<GroupId>,
}

#[derive(Debug, Clone)]
pub(crate) struct TopologyGroup {
    pub name: String,
    pub parent: Option<GroupId>,
}

#[derive(Debug, Clone)]
pub(crate) struct TopologyEdge {
    pub from_node: NodeId,
    pub from_port_name: String,
    pub from_stream: u32,
    pub to_node: NodeId,
    pub to_port: usize,
    pub to_port_name: String,
    pub policy: DeliveryPolicy,
    pub type_name: String,
}
