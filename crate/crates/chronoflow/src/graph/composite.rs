//! Composite components: a whole pipeline encapsulated behind named boundary
//! ports, usable as a single node in an outer graph.
//!
//! Composites are inlined when added: the inner graph merges into the outer
//! one and boundary connections attach directly to inner ports, so messages
//! crossing the boundary keep their envelopes bit-for-bit. The construction
//! hierarchy is retained for diagnostics, which render composites as nested
//! clusters.

use super::{
    AnyEmitterRef, AnyReceiverRef, EmitterRef, GraphError, GroupDef, Pipeline, PipelineState,
    ReceiverRef,
};
use crate::ids::{GroupId, NodeId};
use crate::message::PortType;
use std::marker::PhantomData;

/// A sealed subgraph with named input and output boundary ports.
pub struct Composite {
    inner: Pipeline,
    inputs: Vec<(String, AnyReceiverRef)>,
    outputs: Vec<(String, AnyEmitterRef)>,
}

impl Composite {
    /// Wraps `inner` behind the given boundary ports.
    ///
    /// Boundary inputs must be unconnected inner receivers; boundary outputs
    /// must be existing inner emitters. The inner pipeline must not have
    /// started.
    pub fn encapsulate(
        inner: Pipeline,
        inputs: Vec<(&str, AnyReceiverRef)>,
        outputs: Vec<(&str, AnyEmitterRef)>,
    ) -> Result<Composite, GraphError> {
        if inner.state() != PipelineState::Created {
            return Err(GraphError::InnerAlreadyStarted);
        }
        for (name, input) in &inputs {
            let node = inner
                .nodes
                .get(input.node.index())
                .ok_or_else(|| GraphError::UnknownPort(format!("boundary input {name}")))?;
            let decl = node.inputs.get(input.port).ok_or_else(|| {
                GraphError::TypeMismatch {
                    emitter: format!("boundary input {name}"),
                    receiver: "missing inner port".to_string(),
                }
            })?;
            if decl.ty != input.ty {
                return Err(GraphError::TypeMismatch {
                    emitter: input.ty.name.to_string(),
                    receiver: decl.ty.name.to_string(),
                });
            }
            if inner
                .edges
                .iter()
                .any(|e| e.to_node == input.node && e.to_port == input.port)
            {
                return Err(GraphError::ReceiverAlreadyConnected {
                    node: node.name.clone(),
                    port: decl.name.clone(),
                });
            }
        }
        for (name, output) in &outputs {
            let node = inner
                .nodes
                .get(output.node.index())
                .ok_or_else(|| GraphError::UnknownPort(format!("boundary output {name}")))?;
            let actual = node.outputs.get(output.port).map(|(decl, stream)| {
                (decl.ty, *stream)
            });
            match actual {
                Some((ty, stream)) if ty == output.ty && stream == output.stream => {}
                _ => {
                    return Err(GraphError::TypeMismatch {
                        emitter: format!("boundary output {name}"),
                        receiver: "missing or mismatched inner port".to_string(),
                    })
                }
            }
        }
        Ok(Composite {
            inner,
            inputs: inputs
                .into_iter()
                .map(|(n, r)| (n.to_string(), r))
                .collect(),
            outputs: outputs
                .into_iter()
                .map(|(n, e)| (n.to_string(), e))
                .collect(),
        })
    }
}

/// Handle to an added composite: boundary ports plus its diagnostics group.
pub struct CompositeHandle {
    pub(crate) group: GroupId,
    inputs: Vec<(String, AnyReceiverRef)>,
    outputs: Vec<(String, AnyEmitterRef)>,
}

impl CompositeHandle {
    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn input<T: 'static>(&self, port: usize) -> Result<ReceiverRef<T>, GraphError> {
        let (_, r) = self
            .inputs
            .get(port)
            .ok_or_else(|| GraphError::UnknownPort(format!("composite input {port}")))?;
        if r.ty != PortType::of::<T>() {
            return Err(GraphError::TypeMismatch {
                emitter: std::any::type_name::<T>().to_string(),
                receiver: r.ty.name.to_string(),
            });
        }
        Ok(ReceiverRef {
            node: r.node,
            port: r.port,
            _marker: PhantomData,
        })
    }

    pub fn output<T: 'static>(&self, port: usize) -> Result<EmitterRef<T>, GraphError> {
        let (_, e) = self
            .outputs
            .get(port)
            .ok_or_else(|| GraphError::UnknownPort(format!("composite output {port}")))?;
        if e.ty != PortType::of::<T>() {
            return Err(GraphError::TypeMismatch {
                emitter: e.ty.name.to_string(),
                receiver: std::any::type_name::<T>().to_string(),
            });
        }
        Ok(EmitterRef {
            node: e.node,
            port: e.port,
            stream: e.stream,
            _marker: PhantomData,
        })
    }

    pub fn input_dyn(&self, port: usize) -> Result<AnyReceiverRef, GraphError> {
        self.inputs
            .get(port)
            .map(|(_, r)| *r)
            .ok_or_else(|| GraphError::UnknownPort(format!("composite input {port}")))
    }

    pub fn output_dyn(&self, port: usize) -> Result<AnyEmitterRef, GraphError> {
        self.outputs
            .get(port)
            .map(|(_, e)| *e)
            .ok_or_else(|| GraphError::UnknownPort(format!("composite output {port}")))
    }
}

impl Pipeline {
    /// Adds a composite, inlining its inner graph. Inner components appear
    /// under `<name>/` in snapshots and reports; inner emitters receive fresh
    /// stream ids in their original registration order.
    pub fn add_composite(
        &mut self,
        name: &str,
        composite: Composite,
    ) -> Result<CompositeHandle, GraphError> {
        if self.state() != PipelineState::Created {
            return Err(GraphError::PipelineAlreadyStarted);
        }
        let Composite {
            inner,
            inputs,
            outputs,
        } = composite;

        let node_offset = self.nodes.len() as u32;
        let group_offset = self.groups.len() as u32 + 1;
        let group = GroupId(self.groups.len() as u32);
        self.groups.push(GroupDef {
            name: name.to_string(),
            parent: None,
        });
        for g in inner.groups {
            self.groups.push(GroupDef {
                name: g.name,
                parent: Some(match g.parent {
                    Some(p) => GroupId(p.0 + group_offset),
                    None => group,
                }),
            });
        }

        // Remap inner stream ids onto this pipeline's dense sequence.
        let mut stream_map = vec![u32::MAX; inner.next_stream as usize];
        for node in &inner.nodes {
            for (_, stream) in &node.outputs {
                stream_map[*stream as usize] = self.next_stream;
                self.next_stream += 1;
            }
        }

        for mut node in inner.nodes {
            let qualified = format!("{name}/{}", node.name);
            if !self.names.insert(qualified.clone()) {
                return Err(GraphError::DuplicateName(qualified));
            }
            node.name = qualified;
            node.parent = Some(match node.parent {
                Some(p) => GroupId(p.0 + group_offset),
                None => group,
            });
            for (_, stream) in &mut node.outputs {
                *stream = stream_map[*stream as usize];
            }
            self.nodes.push(node);
        }

        for mut edge in inner.edges {
            edge.from_node = NodeId(edge.from_node.0 + node_offset);
            edge.to_node = NodeId(edge.to_node.0 + node_offset);
            edge.from_stream = stream_map[edge.from_stream as usize];
            self.edges.push(edge);
        }

        let inputs = inputs
            .into_iter()
            .map(|(port_name, r)| {
                (
                    port_name,
                    AnyReceiverRef {
                        node: NodeId(r.node.0 + node_offset),
                        port: r.port,
                        ty: r.ty,
                    },
                )
            })
            .collect();
        let outputs = outputs
            .into_iter()
            .map(|(port_name, e)| {
                (
                    port_name,
                    AnyEmitterRef {
                        node: NodeId(e.node.0 + node_offset),
                        port: e.port,
                        stream: stream_map[e.stream as usize],
                        ty: e.ty,
                    },
                )
            })
            .collect();

        Ok(CompositeHandle {
            group,
            inputs,
            outputs,
        })
    }
}
