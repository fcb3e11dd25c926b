//! Runtime introspection: topology snapshots, per-edge queue/latency/drop
//! metrics, a persistable metrics stream, and DOT export.

mod collector;
mod dot;

pub use collector::{attach_metrics, MetricsCollector, MetricsFrame, METRICS_STREAM};
pub use dot::{export_dot, Depth};

use crate::graph::Topology;
use crate::ids::{EdgeId, GroupId};
use crate::sched::{DeliveryPolicy, QueueStats};
use crate::time::TimeSpan;
use serde::{Deserialize, Serialize};

/// Per-edge counters and latency aggregates.
///
/// Latency is measured against the pipeline clock (virtual during replay), as
/// delivery time minus originating time. At any snapshot instant
/// `posted = delivered + dropped + queue_len`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub edge: EdgeId,
    pub queue_len: u64,
    pub queue_max: u64,
    pub posted: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub latency_last: TimeSpan,
    pub latency_avg: TimeSpan,
    pub latency_max: TimeSpan,
    /// Latest delivery exceeded the configured highlight threshold
    /// (500 ms by default).
    pub over_threshold: bool,
}

impl EdgeMetrics {
    pub fn zero(edge: EdgeId) -> Self {
        EdgeMetrics {
            edge,
            queue_len: 0,
            queue_max: 0,
            posted: 0,
            delivered: 0,
            dropped: 0,
            latency_last: TimeSpan::ZERO,
            latency_avg: TimeSpan::ZERO,
            latency_max: TimeSpan::ZERO,
            over_threshold: false,
        }
    }

    pub(crate) fn from_stats(edge: EdgeId, stats: &QueueStats) -> Self {
        EdgeMetrics {
            edge,
            queue_len: stats.queue_len,
            queue_max: stats.queue_max,
            posted: stats.posted,
            delivered: stats.delivered,
            dropped: stats.dropped,
            latency_last: stats.latency_last,
            latency_avg: stats.latency_avg,
            latency_max: stats.latency_max,
            over_threshold: stats.over_threshold,
        }
    }
}

/// A node in the topology snapshot; composites nest their children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotNode {
    pub id: u32,
    pub name: String,
    pub is_source: bool,
    pub is_composite: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<SnapshotNode>,
}

/// An edge in the topology snapshot; endpoints reference leaf node ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotEdge {
    pub id: EdgeId,
    pub from_node: u32,
    pub from_port: String,
    pub to_node: u32,
    pub to_port: String,
    pub policy: DeliveryPolicy,
    pub type_name: String,
}

/// The constructed graph as seen at runtime. Composite nesting mirrors
/// encapsulation; leaf ids are the runtime node ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineGraphSnapshot {
    pub nodes: Vec<SnapshotNode>,
    pub edges: Vec<SnapshotEdge>,
}

impl PipelineGraphSnapshot {
    /// All leaf (non-composite) nodes, flattened.
    pub fn leaves(&self) -> Vec<&SnapshotNode> {
        let mut out = Vec::new();
        fn walk<'a>(nodes: &'a [SnapshotNode], out: &mut Vec<&'a SnapshotNode>) {
            for n in nodes {
                if n.is_composite {
                    walk(&n.children, out);
                } else {
                    out.push(n);
                }
            }
        }
        walk(&self.nodes, &mut out);
        out
    }
}

/// Composite snapshot ids live above the leaf id range.
fn group_snapshot_id(leaf_count: usize, group: GroupId) -> u32 {
    leaf_count as u32 + group.0
}

pub(crate) fn build_graph_snapshot(topology: &Topology) -> PipelineGraphSnapshot {
    let leaf_count = topology.nodes.len();

    // Assemble the nesting tree bottom-up: group id -> child nodes.
    let mut group_nodes: Vec<SnapshotNode> = topology
        .groups
        .iter()
        .enumerate()
        .map(|(idx, g)| SnapshotNode {
            id: group_snapshot_id(leaf_count, GroupId(idx as u32)),
            name: g.name.clone(),
            is_source: false,
            is_composite: true,
            children: Vec::new(),
        })
        .collect();

    let mut roots: Vec<SnapshotNode> = Vec::new();
    for (idx, node) in topology.nodes.iter().enumerate() {
        let snapshot = SnapshotNode {
            id: idx as u32,
            name: node.name.clone(),
            is_source: node.is_source,
            is_composite: false,
            children: Vec::new(),
        };
        match node.parent {
            Some(group) => group_nodes[group.0 as usize].children.push(snapshot),
            None => roots.push(snapshot),
        }
    }
    // Fold child groups into their parents, deepest first. Children always
    // have larger ids than their parents (created later), so a reverse sweep
    // suffices.
    for idx in (0..group_nodes.len()).rev() {
        if let Some(parent) = topology.groups[idx].parent {
            let child = group_nodes[idx].clone();
            group_nodes[parent.0 as usize].children.push(child);
            group_nodes[idx].children.clear();
        }
    }
    for (idx, group) in group_nodes.into_iter().enumerate() {
        if topology.groups[idx].parent.is_none() {
            roots.push(group);
        }
    }
    roots.sort_by_key(|n| n.id);

    let edges = topology
        .edges
        .iter()
        .enumerate()
        .map(|(idx, e)| SnapshotEdge {
            id: EdgeId(idx as u32),
            from_node: e.from_node.0,
            from_port: e.from_port_name.clone(),
            to_node: e.to_node.0,
            to_port: e.to_port_name.clone(),
            policy: e.policy,
            type_name: e.type_name.clone(),
        })
        .collect();

    PipelineGraphSnapshot {
        nodes: roots,
        edges,
    }
}
