//! DOT rendering of topology snapshots, with composites as clusters.

use super::{PipelineGraphSnapshot, SnapshotNode};
use std::collections::HashMap;
use std::fmt::Write;

/// How deep to expand composite nesting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Depth {
    All,
    Limit(usize),
}

impl Depth {
    fn allows(&self, level: usize) -> bool {
        match self {
            Depth::All => true,
            Depth::Limit(limit) => level < *limit,
        }
    }
}

/// Renders the snapshot as a DOT digraph. Node labels are component names;
/// edge labels carry the message type and delivery policy. Composites render
/// as clusters down to `depth`, below which they collapse into single nodes.
pub fn export_dot(snapshot: &PipelineGraphSnapshot, depth: Depth) -> String {
    let mut out = String::new();
    writeln!(out, "digraph pipeline {{").unwrap();
    writeln!(out, "    rankdir=LR;").unwrap();
    writeln!(out, "    node [shape=box];").unwrap();

    // Maps every leaf id to the node id that represents it at this depth
    // (itself, or the first collapsed ancestor composite).
    let mut representative: HashMap<u32, String> = HashMap::new();
    for node in &snapshot.nodes {
        render_node(&mut out, node, depth, 0, 1, &mut representative, None);
    }

    for edge in &snapshot.edges {
        let from = representative
            .get(&edge.from_node)
            .cloned()
            .unwrap_or_else(|| format!("n{}", edge.from_node));
        let to = representative
            .get(&edge.to_node)
            .cloned()
            .unwrap_or_else(|| format!("n{}", edge.to_node));
        if from == to {
            // internal wiring of a collapsed composite
            continue;
        }
        writeln!(
            out,
            "    {} -> {} [label=\"{}\\n{}\"];",
            from,
            to,
            escape(&edge.type_name),
            escape(&edge.policy.label())
        )
        .unwrap();
    }
    writeln!(out, "}}").unwrap();
    out
}

fn render_node(
    out: &mut String,
    node: &SnapshotNode,
    depth: Depth,
    level: usize,
    indent: usize,
    representative: &mut HashMap<u32, String>,
    collapsed_into: Option<&str>,
) {
    let pad = "    ".repeat(indent);
    if !node.is_composite {
        let id = match collapsed_into {
            Some(repr) => repr.to_string(),
            None => {
                let id = format!("n{}", node.id);
                writeln!(out, "{pad}{} [label=\"{}\"];", id, escape(&node.name)).unwrap();
                id
            }
        };
        representative.insert(node.id, id);
        return;
    }

    if let Some(repr) = collapsed_into {
        for child in &node.children {
            render_node(out, child, depth, level + 1, indent, representative, Some(repr));
        }
        return;
    }

    if depth.allows(level) {
        writeln!(out, "{pad}subgraph cluster_{} {{", node.id).unwrap();
        writeln!(out, "{pad}    label=\"{}\";", escape(&node.name)).unwrap();
        for child in &node.children {
            render_node(out, child, depth, level + 1, indent + 1, representative, None);
        }
        writeln!(out, "{pad}}}").unwrap();
    } else {
        let id = format!("c{}", node.id);
        writeln!(
            out,
            "{pad}{} [label=\"{}\" shape=component];",
            id,
            escape(&node.name)
        )
        .unwrap();
        for child in &node.children {
            render_node(out, child, depth, level + 1, indent, representative, Some(&id));
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diag::SnapshotEdge;
    use crate::ids::EdgeId;
    use crate::sched::DeliveryPolicy;

    fn leaf(id: u32, name: &str) -> SnapshotNode {
        SnapshotNode {
            id,
            name: name.into(),
            is_source: false,
            is_composite: false,
            children: Vec::new(),
        }
    }

    #[test]
    fn two_nodes_one_edge() {
        let snapshot = PipelineGraphSnapshot {
            nodes: vec![leaf(0, "gen"), leaf(1, "sink")],
            edges: vec![SnapshotEdge {
                id: EdgeId(0),
                from_node: 0,
                from_port: "out".into(),
                to_node: 1,
                to_port: "in".into(),
                policy: DeliveryPolicy::Unlimited,
                type_name: "f64".into(),
            }],
        };
        let dot = export_dot(&snapshot, Depth::All);
        assert_eq!(dot.matches("[label=\"gen\"]").count(), 1);
        assert_eq!(dot.matches("[label=\"sink\"]").count(), 1);
        assert_eq!(dot.matches("->").count(), 1);
        assert!(dot.contains("n0 -> n1"));
    }

    #[test]
    fn depth_zero_collapses_composites() {
        let composite = SnapshotNode {
            id: 3,
            name: "stage".into(),
            is_source: false,
            is_composite: true,
            children: vec![leaf(1, "stage/a"), leaf(2, "stage/b")],
        };
        let snapshot = PipelineGraphSnapshot {
            nodes: vec![leaf(0, "gen"), composite],
            edges: vec![
                SnapshotEdge {
                    id: EdgeId(0),
                    from_node: 0,
                    from_port: "out".into(),
                    to_node: 1,
                    to_port: "in".into(),
                    policy: DeliveryPolicy::Unlimited,
                    type_name: "f64".into(),
                },
                SnapshotEdge {
                    id: EdgeId(1),
                    from_node: 1,
                    from_port: "out".into(),
                    to_node: 2,
                    to_port: "in".into(),
                    policy: DeliveryPolicy::Unlimited,
                    type_name: "f64".into(),
                },
            ],
        };
        let collapsed = export_dot(&snapshot, Depth::Limit(0));
        assert!(collapsed.contains("c3 [label=\"stage\""));
        assert!(!collapsed.contains("cluster_3"));
        // the internal a->b edge disappears; gen -> stage remains
        assert_eq!(collapsed.matches("->").count(), 1);
        assert!(collapsed.contains("n0 -> c3"));

        let expanded = export_dot(&snapshot, Depth::All);
        assert!(expanded.contains("subgraph cluster_3"));
        assert_eq!(expanded.matches("->").count(), 2);
    }
}
