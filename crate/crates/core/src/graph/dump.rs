use serde::Serialize;

use super::{CompetitionGraph, PropagationTree};
use crate::market::HOUR;

/// Inspection-friendly description of one window's graphs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphDump {
    pub reference_time: i64,
    pub targets: Vec<String>,
    pub competitors: Vec<String>,
    /// `[target, competitor]` pairs.
    pub competition_edges: Vec<[String; 2]>,
    pub tree_nodes: Vec<DumpNode>,
    pub tree_edges: Vec<DumpEdge>,
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DumpNode {
    pub id: String,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DumpEdge {
    pub child: String,
    pub parent: String,
    pub gap_hours: f64,
}

pub fn dump_graphs(
    reference_time: i64,
    cg: &CompetitionGraph,
    tree: &PropagationTree,
) -> GraphDump {
    let mut competition_edges = Vec::new();
    for (g, target) in cg.targets.iter().enumerate() {
        for j in cg.neighbors(g) {
            competition_edges.push([target.clone(), cg.competitors[j].clone()]);
        }
    }
    GraphDump {
        reference_time,
        targets: cg.targets.clone(),
        competitors: cg.competitors.clone(),
        competition_edges,
        tree_nodes: tree
            .nodes
            .iter()
            .zip(&tree.depth)
            .map(|(id, &depth)| DumpNode {
                id: id.clone(),
                depth,
            })
            .collect(),
        tree_edges: tree
            .edges
            .iter()
            .map(|e| DumpEdge {
                child: tree.nodes[e.child].clone(),
                parent: tree.nodes[e.parent].clone(),
                gap_hours: (tree.times[e.parent] - tree.times[e.child]) as f64 / HOUR as f64,
            })
            .collect(),
        dropped: tree.dropped.clone(),
    }
}
