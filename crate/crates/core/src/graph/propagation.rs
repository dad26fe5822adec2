use std::collections::BTreeSet;

use crate::market::{MarketWindow, ProjectCatalog};

/// Lower (exclusive) bound of an edge's time gap.
const BAND_LOW: i64 = MarketWindow::N_H * MarketWindow::DELTA;
/// Upper (exclusive) bound of an edge's time gap.
const BAND_HIGH: i64 = 2 * MarketWindow::N_H * MarketWindow::DELTA;

/// A directed edge: `child` feeds `parent`. Indices refer to
/// [`PropagationTree::nodes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TreeEdge {
    pub child: usize,
    pub parent: usize,
}

/// Layered DAG over the targets (roots) and the observable projects that
/// could be attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropagationTree {
    /// Roots first (target order), then attached nodes in attachment order.
    pub nodes: Vec<String>,
    /// Node times; every root carries the window's reference time.
    pub times: Vec<i64>,
    /// Layer index; roots are 0.
    pub depth: Vec<usize>,
    /// Sorted, deduplicated edges.
    pub edges: Vec<TreeEdge>,
    /// For each non-root node, the parent chosen by the shortest-gap rule.
    pub argmin_parent: Vec<Option<usize>>,
    pub n_roots: usize,
    /// Observable projects that never fell in band of an attached node.
    pub dropped: Vec<String>,
}

impl PropagationTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Children of every node (the senders in message passing).
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            out[e.parent].push(e.child);
        }
        out
    }

    pub fn parents(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            out[e.child].push(e.parent);
        }
        out
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }
}

/// Builds the propagation tree layer by layer.
///
/// At step `k` every unattached observable node `i` looks for nodes `j`
/// already in the tree (attached before step `k`) with
/// `24h < T_j - T_i < 48h`. At `k = 1` it links to every in-band root; at
/// each step it links to the in-band node with the smallest gap (ties go to
/// the smaller id) and joins the next layer. Nodes that find no in-band
/// node are retried at later steps and end up in `dropped` if never placed.
pub fn build_propagation_tree(window: &MarketWindow, catalog: &ProjectCatalog) -> PropagationTree {
    let t_ref = window.reference_time();
    let mut nodes: Vec<String> = window.targets().to_vec();
    let n_roots = nodes.len();
    let mut times = vec![t_ref; n_roots];
    let mut depth = vec![0; n_roots];
    let mut argmin_parent = vec![None; n_roots];
    let mut edges = BTreeSet::new();

    // Tree members sorted by (time, id) so the first in-band member is the
    // argmin with the documented tie-break.
    let mut members: Vec<(i64, String, usize)> = nodes
        .iter()
        .enumerate()
        .map(|(i, id)| (t_ref, id.clone(), i))
        .collect();
    members.sort();

    let mut pending: Vec<(i64, String)> = window
        .observable_ids
        .iter()
        .map(|id| (catalog.expect(id).launch_time, id.clone()))
        .collect();

    for k in 1..=window.history_days as usize {
        let mut joined = Vec::new();
        pending.retain(|(t_i, id)| {
            let lo = members.partition_point(|(t_j, _, _)| t_j - t_i <= BAND_LOW);
            let hi = members.partition_point(|(t_j, _, _)| t_j - t_i < BAND_HIGH);
            if lo >= hi {
                return true;
            }
            let idx = nodes.len() + joined.len();
            if k == 1 {
                for (_, _, j) in &members[lo..hi] {
                    if *j < n_roots {
                        edges.insert(TreeEdge {
                            child: idx,
                            parent: *j,
                        });
                    }
                }
            }
            let parent = members[lo].2;
            edges.insert(TreeEdge { child: idx, parent });
            joined.push((*t_i, id.clone(), parent));
            false
        });
        for (t_i, id, parent) in joined {
            let idx = nodes.len();
            members.push((t_i, id.clone(), idx));
            nodes.push(id);
            times.push(t_i);
            depth.push(k);
            argmin_parent.push(Some(parent));
        }
        members.sort();
    }

    PropagationTree {
        nodes,
        times,
        depth,
        edges: edges.into_iter().collect(),
        argmin_parent,
        n_roots,
        dropped: pending.into_iter().map(|(_, id)| id).collect(),
    }
}

/// Node ids grouped by depth; layer 0 holds the roots.
pub fn tree_layers(tree: &PropagationTree) -> Vec<Vec<String>> {
    let mut layers = vec![Vec::new(); tree.max_depth() + 1];
    for (i, id) in tree.nodes.iter().enumerate() {
        layers[tree.depth[i]].push(id.clone());
    }
    layers
}
