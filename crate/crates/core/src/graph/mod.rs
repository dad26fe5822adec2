//! The two market graphs: the pruned competition graph from running projects
//! to targets, and the layered propagation tree over historical projects.

mod competition;
mod dump;
mod propagation;

pub use competition::{build_competition_graph, CompetitionGraph, PruningMode, JUST_FUNDED_WINDOW};
pub use dump::{dump_graphs, GraphDump};
pub use propagation::{build_propagation_tree, tree_layers, PropagationTree, TreeEdge};
