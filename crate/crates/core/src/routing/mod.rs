//! Energy path planning over a graph of sources, consumers and
//! pass-through nodes.

mod graph;
mod ieee39;
mod plan;
mod snapshot;

pub use graph::{
    load_topology, shortest_path, Edge, EnergyGraph, Node, NodeId, Role, ShortestPath, TopologyDoc,
    TopologyError, COST_EPS,
};
pub use ieee39::{ieee39, ieee39_doc, preset_topology, GENERATOR_BUSES, IEEE39_BRANCHES};
pub use plan::{route, Assignment, ConsumerOrder, LossModel, RoutingError, RoutingParams, RoutingPlan};
pub use snapshot::{
    export_snapshot, import_snapshot, role_color, Snapshot, SnapshotError, SnapshotFormat, SnapshotNode,
};
