//! The 39-bus New England transmission test system.

use super::graph::{Edge, EnergyGraph, Node, NodeId, Role, TopologyDoc, TopologyError, load_topology};

/// Buses 30 to 39 carry the ten generators.
pub const GENERATOR_BUSES: [NodeId; 10] = [30, 31, 32, 33, 34, 35, 36, 37, 38, 39];

/// Branch list (lines and transformers), unit weights.
pub const IEEE39_BRANCHES: [(NodeId, NodeId); 46] = [
    (1, 2),
    (1, 39),
    (2, 3),
    (2, 25),
    (2, 30),
    (3, 4),
    (3, 18),
    (4, 5),
    (4, 14),
    (5, 6),
    (5, 8),
    (6, 7),
    (6, 11),
    (6, 31),
    (7, 8),
    (8, 9),
    (9, 39),
    (10, 11),
    (10, 13),
    (10, 32),
    (12, 11),
    (12, 13),
    (13, 14),
    (14, 15),
    (15, 16),
    (16, 17),
    (16, 19),
    (16, 21),
    (16, 24),
    (17, 18),
    (17, 27),
    (19, 20),
    (19, 33),
    (20, 34),
    (21, 22),
    (22, 23),
    (22, 35),
    (23, 24),
    (23, 36),
    (25, 26),
    (25, 37),
    (26, 27),
    (26, 28),
    (26, 29),
    (28, 29),
    (29, 38),
];

pub fn ieee39_doc() -> TopologyDoc {
    TopologyDoc {
        nodes: (1..=39).map(|id| Node { id, role: Role::Idle }).collect(),
        edges: IEEE39_BRANCHES
            .iter()
            .map(|&(a, b)| Edge { a, b, weight: 1.0, probability: None })
            .collect(),
    }
}

/// All nodes idle, unit weights.
pub fn ieee39() -> EnergyGraph {
    load_topology(&ieee39_doc()).expect("built-in topology is valid")
}

/// Resolve a built-in topology by name.
pub fn preset_topology(name: &str) -> Result<EnergyGraph, TopologyError> {
    match name {
        "ieee39" => Ok(ieee39()),
        other => Err(TopologyError::UnknownPreset(other.to_string())),
    }
}
