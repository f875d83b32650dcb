use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::graph::{Edge, EnergyGraph, NodeId, Role};
use super::plan::RoutingPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotFormat {
    Dot,
    Json,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SnapshotError {
    #[error("unknown format `{0}` (expected dot or json)")]
    UnknownFormat(String),
    #[error("invalid snapshot: {0}")]
    Parse(String),
}

impl FromStr for SnapshotFormat {
    type Err = SnapshotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(SnapshotFormat::Dot),
            "json" => Ok(SnapshotFormat::Json),
            _ => Err(SnapshotError::UnknownFormat(s.to_string())),
        }
    }
}

pub fn role_color(role: Role) -> &'static str {
    match role {
        Role::Source => "green",
        Role::Consumer => "orange",
        Role::Idle => "lightyellow",
        Role::Queued => "red",
        Role::PassThrough => "blue",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotNode {
    pub id: NodeId,
    pub role: Role,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub nodes: Vec<SnapshotNode>,
    pub edges: Vec<Edge>,
    pub plan: RoutingPlan,
}

impl Snapshot {
    pub fn new(plan: &RoutingPlan, g: &EnergyGraph) -> Self {
        let nodes = plan
            .node_roles(g)
            .into_iter()
            .map(|(id, role)| SnapshotNode {
                id,
                role,
                color: role_color(role).to_string(),
            })
            .collect();
        Self {
            nodes,
            edges: g.edges().to_vec(),
            plan: plan.clone(),
        }
    }
}

/// Render `plan` over `g`. Nodes are filled with their role colour, grid
/// lines are undirected (labelled with their probability when known) and
/// each assignment's path is drawn as directed arrows.
pub fn export_snapshot(plan: &RoutingPlan, g: &EnergyGraph, format: SnapshotFormat) -> String {
    let snap = Snapshot::new(plan, g);
    match format {
        SnapshotFormat::Json => {
            serde_json::to_string_pretty(&snap).expect("snapshot serializes")
        }
        SnapshotFormat::Dot => to_dot(&snap),
    }
}

fn to_dot(snap: &Snapshot) -> String {
    let mut out = String::from("digraph dpn {\n  node [shape=circle, style=filled];\n");
    for n in &snap.nodes {
        let _ = writeln!(
            out,
            "  {} [fillcolor=\"{}\", tooltip=\"{}\"];",
            n.id,
            n.color,
            role_name(n.role)
        );
    }
    for e in &snap.edges {
        match e.probability {
            Some(p) => {
                let _ = writeln!(out, "  {} -> {} [dir=none, color=gray, label=\"{p}\"];", e.a, e.b);
            }
            None => {
                let _ = writeln!(out, "  {} -> {} [dir=none, color=gray];", e.a, e.b);
            }
        }
    }
    for a in &snap.plan.assignments {
        for w in a.path.windows(2) {
            let _ = writeln!(
                out,
                "  {} -> {} [color=lightblue, penwidth=2, constraint=false];",
                w[0], w[1]
            );
        }
    }
    out.push_str("}\n");
    out
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::Source => "source",
        Role::Consumer => "consumer",
        Role::Idle => "idle",
        Role::PassThrough => "pass_through",
        Role::Queued => "queued",
    }
}

/// Parse a JSON snapshot produced by [`export_snapshot`].
pub fn import_snapshot(json: &str) -> Result<Snapshot, SnapshotError> {
    serde_json::from_str(json).map_err(|e| SnapshotError::Parse(e.to_string()))
}
