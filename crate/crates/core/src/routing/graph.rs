use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;

/// Tolerance used when comparing path costs.
pub const COST_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Source,
    Consumer,
    #[default]
    Idle,
    PassThrough,
    Queued,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(default)]
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    #[serde(default = "unit_weight")]
    pub weight: f64,
    /// Connection probability; rendered in snapshots, ignored by routing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

fn unit_weight() -> f64 {
    1.0
}

/// Topology file contents: flat node and edge lists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TopologyDoc {
    #[serde(default)]
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub edges: Vec<Edge>,
}

impl TopologyDoc {
    /// Read a JSON (`.json`) or TOML (anything else) topology file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TopologyError::Io(e.to_string()))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| TopologyError::Parse(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| TopologyError::Parse(e.to_string()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("edge {a}-{b} references unknown node {missing}")]
    DanglingEndpoint { a: NodeId, b: NodeId, missing: NodeId },
    #[error("edge {a}-{b} has invalid weight {weight} (must be finite and positive)")]
    InvalidWeight { a: NodeId, b: NodeId, weight: f64 },
    #[error("edge {a}-{b} has probability {p} outside [0, 1]")]
    InvalidProbability { a: NodeId, b: NodeId, p: f64 },
    #[error("edge {0}-{0} is a self loop")]
    SelfLoop(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown topology preset `{0}`")]
    UnknownPreset(String),
    #[error("cannot read topology: {0}")]
    Io(String),
    #[error("cannot parse topology: {0}")]
    Parse(String),
}

/// Undirected weighted graph with a role per node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyGraph {
    nodes: Vec<Node>,
    index: BTreeMap<NodeId, usize>,
    edges: Vec<Edge>,
    // Neighbour lists sorted by node id.
    adj: Vec<Vec<(usize, f64)>>,
}

/// A path from `nodes[0]` to its last element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortestPath {
    pub nodes: Vec<NodeId>,
    pub cost: f64,
}

impl ShortestPath {
    pub fn hops(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }
}

impl EnergyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: NodeId, role: Role) -> Result<(), TopologyError> {
        if self.index.contains_key(&id) {
            return Err(TopologyError::DuplicateNode(id));
        }
        self.index.insert(id, self.nodes.len());
        self.nodes.push(Node { id, role });
        self.adj.push(Vec::new());
        Ok(())
    }

    pub fn add_edge(&mut self, edge: Edge) -> Result<(), TopologyError> {
        let Edge { a, b, weight, probability } = edge;
        for end in [a, b] {
            if !self.index.contains_key(&end) {
                return Err(TopologyError::DanglingEndpoint { a, b, missing: end });
            }
        }
        if a == b {
            return Err(TopologyError::SelfLoop(a));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(TopologyError::InvalidWeight { a, b, weight });
        }
        if let Some(p) = probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(TopologyError::InvalidProbability { a, b, p });
            }
        }
        let (ia, ib) = (self.index[&a], self.index[&b]);
        insert_sorted(&mut self.adj[ia], ib, weight, &self.nodes);
        insert_sorted(&mut self.adj[ib], ia, weight, &self.nodes);
        self.edges.push(edge);
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn role(&self, id: NodeId) -> Option<Role> {
        self.index.get(&id).map(|&i| self.nodes[i].role)
    }

    pub fn set_role(&mut self, id: NodeId, role: Role) -> Result<(), TopologyError> {
        let i = *self.index.get(&id).ok_or(TopologyError::UnknownNode(id))?;
        self.nodes[i].role = role;
        Ok(())
    }

    /// Set every node to [`Role::Idle`].
    pub fn clear_roles(&mut self) {
        for n in &mut self.nodes {
            n.role = Role::Idle;
        }
    }

    pub fn nodes_with_role(&self, role: Role) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.nodes.iter().filter(|n| n.role == role).map(|n| n.id).collect();
        ids.sort_unstable();
        ids
    }

    /// Neighbours of `id` in ascending id order, with edge weights. Parallel
    /// edges keep only the lightest.
    pub fn neighbors(&self, id: NodeId) -> Vec<(NodeId, f64)> {
        match self.index.get(&id) {
            Some(&i) => self.adj[i].iter().map(|&(j, w)| (self.nodes[j].id, w)).collect(),
            None => Vec::new(),
        }
    }

    pub fn edge_weight(&self, a: NodeId, b: NodeId) -> Option<f64> {
        let (&ia, &ib) = (self.index.get(&a)?, self.index.get(&b)?);
        self.adj[ia].iter().find(|&&(j, _)| j == ib).map(|&(_, w)| w)
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.edge_weight(a, b).is_some()
    }

    /// True for the empty graph and for graphs with one component.
    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.nodes.len()
    }

    /// Shortest-path cost from every node to `target`, indexed like
    /// [`nodes`](Self::nodes). Unreachable nodes get infinity.
    fn distances_to(&self, target: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[target] = 0.0;
        heap.push(HeapItem { cost: 0.0, node: target });
        while let Some(HeapItem { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for &(v, w) in &self.adj[node] {
                let c = cost + w;
                if c < dist[v] {
                    dist[v] = c;
                    heap.push(HeapItem { cost: c, node: v });
                }
            }
        }
        dist
    }

    /// Costs from `from` to every node, keyed by node id. Unreachable
    /// nodes are omitted.
    pub fn distances_from(&self, from: NodeId) -> Result<BTreeMap<NodeId, f64>, TopologyError> {
        let i = *self.index.get(&from).ok_or(TopologyError::UnknownNode(from))?;
        Ok(self
            .distances_to(i)
            .into_iter()
            .enumerate()
            .filter(|(_, d)| d.is_finite())
            .map(|(j, d)| (self.nodes[j].id, d))
            .collect())
    }
}

fn insert_sorted(list: &mut Vec<(usize, f64)>, j: usize, w: f64, nodes: &[Node]) {
    if let Some(slot) = list.iter_mut().find(|(k, _)| *k == j) {
        slot.1 = slot.1.min(w);
        return;
    }
    let pos = list.partition_point(|&(k, _)| nodes[k].id < nodes[j].id);
    list.insert(pos, (j, w));
}

#[derive(Debug, Clone, Copy)]
struct HeapItem {
    cost: f64,
    node: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    // Reversed for a min-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Build and validate a graph from a topology document.
pub fn load_topology(doc: &TopologyDoc) -> Result<EnergyGraph, TopologyError> {
    let mut g = EnergyGraph::new();
    for n in &doc.nodes {
        g.add_node(n.id, n.role)?;
    }
    for &e in &doc.edges {
        g.add_edge(e)?;
    }
    Ok(g)
}

/// Minimum-cost path from `src` to `dst`, or `None` when `dst` cannot be
/// reached. Among equal-cost paths the lexicographically smallest node
/// sequence wins.
pub fn shortest_path(
    g: &EnergyGraph,
    src: NodeId,
    dst: NodeId,
) -> Result<Option<ShortestPath>, TopologyError> {
    let s = *g.index.get(&src).ok_or(TopologyError::UnknownNode(src))?;
    let t = *g.index.get(&dst).ok_or(TopologyError::UnknownNode(dst))?;
    let dist = g.distances_to(t);
    if !dist[s].is_finite() {
        return Ok(None);
    }
    // Walk forward from the source, always stepping to the smallest-id
    // neighbour that stays on some shortest path. Distances strictly
    // decrease along the walk, so it terminates.
    let mut nodes = vec![src];
    let mut cost = 0.0;
    let mut u = s;
    while u != t {
        let (v, w) = g.adj[u]
            .iter()
            .copied()
            .filter(|&(v, w)| dist[v] < dist[u] && (w + dist[v] - dist[u]).abs() <= COST_EPS)
            .min_by_key(|&(v, _)| g.nodes[v].id)
            .expect("a shortest-path successor exists for every reachable node");
        cost += w;
        nodes.push(g.nodes[v].id);
        u = v;
    }
    Ok(Some(ShortestPath { nodes, cost }))
}
