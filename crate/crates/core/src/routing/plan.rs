use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::graph::{shortest_path, EnergyGraph, NodeId, Role, TopologyError};
use crate::config::ENERGY_EPS;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossModel {
    /// One flat loss fraction per path.
    #[default]
    PerPath,
    /// The loss fraction compounds on every hop.
    PerHop,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsumerOrder {
    #[default]
    Descending,
    Ascending,
    /// The order the demands were given in.
    Arrival,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoutingParams {
    pub path_loss: f64,
    pub max_users_per_source: usize,
    /// Bound on total energy sent; `None` is unlimited.
    pub global_capacity: Option<f64>,
    pub loss_model: LossModel,
    pub consumer_order: ConsumerOrder,
}

impl Default for RoutingParams {
    fn default() -> Self {
        Self {
            path_loss: 0.06,
            max_users_per_source: 5,
            global_capacity: None,
            loss_model: LossModel::PerPath,
            consumer_order: ConsumerOrder::Descending,
        }
    }
}

impl RoutingParams {
    /// Fraction of the sent energy that reaches the consumer over `hops`.
    pub fn efficiency(&self, hops: usize) -> f64 {
        match self.loss_model {
            LossModel::PerPath => 1.0 - self.path_loss,
            LossModel::PerHop => (1.0 - self.path_loss).powi(hops as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub consumer: NodeId,
    pub source: NodeId,
    /// Source first, consumer last.
    pub path: Vec<NodeId>,
    pub sent: f64,
    pub delivered: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutingPlan {
    pub assignments: Vec<Assignment>,
    pub queued: Vec<NodeId>,
}

impl RoutingPlan {
    pub fn total_sent(&self) -> f64 {
        self.assignments.iter().map(|a| a.sent).sum()
    }

    pub fn load_per_source(&self) -> BTreeMap<NodeId, usize> {
        let mut load = BTreeMap::new();
        for a in &self.assignments {
            *load.entry(a.source).or_insert(0) += 1;
        }
        load
    }

    /// One display role per node: sources in the graph or the plan, then
    /// receiving consumers, queued consumers, and intermediate path nodes.
    pub fn node_roles(&self, g: &EnergyGraph) -> BTreeMap<NodeId, Role> {
        let mut roles: BTreeMap<NodeId, Role> = g
            .nodes()
            .iter()
            .map(|n| (n.id, if n.role == Role::Source { Role::Source } else { Role::Idle }))
            .collect();
        let mut set = |id: NodeId, role: Role| {
            if let Some(r) = roles.get_mut(&id) {
                if rank(role) < rank(*r) {
                    *r = role;
                }
            }
        };
        for a in &self.assignments {
            set(a.source, Role::Source);
            set(a.consumer, Role::Consumer);
            if a.path.len() > 2 {
                for &n in &a.path[1..a.path.len() - 1] {
                    set(n, Role::PassThrough);
                }
            }
        }
        for &q in &self.queued {
            set(q, Role::Queued);
        }
        roles
    }
}

fn rank(role: Role) -> u8 {
    match role {
        Role::Source => 0,
        Role::Consumer => 1,
        Role::Queued => 2,
        Role::PassThrough => 3,
        Role::Idle => 4,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoutingError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("demand for node {node} must be positive, got {demand}")]
    NonPositiveDemand { node: NodeId, demand: f64 },
    #[error("node {0} has more than one demand")]
    DuplicateConsumer(NodeId),
    #[error("graph has no source node")]
    NoSource,
    #[error("path loss {0} outside [0, 1)")]
    InvalidLoss(f64),
}

/// Assign each consumer to the nearest source with a free slot.
///
/// Sources are the nodes whose role is [`Role::Source`]. Ties in path cost
/// go to the smaller source id. A consumer is queued when no reachable
/// source has a free slot or its energy would push the total sent past
/// the global capacity.
pub fn route(
    g: &EnergyGraph,
    demands: &[(NodeId, f64)],
    params: &RoutingParams,
) -> Result<RoutingPlan, RoutingError> {
    if !(0.0..1.0).contains(&params.path_loss) {
        return Err(RoutingError::InvalidLoss(params.path_loss));
    }
    let sources = g.nodes_with_role(Role::Source);
    if sources.is_empty() {
        return Err(RoutingError::NoSource);
    }
    let mut seen = BTreeSet::new();
    for &(node, demand) in demands {
        if !g.contains(node) {
            return Err(TopologyError::UnknownNode(node).into());
        }
        if !(demand > 0.0 && demand.is_finite()) {
            return Err(RoutingError::NonPositiveDemand { node, demand });
        }
        if !seen.insert(node) {
            return Err(RoutingError::DuplicateConsumer(node));
        }
    }

    let mut order: Vec<(NodeId, f64)> = demands.to_vec();
    match params.consumer_order {
        ConsumerOrder::Descending => {
            order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)))
        }
        ConsumerOrder::Ascending => order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))),
        ConsumerOrder::Arrival => {}
    }

    let mut load: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut plan = RoutingPlan::default();
    let mut total_sent = 0.0;
    for (consumer, demand) in order {
        let dist = g.distances_from(consumer)?;
        let mut candidates: Vec<(f64, NodeId)> = sources
            .iter()
            .filter(|s| load.get(s).copied().unwrap_or(0) < params.max_users_per_source)
            .filter_map(|&s| dist.get(&s).map(|&d| (d, s)))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some(&(_, source)) = candidates.first() else {
            plan.queued.push(consumer);
            continue;
        };
        let path = shortest_path(g, source, consumer)?.expect("source was reachable");
        let efficiency = params.efficiency(path.hops());
        let sent = demand / efficiency;
        if let Some(cap) = params.global_capacity {
            if total_sent + sent > cap + ENERGY_EPS {
                plan.queued.push(consumer);
                continue;
            }
        }
        total_sent += sent;
        *load.entry(source).or_insert(0) += 1;
        plan.assignments.push(Assignment {
            consumer,
            source,
            path: path.nodes,
            sent,
            delivered: sent * efficiency,
        });
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::graph::Edge;

    fn star(n_consumers: u32) -> EnergyGraph {
        let mut g = EnergyGraph::new();
        g.add_node(0, Role::Source).unwrap();
        for i in 1..=n_consumers {
            g.add_node(i, Role::Idle).unwrap();
            g.add_edge(Edge { a: 0, b: i, weight: 1.0, probability: None }).unwrap();
        }
        g
    }

    #[test]
    fn fan_out_limit_queues_the_sixth() {
        let g = star(6);
        let demands: Vec<_> = (1..=6).map(|i| (i, 1.0)).collect();
        let plan = route(&g, &demands, &RoutingParams::default()).unwrap();
        assert_eq!(plan.assignments.len(), 5);
        assert_eq!(plan.queued, [6]);
    }

    #[test]
    fn loss_arithmetic() {
        let g = star(1);
        let plan = route(&g, &[(1, 0.94)], &RoutingParams::default()).unwrap();
        let a = &plan.assignments[0];
        assert!((a.sent - 1.0).abs() < 1e-12);
        assert!((a.delivered - 0.94).abs() < 1e-12);
        assert_eq!(a.path, [0, 1]);
    }

    #[test]
    fn overflow_spills_to_next_nearest_source() {
        // Sources 0 and 8; consumers 1..=7 hang off 0, 8 reaches them via 0.
        let mut g = EnergyGraph::new();
        g.add_node(0, Role::Source).unwrap();
        g.add_node(8, Role::Source).unwrap();
        for i in 1..=7 {
            g.add_node(i, Role::Idle).unwrap();
            g.add_edge(Edge { a: 0, b: i, weight: 1.0, probability: None }).unwrap();
        }
        g.add_edge(Edge { a: 0, b: 8, weight: 1.0, probability: None }).unwrap();
        let demands: Vec<_> = (1..=7).map(|i| (i, 1.0)).collect();
        let plan = route(&g, &demands, &RoutingParams::default()).unwrap();
        assert_eq!(plan.load_per_source(), BTreeMap::from([(0, 5), (8, 2)]));
        assert!(plan.queued.is_empty());
        let far: Vec<_> = plan.assignments.iter().filter(|a| a.source == 8).collect();
        assert_eq!(far[0].path, [8, 0, 6]);
        assert_eq!(far[1].path, [8, 0, 7]);
        assert_eq!(plan.node_roles(&g)[&0], Role::Source);
    }

    #[test]
    fn global_capacity_queues_large_demands() {
        let g = star(3);
        let params = RoutingParams {
            path_loss: 0.0,
            global_capacity: Some(1.5),
            ..RoutingParams::default()
        };
        let plan = route(&g, &[(1, 1.0), (2, 0.8), (3, 0.5)], &params).unwrap();
        let served: Vec<_> = plan.assignments.iter().map(|a| a.consumer).collect();
        assert_eq!(served, [1, 3]);
        assert_eq!(plan.queued, [2]);
        assert!(plan.total_sent() <= 1.5);
    }

    #[test]
    fn source_can_consume() {
        let mut g = star(2);
        g.add_node(9, Role::Source).unwrap();
        g.add_edge(Edge { a: 9, b: 2, weight: 1.0, probability: None }).unwrap();
        let plan = route(&g, &[(0, 0.5), (1, 0.5)], &RoutingParams::default()).unwrap();
        assert_eq!(plan.assignments[0].path, [0]);
        assert_eq!(plan.assignments[1].source, 0);
        assert!(plan.assignments.iter().any(|a| a.source == 0 && a.consumer == 0));
    }

    #[test]
    fn per_hop_loss_compounds() {
        let mut g = EnergyGraph::new();
        for i in 0..3 {
            g.add_node(i, if i == 0 { Role::Source } else { Role::Idle }).unwrap();
        }
        g.add_edge(Edge { a: 0, b: 1, weight: 1.0, probability: None }).unwrap();
        g.add_edge(Edge { a: 1, b: 2, weight: 1.0, probability: None }).unwrap();
        let params = RoutingParams {
            loss_model: LossModel::PerHop,
            path_loss: 0.1,
            ..RoutingParams::default()
        };
        let plan = route(&g, &[(2, 0.81)], &params).unwrap();
        assert!((plan.assignments[0].sent - 1.0).abs() < 1e-12);
        assert_eq!(plan.node_roles(&g)[&1], Role::PassThrough);
    }

    #[test]
    fn consumer_orders() {
        let g = star(6);
        let demands = [(1, 0.2), (2, 0.9), (3, 0.5), (4, 0.5), (5, 0.1), (6, 0.3)];
        let run = |order| {
            let params = RoutingParams { consumer_order: order, ..RoutingParams::default() };
            route(&g, &demands, &params).unwrap().queued
        };
        assert_eq!(run(ConsumerOrder::Descending), [5]);
        assert_eq!(run(ConsumerOrder::Ascending), [2]);
        assert_eq!(run(ConsumerOrder::Arrival), [6]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = star(2);
        let p = RoutingParams::default();
        assert_eq!(
            route(&g, &[(1, 0.0)], &p),
            Err(RoutingError::NonPositiveDemand { node: 1, demand: 0.0 })
        );
        assert_eq!(route(&g, &[(1, 0.5), (1, 0.2)], &p), Err(RoutingError::DuplicateConsumer(1)));
        assert!(matches!(route(&g, &[(5, 0.5)], &p), Err(RoutingError::Topology(_))));
        let bad = RoutingParams { path_loss: 1.0, ..p };
        assert_eq!(route(&g, &[(1, 0.5)], &bad), Err(RoutingError::InvalidLoss(1.0)));
        let mut idle = g.clone();
        idle.clear_roles();
        assert_eq!(route(&idle, &[(1, 0.5)], &p), Err(RoutingError::NoSource));
    }

    #[test]
    fn unreachable_consumer_is_queued() {
        let mut g = star(1);
        g.add_node(5, Role::Idle).unwrap();
        let plan = route(&g, &[(5, 0.5)], &RoutingParams::default()).unwrap();
        assert_eq!(plan.queued, [5]);
        assert_eq!(plan.node_roles(&g)[&5], Role::Queued);
    }
}
