//! Capacity-capped grant decisions and the request queue.
//!
//! Grants are all-or-nothing: a request is either served in full or queued
//! in full. Queued and fresh requests compete in one pool; queue seniority
//! only breaks ties between equal amounts.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Round, UserId, ENERGY_EPS};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationPolicy {
    SmallestFirst,
    LargestFirst,
    GeneticOptimizer,
}

impl AllocationPolicy {
    /// Greedy ordering used wherever a greedy pass is needed under this
    /// policy (storage discharge, GA seeding).
    pub fn greedy_order(self) -> GreedyOrder {
        match self {
            AllocationPolicy::LargestFirst => GreedyOrder::LargestFirst,
            AllocationPolicy::SmallestFirst | AllocationPolicy::GeneticOptimizer => {
                GreedyOrder::SmallestFirst
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyOrder {
    SmallestFirst,
    LargestFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub user_id: UserId,
    pub amount: f64,
    /// Round the request entered the queue; `None` for a fresh request.
    pub queued_since: Option<Round>,
}

impl PendingRequest {
    pub fn fresh(user_id: UserId, amount: f64) -> Self {
        Self {
            user_id,
            amount,
            queued_since: None,
        }
    }

    pub fn queued(user_id: UserId, amount: f64, since: Round) -> Self {
        Self {
            user_id,
            amount,
            queued_since: Some(since),
        }
    }
}

/// Older queue entries first, fresh requests last.
fn seniority(a: &PendingRequest, b: &PendingRequest) -> Ordering {
    match (a.queued_since, b.queued_since) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
    .then(a.user_id.cmp(&b.user_id))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AllocationResult {
    /// Granted requests in the order they were granted.
    pub granted: Vec<PendingRequest>,
    /// Requests that were not granted, in pending-list order.
    pub newly_queued: Vec<PendingRequest>,
    pub surplus: f64,
}

impl AllocationResult {
    pub fn grants(&self) -> BTreeMap<UserId, f64> {
        self.granted.iter().map(|r| (r.user_id, r.amount)).collect()
    }

    pub fn granted_total(&self) -> f64 {
        self.granted.iter().map(|r| r.amount).sum()
    }

    /// Build a result from a grant mask over `pending`.
    pub fn from_mask(pending: &[PendingRequest], mask: &[bool], cap: f64) -> Self {
        debug_assert_eq!(pending.len(), mask.len());
        let mut granted = Vec::new();
        let mut newly_queued = Vec::new();
        for (req, &take) in pending.iter().zip(mask) {
            if take {
                granted.push(req.clone());
            } else {
                newly_queued.push(req.clone());
            }
        }
        let total: f64 = granted.iter().map(|r| r.amount).sum();
        Self {
            granted,
            newly_queued,
            surplus: (cap - total).max(0.0),
        }
    }
}

/// Indices of `pending` in greedy visiting order.
pub fn greedy_order(pending: &[PendingRequest], order: GreedyOrder) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pending.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (&pending[i], &pending[j]);
        let by_amount = match order {
            GreedyOrder::SmallestFirst => a.amount.total_cmp(&b.amount),
            GreedyOrder::LargestFirst => b.amount.total_cmp(&a.amount),
        };
        by_amount.then_with(|| seniority(a, b))
    });
    idx
}

/// Grant mask of the greedy pass: visit requests in `order`, grant each one
/// that still fits. A request that does not fit is skipped, not a stop.
pub fn greedy_mask(pending: &[PendingRequest], cap: f64, order: GreedyOrder) -> Vec<bool> {
    let mut mask = vec![false; pending.len()];
    let mut used = 0.0;
    for i in greedy_order(pending, order) {
        let amount = pending[i].amount;
        if used + amount <= cap + ENERGY_EPS {
            used += amount;
            mask[i] = true;
        }
    }
    mask
}

/// Greedy all-or-nothing allocation of `pending` under `cap`. Grants are
/// listed in visiting order.
pub fn allocate(pending: &[PendingRequest], cap: f64, order: GreedyOrder) -> AllocationResult {
    let mut mask = vec![false; pending.len()];
    let mut granted = Vec::new();
    let mut used = 0.0;
    for i in greedy_order(pending, order) {
        let amount = pending[i].amount;
        if used + amount <= cap + ENERGY_EPS {
            used += amount;
            mask[i] = true;
            granted.push(pending[i].clone());
        }
    }
    let newly_queued = pending
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| !m)
        .map(|(r, _)| r.clone())
        .collect();
    AllocationResult {
        granted,
        newly_queued,
        surplus: (cap - used).max(0.0),
    }
}

/// Ordered store of unsatisfied requests, oldest first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Queue {
    entries: Vec<PendingRequest>,
}

impl Queue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<PendingRequest>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[PendingRequest] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [PendingRequest] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, req: PendingRequest) {
        self.entries.push(req);
    }

    pub fn contains(&self, user: UserId) -> bool {
        self.entries.iter().any(|e| e.user_id == user)
    }

    /// Remove the entries of the given users, keeping the others in order.
    pub fn remove_users(&mut self, users: &HashSet<UserId>) {
        self.entries.retain(|e| !users.contains(&e.user_id));
    }

    pub fn into_entries(self) -> Vec<PendingRequest> {
        self.entries
    }
}

/// Each entry independently stays with probability `p_stay_queue`.
/// Survivors keep their relative order. One draw is consumed per entry.
pub fn queue_attrition(
    queue: Queue,
    p_stay_queue: f64,
    rng: &mut RngStream,
) -> (Queue, Vec<PendingRequest>) {
    let mut kept = Vec::with_capacity(queue.len());
    let mut dropped = Vec::new();
    for entry in queue.entries {
        if rng.chance(p_stay_queue) {
            kept.push(entry);
        } else {
            dropped.push(entry);
        }
    }
    (Queue { entries: kept }, dropped)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocationError {
    #[error("user {0} appears more than once in the pending list")]
    DuplicateUser(UserId),
}

/// Single candidate list: queue entries (oldest first) followed by the new
/// requests.
pub fn merge_pending(
    new_requests: Vec<PendingRequest>,
    queue: &Queue,
) -> Result<Vec<PendingRequest>, AllocationError> {
    let mut seen = HashSet::with_capacity(queue.len() + new_requests.len());
    let mut out = Vec::with_capacity(queue.len() + new_requests.len());
    for req in queue.entries.iter().cloned().chain(new_requests) {
        if !seen.insert(req.user_id) {
            return Err(AllocationError::DuplicateUser(req.user_id));
        }
        out.push(req);
    }
    Ok(out)
}
