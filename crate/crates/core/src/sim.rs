//! The round orchestrator.
//!
//! One round runs, in order: queue attrition, demand, merge of queued and
//! fresh requests, grid allocation, secondary sources (solar, battery
//! discharge to queued special users, battery charging from the grid
//! surplus), and metrics.

use std::collections::HashSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::allocation::{
    allocate, merge_pending, queue_attrition, AllocationError, AllocationPolicy, PendingRequest,
    Queue,
};
use crate::config::{validate_config, ConfigErrors, GridConfig, Round, UserId};
use crate::demand::{initial_users, step_demand, UserState};
use crate::metrics::{record_round, EndOfRun, RoundMetrics, RunAccumulator};
use crate::optimizer::{ga_allocate, GaParams};
use crate::rng::RngStreams;
use crate::storage::{solar_step, StorageUnit};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error("injected round {round} has {got} requests, expected {expected}")]
    InjectedLength {
        round: usize,
        got: usize,
        expected: usize,
    },
    #[error("injected request {value} for user {user} is outside [0, {max}]")]
    InjectedValue { user: UserId, value: f64, max: f64 },
}

/// Mutable state of one simulation trajectory.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: GridConfig,
    ga: GaParams,
    users: Vec<UserState>,
    queue: Queue,
    battery: Option<StorageUnit>,
    carried_bonus: f64,
    round: Round,
    rng: RngStreams,
    injected: Vec<Vec<f64>>,
    entered_queue: Vec<bool>,
    served_in_queue: Vec<bool>,
    asked_battery: Vec<bool>,
    served_by_battery: Vec<bool>,
}

impl Simulation {
    /// Validate `config` and set up the initial state: users per
    /// `config.initial_state`, an empty queue, the battery at its initial
    /// charge.
    pub fn new(config: GridConfig, mut rng: RngStreams) -> Result<Self, SimError> {
        let config = validate_config(config)?;
        let n = config.n_users;
        let users = initial_users(
            n,
            |i| config.is_special(i),
            &config.demand,
            config.initial_state,
            &mut rng.demand,
        );
        Ok(Self {
            ga: config.ga_params(),
            battery: config.battery.map(StorageUnit::new),
            users,
            queue: Queue::new(),
            carried_bonus: 0.0,
            round: 0,
            rng,
            injected: Vec::new(),
            entered_queue: vec![false; n],
            served_in_queue: vec![false; n],
            asked_battery: vec![false; n],
            served_by_battery: vec![false; n],
            config,
        })
    }

    /// Replace the demand step of the first rounds with explicit requests,
    /// one vector of per-user amounts per round. Values for users that are
    /// queued at that round are ignored.
    pub fn with_injected_requests(mut self, rounds: Vec<Vec<f64>>) -> Result<Self, SimError> {
        let max = self.config.demand.max_request_per_user;
        for (round, reqs) in rounds.iter().enumerate() {
            if reqs.len() != self.config.n_users {
                return Err(SimError::InjectedLength {
                    round,
                    got: reqs.len(),
                    expected: self.config.n_users,
                });
            }
            if let Some((user, &value)) = reqs
                .iter()
                .enumerate()
                .find(|(_, &v)| !(0.0..=max).contains(&v))
            {
                return Err(SimError::InjectedValue { user, value, max });
            }
        }
        self.injected = rounds;
        Ok(self)
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    pub fn queue(&self) -> &Queue {
        &self.queue
    }

    pub fn battery(&self) -> Option<&StorageUnit> {
        self.battery.as_ref()
    }

    /// Index of the next round to run.
    pub fn round(&self) -> Round {
        self.round
    }

    pub fn rng_mut(&mut self) -> &mut RngStreams {
        &mut self.rng
    }

    /// Run one full round and return its counters.
    pub fn round_step(&mut self) -> Result<RoundMetrics, SimError> {
        let r = self.round;
        let mut m = RoundMetrics {
            round: r,
            ..RoundMetrics::default()
        };

        // 1. Queue attrition, then optional redraw of queued amounts.
        let queue = std::mem::take(&mut self.queue);
        let (mut queue, dropped) = queue_attrition(queue, self.config.p_stay_queue, &mut self.rng.queue);
        m.customers_dropped = dropped.len();
        for entry in dropped {
            let user = &mut self.users[entry.user_id];
            user.queued_since = None;
            user.set_request(0.0);
            m.waits.dropped.push(r - entry.queued_since.unwrap_or(r));
        }
        if self.config.p_change_queue_status > 0.0 {
            let max = self.config.demand.max_request_per_user;
            for entry in queue.entries_mut() {
                let change = self.rng.queue.chance(self.config.p_change_queue_status);
                let amount = self.rng.queue.uniform_positive(max);
                if change {
                    entry.amount = amount;
                    self.users[entry.user_id].set_request(amount);
                }
            }
        }

        // 2. Demand for every user not in the queue.
        if let Some(reqs) = self.injected.get(r as usize) {
            for (user, &amount) in self.users.iter_mut().zip(reqs) {
                if !user.is_queued() {
                    user.set_request(amount);
                }
            }
        } else {
            step_demand(&mut self.users, &self.config.demand, &mut self.rng.demand);
        }

        // 3. One candidate pool.
        let fresh: Vec<PendingRequest> = self
            .users
            .iter()
            .filter(|u| !u.is_queued() && u.request > 0.0)
            .map(|u| PendingRequest::fresh(u.id, u.request))
            .collect();
        let pending = merge_pending(fresh, &queue)?;
        m.customers_requested = pending.len();
        m.energy_requested = pending.iter().map(|p| p.amount).sum();

        // 4. Grid allocation.
        let cap = self.config.energy_cap + self.carried_bonus;
        self.carried_bonus = 0.0;
        m.effective_cap = cap;
        let result = match self.config.policy {
            AllocationPolicy::GeneticOptimizer => {
                ga_allocate(&pending, cap, &self.ga, r, &mut self.rng.genetic)
            }
            policy => allocate(&pending, cap, policy.greedy_order()),
        };
        m.energy_distributed = result.granted_total();
        m.customers_received_grid = result.granted.len();
        m.surplus = result.surplus;
        for g in &result.granted {
            self.users[g.user_id].queued_since = None;
            if let Some(since) = g.queued_since {
                m.customers_satisfied_from_queue += 1;
                m.waits.satisfied.push(r - since);
                self.served_in_queue[g.user_id] = true;
            }
        }
        queue = Queue::from_entries(
            result
                .newly_queued
                .into_iter()
                .map(|mut e| {
                    if e.queued_since.is_none() {
                        e.queued_since = Some(r);
                        m.customers_entered_queue += 1;
                        self.entered_queue[e.user_id] = true;
                    } else {
                        m.customers_remained_in_queue += 1;
                    }
                    self.users[e.user_id].queued_since = e.queued_since;
                    e
                })
                .collect(),
        );

        // 5. Secondary sources.
        m.battery_charge_start = self.battery.as_ref().map_or(0.0, |b| b.charge);
        if let Some(solar) = &self.config.solar {
            let out = solar_step(solar, self.battery.as_mut(), &mut self.rng.solar);
            m.solar_produced = out.produced;
            m.solar_to_battery = out.to_battery;
            m.grid_bonus = out.grid_bonus;
            self.carried_bonus = out.grid_bonus;
        }
        if let Some(battery) = self.battery.as_mut() {
            m.battery_available = battery.charge;
            let special: Vec<PendingRequest> = queue
                .entries()
                .iter()
                .filter(|e| self.users[e.user_id].special)
                .cloned()
                .collect();
            m.battery_requested = special.iter().map(|e| e.amount).sum();
            m.customers_requested_battery = special.len();
            for e in &special {
                self.asked_battery[e.user_id] = true;
            }
            let served = battery.discharge_to_queue(&special, self.config.policy.greedy_order());
            m.battery_distributed = served.granted_total();
            m.customers_received_battery = served.granted.len();
            let mut leaving = HashSet::with_capacity(served.granted.len());
            for g in &served.granted {
                let since = g.queued_since.unwrap_or(r);
                m.waits.satisfied.push(r - since);
                m.waits.storage.push(r - since);
                m.customers_satisfied_from_queue += 1;
                self.users[g.user_id].queued_since = None;
                self.served_in_queue[g.user_id] = true;
                self.served_by_battery[g.user_id] = true;
                m.battery_recipients.push(g.user_id);
                leaving.insert(g.user_id);
            }
            queue.remove_users(&leaving);
            m.battery_absorbed = battery.charge(m.surplus);
            m.battery_charge_end = battery.charge;
        }

        // 6. Metrics.
        m.customers_in_queue = queue.len();
        m.customers_received = m.customers_received_grid + m.customers_received_battery;
        m.total_delivered = m.energy_distributed + m.battery_distributed;

        self.queue = queue;
        self.round += 1;
        Ok(m)
    }

    pub fn end_of_run(&self) -> EndOfRun {
        let count = |a: &[bool], b: &[bool]| a.iter().zip(b).filter(|(&x, &y)| x && !y).count();
        EndOfRun {
            not_satisfied_by_end: self.queue.len(),
            never_satisfied_in_queue: count(&self.entered_queue, &self.served_in_queue),
            never_satisfied_by_battery: count(&self.asked_battery, &self.served_by_battery),
        }
    }
}

/// Output of one complete replica.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub replica: usize,
    pub rounds: Vec<RoundMetrics>,
    pub accumulator: RunAccumulator,
}

/// Run replica `replica` of `config` for `config.n_rounds` rounds.
pub fn run_replica(
    config: &GridConfig,
    replica: usize,
    injected: Option<&[Vec<f64>]>,
) -> Result<RunOutput, SimError> {
    let rng = RngStreams::for_replica(config.seed, replica as u64);
    let mut sim = Simulation::new(config.clone(), rng)?;
    if let Some(rounds) = injected {
        sim = sim.with_injected_requests(rounds.to_vec())?;
    }
    let mut acc = RunAccumulator::new(config.clone());
    let mut rounds = Vec::with_capacity(config.n_rounds);
    for _ in 0..config.n_rounds {
        let m = sim.round_step()?;
        record_round(&m, &mut acc);
        rounds.push(m);
    }
    acc.finish(sim.end_of_run());
    Ok(RunOutput {
        replica,
        rounds,
        accumulator: acc,
    })
}

/// Run all `config.n_simulations` replicas in parallel. Results are
/// returned in replica order regardless of scheduling.
pub fn run_replicas(
    config: &GridConfig,
    injected: Option<&[Vec<f64>]>,
) -> Result<Vec<RunOutput>, SimError> {
    (0..config.n_simulations)
        .into_par_iter()
        .map(|i| run_replica(config, i, injected))
        .collect()
}
