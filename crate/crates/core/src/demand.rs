//! Stochastic ON/OFF request generation.
//!
//! Each round every user draws two uniforms. An OFF user turns ON when the
//! first falls below `p_request` and then requests a fresh amount drawn on
//! `(0, max_request_per_user]`. An ON user turns OFF when the second exceeds
//! `p_stay_on`, otherwise it keeps requesting the same amount. Queued users
//! are frozen and skipped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{DemandParams, Round, UserId};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub id: UserId,
    pub on: bool,
    /// Requested energy; zero iff the user is not requesting.
    pub request: f64,
    pub special: bool,
    /// Round in which the current request entered the queue, if queued.
    pub queued_since: Option<Round>,
}

impl UserState {
    pub fn off(id: UserId, special: bool) -> Self {
        Self {
            id,
            on: false,
            request: 0.0,
            special,
            queued_since: None,
        }
    }

    pub fn is_queued(&self) -> bool {
        self.queued_since.is_some()
    }

    pub(crate) fn set_request(&mut self, amount: f64) {
        self.request = amount;
        self.on = amount > 0.0;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandStepOutcome {
    /// Request per user after the step, zero for users that are OFF.
    pub requests: Vec<f64>,
    pub turned_on: usize,
    pub turned_off: usize,
}

impl DemandStepOutcome {
    pub fn on_count(&self) -> usize {
        self.requests.iter().filter(|&&r| r > 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DemandError {
    #[error("no unique stationary distribution: both transition rates are zero")]
    DegenerateChain,
    #[error("empty post-burn-in window: {len} rounds with burn-in {burn_in}")]
    EmptyWindow { len: usize, burn_in: usize },
}

/// How users start a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Every user OFF with no request.
    #[default]
    AllOff,
    /// Each user ON with the stationary probability of the chain, holding a
    /// uniform request. Removes the round-0 surge of simultaneous requests.
    Stationary,
}

/// Initial user states. `Stationary` consumes two demand draws per user;
/// `AllOff` consumes none. A degenerate chain starts OFF.
pub fn initial_users(
    n_users: usize,
    is_special: impl Fn(UserId) -> bool,
    params: &DemandParams,
    initial: InitialState,
    rng: &mut RngStream,
) -> Vec<UserState> {
    let mut users: Vec<UserState> = (0..n_users).map(|i| UserState::off(i, is_special(i))).collect();
    if initial == InitialState::Stationary {
        let pi = stationary_on_probability(params).unwrap_or(0.0);
        for user in &mut users {
            let on = rng.chance(pi);
            let amount = rng.uniform_positive(params.max_request_per_user);
            if on {
                user.set_request(amount);
            }
        }
    }
    users
}

/// Advance every non-queued user by one round of the ON/OFF process.
///
/// Three uniforms are consumed per user (including queued ones) so that the
/// stream position depends only on the round number and the user count.
pub fn step_demand(
    states: &mut [UserState],
    params: &DemandParams,
    rng: &mut RngStream,
) -> DemandStepOutcome {
    let mut turned_on = 0;
    let mut turned_off = 0;
    for user in states.iter_mut() {
        let p_req = rng.uniform();
        let p_on = rng.uniform();
        let amount = rng.uniform_positive(params.max_request_per_user);
        if user.is_queued() {
            continue;
        }
        if !user.on {
            if p_req < params.p_request {
                user.set_request(amount);
                turned_on += 1;
            }
        } else if p_on > params.p_stay_on {
            user.set_request(0.0);
            turned_off += 1;
        }
    }
    DemandStepOutcome {
        requests: states.iter().map(|u| u.request).collect(),
        turned_on,
        turned_off,
    }
}

/// Stationary ON probability of the two-state chain with OFF→ON rate
/// `p_request` and ON→OFF rate `1 - p_stay_on`.
pub fn stationary_on_probability(params: &DemandParams) -> Result<f64, DemandError> {
    let up = params.p_request;
    let down = 1.0 - params.p_stay_on;
    if up + down <= 0.0 {
        return Err(DemandError::DegenerateChain);
    }
    Ok(up / (up + down))
}

/// Mean fraction of ON users over the rounds after `burn_in`.
pub fn empirical_on_fraction(
    trajectory: &[DemandStepOutcome],
    burn_in: usize,
) -> Result<f64, DemandError> {
    if trajectory.len() <= burn_in {
        return Err(DemandError::EmptyWindow {
            len: trajectory.len(),
            burn_in,
        });
    }
    let window = &trajectory[burn_in..];
    let total: f64 = window
        .iter()
        .map(|o| {
            if o.requests.is_empty() {
                0.0
            } else {
                o.on_count() as f64 / o.requests.len() as f64
            }
        })
        .sum();
    Ok(total / window.len() as f64)
}

/// Run the demand process alone for `rounds` rounds starting from all OFF.
pub fn simulate_demand(
    n_users: usize,
    params: &DemandParams,
    rounds: usize,
    rng: &mut RngStream,
) -> Vec<DemandStepOutcome> {
    let mut users: Vec<UserState> = (0..n_users).map(|i| UserState::off(i, false)).collect();
    (0..rounds)
        .map(|_| step_demand(&mut users, params, rng))
        .collect()
}
