//! Battery and solar secondary sources.
//!
//! Secondary energy is reserved for special users whose requests are sitting
//! in the queue. A served user leaves the queue; everyone else stays queued,
//! since the battery may be empty next round.

use serde::{Deserialize, Serialize};

use crate::allocation::{allocate, AllocationResult, GreedyOrder, PendingRequest};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageConfig {
    pub capacity: f64,
    #[serde(default)]
    pub initial_charge: f64,
}

impl StorageConfig {
    /// A battery holding 10% of the grid's per-round cap, starting full.
    pub fn tenth_of_cap(energy_cap: f64) -> Self {
        let capacity = 0.1 * energy_cap;
        Self {
            capacity,
            initial_charge: capacity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageUnit {
    pub config: StorageConfig,
    pub charge: f64,
}

impl StorageUnit {
    pub fn new(config: StorageConfig) -> Self {
        Self {
            config,
            charge: config.initial_charge,
        }
    }

    pub fn capacity(&self) -> f64 {
        self.config.capacity
    }

    pub fn headroom(&self) -> f64 {
        (self.config.capacity - self.charge).max(0.0)
    }

    /// Store as much of `surplus` as fits. Returns the amount absorbed.
    pub fn charge(&mut self, surplus: f64) -> f64 {
        let absorbed = surplus.max(0.0).min(self.headroom());
        self.charge += absorbed;
        absorbed
    }

    /// Serve queued special users from the stored charge with greedy
    /// all-or-nothing grants. `newly_queued` of the result lists the users
    /// that remain in the main queue.
    pub fn discharge_to_queue(
        &mut self,
        queued_special: &[PendingRequest],
        order: GreedyOrder,
    ) -> AllocationResult {
        let result = allocate(queued_special, self.charge, order);
        self.charge = (self.charge - result.granted_total()).max(0.0);
        result
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarConfig {
    /// Largest production in one round.
    pub solar_cap: f64,
    /// Probability that the panel produces anything in a round.
    #[serde(default = "default_p_sun")]
    pub p_sun: f64,
}

fn default_p_sun() -> f64 {
    0.5
}

impl Default for SolarConfig {
    fn default() -> Self {
        Self {
            solar_cap: 10.0,
            p_sun: default_p_sun(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolarOutcome {
    pub produced: f64,
    /// Part of the production stored in the battery.
    pub to_battery: f64,
    /// Overflow handed to the grid as extra capacity.
    pub grid_bonus: f64,
}

/// Route `produced` into the battery first; whatever does not fit becomes
/// grid bonus.
pub fn absorb_production(battery: Option<&mut StorageUnit>, produced: f64) -> SolarOutcome {
    let to_battery = match battery {
        Some(b) => b.charge(produced),
        None => 0.0,
    };
    SolarOutcome {
        produced,
        to_battery,
        grid_bonus: produced - to_battery,
    }
}

/// One round of solar production: with probability `p_sun` the panel yields
/// a uniform amount on `(0, solar_cap]`. Two draws are consumed every round.
pub fn solar_step(
    solar: &SolarConfig,
    battery: Option<&mut StorageUnit>,
    rng: &mut RngStream,
) -> SolarOutcome {
    let sunny = rng.chance(solar.p_sun);
    let amount = rng.uniform_positive(solar.solar_cap);
    let produced = if sunny { amount } else { 0.0 };
    absorb_production(battery, produced)
}
