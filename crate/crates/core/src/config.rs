//! Scenario configuration and validation.
//!
//! Energy is measured in abstract units where one unit is a single user's
//! largest possible per-round request. All quantities are `f64`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::AllocationPolicy;
use crate::demand::InitialState;
use crate::optimizer::GaParams;
use crate::storage::{SolarConfig, StorageConfig};

/// Absolute tolerance for every comparison of energy against a cap.
pub const ENERGY_EPS: f64 = 1e-9;

/// Index of a user within a grid.
pub type UserId = usize;

/// Round index, starting at 0.
pub type Round = u32;

/// Parameters of the two-state ON/OFF demand process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandParams {
    /// Probability that an OFF user turns ON in a round.
    pub p_request: f64,
    /// Probability that an ON user stays ON in a round.
    pub p_stay_on: f64,
    #[serde(default = "default_max_request")]
    pub max_request_per_user: f64,
}

fn default_max_request() -> f64 {
    1.0
}

impl DemandParams {
    pub fn new(p_request: f64, p_stay_on: f64) -> Self {
        Self {
            p_request,
            p_stay_on,
            max_request_per_user: 1.0,
        }
    }
}

/// Everything needed to run one grid scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n_users: usize,
    /// Energy the primary source can grant per round.
    pub energy_cap: f64,
    pub demand: DemandParams,
    /// Per-round survival probability of a queued request.
    pub p_stay_queue: f64,
    /// Per-round probability that a queued request redraws its amount.
    #[serde(default)]
    pub p_change_queue_status: f64,
    pub policy: AllocationPolicy,
    /// Users `0..n_special_users` may draw from the battery and solar sources.
    #[serde(default)]
    pub n_special_users: usize,
    #[serde(default)]
    pub battery: Option<StorageConfig>,
    #[serde(default)]
    pub solar: Option<SolarConfig>,
    /// Required when `policy` is the genetic optimizer; defaults otherwise.
    #[serde(default)]
    pub ga: Option<GaParams>,
    #[serde(default)]
    pub initial_state: InitialState,
    pub n_rounds: usize,
    pub n_simulations: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GridConfig {
    /// Parse a config file. `.json` files are read as JSON, everything else
    /// as TOML.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigLoadError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigLoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(toml::from_str(&text)?)
        }
    }

    pub fn is_special(&self, user: UserId) -> bool {
        user < self.n_special_users
    }

    /// GA parameters in effect, falling back to defaults.
    pub fn ga_params(&self) -> GaParams {
        self.ga.clone().unwrap_or_default()
    }

    /// Same scenario, ignoring the seed. Replicas of one run must agree on this.
    pub fn same_scenario(&self, other: &GridConfig) -> bool {
        let mut a = self.clone();
        a.seed = other.seed;
        a == *other
    }
}

#[derive(Debug, Error)]
pub enum ConfigLoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid TOML config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid JSON config: {0}")]
    Json(#[from] serde_json::Error),
}

/// What is wrong with one config field.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ProbabilityOutOfRange(f64),
    Negative(f64),
    NotPositive(f64),
    TooManySpecialUsers { special: usize, users: usize },
    ExceedsCapacity { value: f64, capacity: f64 },
    ElitismTooLarge { elitism: usize, population: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ProbabilityOutOfRange(p) => write!(f, "probability out of range ({p})"),
            Violation::Negative(v) => write!(f, "must be non-negative ({v})"),
            Violation::NotPositive(v) => write!(f, "must be positive ({v})"),
            Violation::TooManySpecialUsers { special, users } => {
                write!(f, "{special} special users exceed {users} users")
            }
            Violation::ExceedsCapacity { value, capacity } => {
                write!(f, "{value} exceeds capacity {capacity}")
            }
            Violation::ElitismTooLarge { elitism, population } => {
                write!(f, "elitism {elitism} must be below population size {population}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted path of the offending field, e.g. `demand.p_request`.
    pub field: String,
    pub violation: Violation,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.violation)
    }
}

/// Every violation found in a config, in field order.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Checker(Vec<ConfigError>);

impl Checker {
    fn push(&mut self, field: &str, violation: Violation) {
        self.0.push(ConfigError {
            field: field.to_string(),
            violation,
        });
    }

    fn probability(&mut self, field: &str, p: f64) {
        if !(0.0..=1.0).contains(&p) {
            self.push(field, Violation::ProbabilityOutOfRange(p));
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn non_negative(&mut self, field: &str, v: f64) {
        // NaN fails this check as well.
        if !(v >= 0.0) {
            self.push(field, Violation::Negative(v));
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn positive(&mut self, field: &str, v: f64) {
        if !(v > 0.0) {
            self.push(field, Violation::NotPositive(v));
        }
    }
}

/// Check every invariant of `config`. Returns it unchanged when valid,
/// otherwise the complete list of violations.
pub fn validate_config(config: GridConfig) -> Result<GridConfig, ConfigErrors> {
    let mut c = Checker::default();

    c.non_negative("energy_cap", config.energy_cap);
    c.probability("demand.p_request", config.demand.p_request);
    c.probability("demand.p_stay_on", config.demand.p_stay_on);
    c.positive("demand.max_request_per_user", config.demand.max_request_per_user);
    c.probability("p_stay_queue", config.p_stay_queue);
    c.probability("p_change_queue_status", config.p_change_queue_status);
    if config.n_special_users > config.n_users {
        c.push(
            "n_special_users",
            Violation::TooManySpecialUsers {
                special: config.n_special_users,
                users: config.n_users,
            },
        );
    }

    if let Some(b) = &config.battery {
        c.non_negative("battery.capacity", b.capacity);
        c.non_negative("battery.initial_charge", b.initial_charge);
        if b.initial_charge > b.capacity {
            c.push(
                "battery.initial_charge",
                Violation::ExceedsCapacity {
                    value: b.initial_charge,
                    capacity: b.capacity,
                },
            );
        }
    }
    if let Some(s) = &config.solar {
        c.non_negative("solar.solar_cap", s.solar_cap);
        c.probability("solar.p_sun", s.p_sun);
    }
    if let Some(ga) = &config.ga {
        if ga.population_size == 0 {
            c.push("ga.population_size", Violation::NotPositive(0.0));
        }
        c.probability("ga.mutation_rate", ga.mutation_rate);
        c.probability("ga.crossover_rate", ga.crossover_rate);
        if ga.elitism >= ga.population_size.max(1) && ga.elitism > 0 {
            c.push(
                "ga.elitism",
                Violation::ElitismTooLarge {
                    elitism: ga.elitism,
                    population: ga.population_size,
                },
            );
        }
        if ga.tournament_size == 0 {
            c.push("ga.tournament_size", Violation::NotPositive(0.0));
        }
    }

    if c.0.is_empty() {
        Ok(config)
    } else {
        Err(ConfigErrors(c.0))
    }
}
