//! Built-in scenarios.

use dpn_core::config::{DemandParams, GridConfig};
use dpn_core::demand::InitialState;
use dpn_core::metrics::ReferenceTable;
use dpn_core::optimizer::{FitnessWeights, GaParams};
use dpn_core::routing::{RoutingParams, GENERATOR_BUSES};
use dpn_core::storage::{SolarConfig, StorageConfig};
use dpn_core::AllocationPolicy;

use crate::scenario::{RoutingSpec, Scenario, ScenarioKind, SweepSpec};

/// Requests of the ten-user snapshot, one per user.
pub const TABLE1_REQUESTS: [f64; 10] =
    [0.0, 0.4974, 0.4869, 0.0, 0.5473, 0.0, 0.0, 0.5221, 0.0, 0.9519];

pub struct PresetInfo {
    pub name: &'static str,
    pub about: &'static str,
}

pub const PRESETS: [PresetInfo; 11] = [
    PresetInfo {
        name: "fig3",
        about: "queue statistics over the demand grid, 500 users, cap 150, queue survival 0.1",
    },
    PresetInfo {
        name: "fig4",
        about: "queue statistics over the demand grid, 500 users, cap 150, queue survival 0.5",
    },
    PresetInfo {
        name: "fig5",
        about: "demand grid at cap 250 (half of peak demand), largest-first, queue survival 0.5",
    },
    PresetInfo {
        name: "cap_two_thirds",
        about: "demand grid at cap 333.3: every random request should be accommodated",
    },
    PresetInfo {
        name: "table1",
        about: "ten-user snapshot with fixed requests, cap 3, largest-first, battery",
    },
    PresetInfo {
        name: "table2_battery",
        about: "500 users, cap 100, 50 special users with a 10-unit battery, 50x50 runs",
    },
    PresetInfo {
        name: "table2_nobattery",
        about: "500 users, cap 100, no secondary source, 50x50 runs",
    },
    PresetInfo {
        name: "table3_unopt",
        about: "battery plus solar panel, greedy smallest-first allocation, 50x50 runs",
    },
    PresetInfo {
        name: "table3_opt",
        about: "battery plus solar panel, genetic optimizer allocation, 50x50 runs",
    },
    PresetInfo {
        name: "ga_fig6",
        about: "genetic optimizer, 500 users, cap 200, storage 20, 40 special users, 20x50 runs",
    },
    PresetInfo {
        name: "ieee39",
        about: "routing snapshots on the 39-bus system, 2 generator sources, 12 consumers",
    },
];

/// Probability grid used by the sweep presets.
pub fn probability_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

fn base(n_users: usize, cap: f64, p_stay_queue: f64, policy: AllocationPolicy) -> GridConfig {
    GridConfig {
        n_users,
        energy_cap: cap,
        demand: DemandParams::new(0.5, 0.5),
        p_stay_queue,
        p_change_queue_status: 0.0,
        policy,
        n_special_users: 0,
        battery: None,
        solar: None,
        ga: None,
        n_rounds: 100,
        n_simulations: 10,
        initial_state: InitialState::AllOff,
        seed: 1,
    }
}

/// Sweeps start from the stationary demand state so that the surfaces
/// describe steady-state behaviour rather than the start-up surge.
fn sweep(mut config: GridConfig) -> ScenarioKind {
    config.initial_state = InitialState::Stationary;
    ScenarioKind::Sweep(SweepSpec {
        base: config,
        p_request: probability_grid(),
        p_stay_on: probability_grid(),
    })
}

fn table2(battery: bool) -> GridConfig {
    let mut c = base(500, 100.0, 1.0, AllocationPolicy::SmallestFirst);
    c.n_special_users = 50;
    c.n_rounds = 50;
    c.n_simulations = 50;
    if battery {
        c.battery = Some(StorageConfig {
            capacity: 10.0,
            initial_charge: 10.0,
        });
    }
    c
}

fn table3(policy: AllocationPolicy) -> GridConfig {
    let mut c = table2(true);
    c.policy = policy;
    c.solar = Some(SolarConfig::default());
    if policy == AllocationPolicy::GeneticOptimizer {
        c.ga = Some(GaParams {
            fitness_weights: FitnessWeights::default(),
            ..GaParams::default()
        });
    }
    c
}

/// Resolve a preset by name.
pub fn preset(name: &str) -> Option<Scenario> {
    let kind = match name {
        "fig3" => sweep(base(500, 150.0, 0.1, AllocationPolicy::SmallestFirst)),
        "fig4" => sweep(base(500, 150.0, 0.5, AllocationPolicy::SmallestFirst)),
        "fig5" => sweep(base(500, 250.0, 0.5, AllocationPolicy::LargestFirst)),
        "cap_two_thirds" => sweep(base(500, 333.3, 0.5, AllocationPolicy::SmallestFirst)),
        "table1" => {
            let mut c = base(10, 3.0, 1.0, AllocationPolicy::LargestFirst);
            c.demand = DemandParams::new(0.3, 0.3);
            c.n_special_users = 10;
            c.battery = Some(StorageConfig {
                capacity: 1.0,
                initial_charge: 1.0,
            });
            c.n_rounds = 1;
            c.n_simulations = 1;
            ScenarioKind::Single {
                config: c,
                injected: Some(vec![TABLE1_REQUESTS.to_vec()]),
                reference: None,
            }
        }
        "table2_battery" => single(table2(true), ReferenceTable::Table2Battery),
        "table2_nobattery" => single(table2(false), ReferenceTable::Table2NoBattery),
        "table3_unopt" => single(table3(AllocationPolicy::SmallestFirst), ReferenceTable::Table3Unopt),
        "table3_opt" => single(table3(AllocationPolicy::GeneticOptimizer), ReferenceTable::Table3Opt),
        "ga_fig6" => {
            let mut c = base(500, 200.0, 1.0, AllocationPolicy::GeneticOptimizer);
            c.n_special_users = 40;
            c.battery = Some(StorageConfig {
                capacity: 20.0,
                initial_charge: 20.0,
            });
            c.ga = Some(GaParams::default());
            c.n_rounds = 50;
            c.n_simulations = 20;
            ScenarioKind::Single {
                config: c,
                injected: None,
                reference: None,
            }
        }
        "ieee39" => ScenarioKind::Routing(RoutingSpec {
            topology: "ieee39".into(),
            source_pool: GENERATOR_BUSES.to_vec(),
            n_sources: 2,
            n_consumers: 12,
            params: RoutingParams::default(),
            n_rounds: 10,
            seed: 1,
        }),
        _ => return None,
    };
    Some(Scenario {
        name: name.to_string(),
        kind,
    })
}

fn single(config: GridConfig, reference: ReferenceTable) -> ScenarioKind {
    ScenarioKind::Single {
        config,
        injected: None,
        reference: Some(reference),
    }
}

/// Every preset, in catalog order.
pub fn list_presets() -> Vec<Scenario> {
    PRESETS
        .iter()
        .map(|p| preset(p.name).expect("catalog entries resolve"))
        .collect()
}
