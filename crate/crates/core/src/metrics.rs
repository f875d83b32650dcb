//! Per-round counters, streaming aggregation and golden-table comparison.
//!
//! Metric labels reproduce the row labels of the published comparison
//! tables so that CSV headers and summaries can be read side by side with
//! them.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::GridConfig;

/// Online mean/variance accumulator (Welford), mergeable (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Zero for an empty accumulator.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero when fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        }
    }

    pub fn stddev(&self) -> f64 {
        self.variance().sqrt()
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::new();
        for x in iter {
            w.push(x);
        }
        w
    }
}

/// Per-round metric identifiers, in CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKey {
    EnergyDistributed,
    EnergyRequested,
    CustomersInQueue,
    CustomersReceived,
    CustomersRequested,
    CustomersEnteredQueue,
    CustomersSatisfiedFromQueue,
    CustomersRemainedInQueue,
    CustomersDropped,
    CustomersReceivedGrid,
    BatteryDistributed,
    BatteryAvailable,
    BatteryRequested,
    CustomersRequestedBattery,
    CustomersReceivedBattery,
    SolarProduced,
    GridBonus,
    TotalDelivered,
    EffectiveCap,
    Surplus,
}

impl MetricKey {
    pub const ALL: [MetricKey; 20] = [
        MetricKey::EnergyDistributed,
        MetricKey::EnergyRequested,
        MetricKey::CustomersInQueue,
        MetricKey::CustomersReceived,
        MetricKey::CustomersRequested,
        MetricKey::CustomersEnteredQueue,
        MetricKey::CustomersSatisfiedFromQueue,
        MetricKey::CustomersRemainedInQueue,
        MetricKey::CustomersDropped,
        MetricKey::CustomersReceivedGrid,
        MetricKey::BatteryDistributed,
        MetricKey::BatteryAvailable,
        MetricKey::BatteryRequested,
        MetricKey::CustomersRequestedBattery,
        MetricKey::CustomersReceivedBattery,
        MetricKey::SolarProduced,
        MetricKey::GridBonus,
        MetricKey::TotalDelivered,
        MetricKey::EffectiveCap,
        MetricKey::Surplus,
    ];

    /// Snake-case column name.
    pub fn key(self) -> &'static str {
        match self {
            MetricKey::EnergyDistributed => "energy_distributed",
            MetricKey::EnergyRequested => "energy_requested",
            MetricKey::CustomersInQueue => "customers_in_queue",
            MetricKey::CustomersReceived => "customers_received",
            MetricKey::CustomersRequested => "customers_requested",
            MetricKey::CustomersEnteredQueue => "customers_entered_queue",
            MetricKey::CustomersSatisfiedFromQueue => "customers_satisfied_from_queue",
            MetricKey::CustomersRemainedInQueue => "customers_remained_in_queue",
            MetricKey::CustomersDropped => "customers_dropped",
            MetricKey::CustomersReceivedGrid => "customers_received_grid",
            MetricKey::BatteryDistributed => "battery_distributed",
            MetricKey::BatteryAvailable => "battery_available",
            MetricKey::BatteryRequested => "battery_requested",
            MetricKey::CustomersRequestedBattery => "customers_requested_battery",
            MetricKey::CustomersReceivedBattery => "customers_received_battery",
            MetricKey::SolarProduced => "solar_produced",
            MetricKey::GridBonus => "grid_bonus",
            MetricKey::TotalDelivered => "total_delivered",
            MetricKey::EffectiveCap => "effective_cap",
            MetricKey::Surplus => "surplus",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MetricKey::EnergyDistributed => "Energy distributed per round",
            MetricKey::EnergyRequested => "Energy requested per round",
            MetricKey::CustomersInQueue => "Number of customers in the queue per round",
            MetricKey::CustomersReceived => "Number of customers that received energy per round",
            MetricKey::CustomersRequested => "Number of customers that requested energy per round",
            MetricKey::CustomersEnteredQueue => "Number of customers that entered the queue per round",
            MetricKey::CustomersSatisfiedFromQueue => {
                "Number of customers that were satisfied in the queue per round"
            }
            MetricKey::CustomersRemainedInQueue => {
                "Number of queued customers that stayed in the queue per round"
            }
            MetricKey::CustomersDropped => "Number of customers dropped from the queue per round",
            MetricKey::CustomersReceivedGrid => {
                "Number of customers that received grid energy per round"
            }
            MetricKey::BatteryDistributed => "Energy distributed by the battery per round",
            MetricKey::BatteryAvailable => "Energy available in the battery per round",
            MetricKey::BatteryRequested => "Energy requested from battery per round",
            MetricKey::CustomersRequestedBattery => {
                "Number of customers that requested from the battery per round"
            }
            MetricKey::CustomersReceivedBattery => {
                "Number of customers that received energy from the battery per round"
            }
            MetricKey::SolarProduced => "Solar energy produced per round",
            MetricKey::GridBonus => "Solar overflow added to the grid capacity per round",
            MetricKey::TotalDelivered => "Total energy delivered (Battery+Grid) per round",
            MetricKey::EffectiveCap => "Grid capacity available per round",
            MetricKey::Surplus => "Unused grid capacity per round",
        }
    }
}

impl fmt::Display for MetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Wait observations made during one round, in rounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundWaits {
    /// Rounds spent in the queue by each entry satisfied this round.
    pub satisfied: Vec<u32>,
    /// Rounds spent in the queue by each entry dropped this round.
    pub dropped: Vec<u32>,
    /// Rounds spent in the queue by each entry served from storage.
    pub storage: Vec<u32>,
}

/// Counters for one completed round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u32,
    /// Grid energy granted.
    pub energy_distributed: f64,
    /// New plus queued requests.
    pub energy_requested: f64,
    /// Queue length at the end of the round.
    pub customers_in_queue: usize,
    /// Grid plus storage grants.
    pub customers_received: usize,
    pub customers_requested: usize,
    /// Fresh requests denied by the grid this round.
    pub customers_entered_queue: usize,
    pub customers_satisfied_from_queue: usize,
    /// Queue entries from earlier rounds that the grid denied again.
    pub customers_remained_in_queue: usize,
    /// Entries removed by attrition at the start of the round.
    pub customers_dropped: usize,
    pub customers_received_grid: usize,
    pub battery_distributed: f64,
    pub battery_available: f64,
    pub battery_requested: f64,
    pub customers_requested_battery: usize,
    pub customers_received_battery: usize,
    pub solar_produced: f64,
    pub solar_to_battery: f64,
    pub grid_bonus: f64,
    pub total_delivered: f64,
    pub effective_cap: f64,
    pub surplus: f64,
    pub battery_charge_start: f64,
    pub battery_absorbed: f64,
    pub battery_charge_end: f64,
    /// Users served from storage this round.
    pub battery_recipients: Vec<usize>,
    pub waits: RoundWaits,
}

impl RoundMetrics {
    pub fn value(&self, key: MetricKey) -> f64 {
        match key {
            MetricKey::EnergyDistributed => self.energy_distributed,
            MetricKey::EnergyRequested => self.energy_requested,
            MetricKey::CustomersInQueue => self.customers_in_queue as f64,
            MetricKey::CustomersReceived => self.customers_received as f64,
            MetricKey::CustomersRequested => self.customers_requested as f64,
            MetricKey::CustomersEnteredQueue => self.customers_entered_queue as f64,
            MetricKey::CustomersSatisfiedFromQueue => self.customers_satisfied_from_queue as f64,
            MetricKey::CustomersRemainedInQueue => self.customers_remained_in_queue as f64,
            MetricKey::CustomersDropped => self.customers_dropped as f64,
            MetricKey::CustomersReceivedGrid => self.customers_received_grid as f64,
            MetricKey::BatteryDistributed => self.battery_distributed,
            MetricKey::BatteryAvailable => self.battery_available,
            MetricKey::BatteryRequested => self.battery_requested,
            MetricKey::CustomersRequestedBattery => self.customers_requested_battery as f64,
            MetricKey::CustomersReceivedBattery => self.customers_received_battery as f64,
            MetricKey::SolarProduced => self.solar_produced,
            MetricKey::GridBonus => self.grid_bonus,
            MetricKey::TotalDelivered => self.total_delivered,
            MetricKey::EffectiveCap => self.effective_cap,
            MetricKey::Surplus => self.surplus,
        }
    }
}

/// Counters that only make sense once a run has finished.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EndOfRun {
    /// Requests still queued after the last round.
    pub not_satisfied_by_end: usize,
    /// Users that entered the queue at least once and were never served
    /// while queued.
    pub never_satisfied_in_queue: usize,
    /// Special users that asked the battery at least once and never got
    /// battery energy.
    pub never_satisfied_by_battery: usize,
}

/// Streaming statistics for one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAccumulator {
    pub config: GridConfig,
    metrics: BTreeMap<MetricKey, Welford>,
    rounds_in_queue: Welford,
    rounds_to_satisfaction: Welford,
    queue_exit_rounds: Welford,
    storage_wait: Welford,
    rounds_with_queue: u64,
    end: Option<EndOfRun>,
}

impl RunAccumulator {
    pub fn new(config: GridConfig) -> Self {
        Self {
            config,
            metrics: MetricKey::ALL.iter().map(|&k| (k, Welford::new())).collect(),
            rounds_in_queue: Welford::new(),
            rounds_to_satisfaction: Welford::new(),
            queue_exit_rounds: Welford::new(),
            storage_wait: Welford::new(),
            rounds_with_queue: 0,
            end: None,
        }
    }

    pub fn rounds(&self) -> u64 {
        self.metrics[&MetricKey::EnergyDistributed].count()
    }

    pub fn metric(&self, key: MetricKey) -> &Welford {
        &self.metrics[&key]
    }

    pub fn rounds_in_queue(&self) -> &Welford {
        &self.rounds_in_queue
    }

    pub fn rounds_to_satisfaction(&self) -> &Welford {
        &self.rounds_to_satisfaction
    }

    /// Time in queue of every entry that left it, by grant or by drop.
    pub fn queue_exit_rounds(&self) -> &Welford {
        &self.queue_exit_rounds
    }

    pub fn rounds_with_queue(&self) -> u64 {
        self.rounds_with_queue
    }

    pub fn finish(&mut self, end: EndOfRun) {
        self.end = Some(end);
    }

    pub fn end_of_run(&self) -> Option<EndOfRun> {
        self.end
    }
}

/// Fold one round into the run's accumulator.
pub fn record_round(m: &RoundMetrics, acc: &mut RunAccumulator) {
    for (key, w) in acc.metrics.iter_mut() {
        w.push(m.value(*key));
    }
    for &w in &m.waits.satisfied {
        acc.rounds_in_queue.push(w as f64);
        acc.rounds_to_satisfaction.push(w as f64 + 1.0);
        acc.queue_exit_rounds.push(w as f64);
    }
    for &w in &m.waits.dropped {
        acc.queue_exit_rounds.push(w as f64);
    }
    for &w in &m.waits.storage {
        acc.storage_wait.push(w as f64);
    }
    if m.customers_in_queue > 0 {
        acc.rounds_with_queue += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub key: MetricKey,
    pub label: String,
    /// Pooled over every round of every run.
    pub mean: f64,
    pub stddev: f64,
    /// Standard deviation of the per-run means.
    pub between_run_stddev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaitSummary {
    /// Rounds a satisfied request spent in the queue.
    pub rounds_in_queue: f64,
    /// Rounds from first request to grant, grant round included.
    pub rounds_to_satisfaction: f64,
    /// Rounds in queue over every exit, grant or drop.
    pub queue_exit_rounds: f64,
    pub storage_wait: f64,
    pub satisfied_events: u64,
    pub exit_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub n_runs: usize,
    pub n_rounds: u64,
    pub metrics: Vec<MetricSummary>,
    pub waits: WaitSummary,
    /// Mean over runs.
    pub not_satisfied_by_end: f64,
    pub never_satisfied_in_queue: f64,
    pub never_satisfied_by_battery: f64,
    /// Fraction of all rounds that ended with a nonempty queue.
    pub fraction_rounds_with_queue: f64,
}

impl SummaryTable {
    pub fn metric(&self, key: MetricKey) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.key == key)
    }

    pub fn mean(&self, key: MetricKey) -> f64 {
        self.metric(key).map(|m| m.mean).unwrap_or(f64::NAN)
    }

    pub fn value(&self, stat: Stat) -> Option<f64> {
        match stat {
            Stat::Round(key) => self.metric(key).map(|m| m.mean),
            Stat::RoundsInQueue => Some(self.waits.rounds_in_queue),
            Stat::RoundsToSatisfaction => Some(self.waits.rounds_to_satisfaction),
            Stat::StorageWait => Some(self.waits.storage_wait),
            Stat::NotSatisfiedByEnd => Some(self.not_satisfied_by_end),
            Stat::NeverSatisfiedInQueue => Some(self.never_satisfied_in_queue),
            Stat::NeverSatisfiedByBattery => Some(self.never_satisfied_by_battery),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no runs to aggregate")]
    NoRuns,
    #[error("run {0} was produced by a different scenario configuration")]
    ConfigMismatch(usize),
    #[error("run {0} has not finished")]
    Unfinished(usize),
    #[error("unknown reference table {0:?}")]
    UnknownReference(String),
}

/// Pool the per-run accumulators into one summary. Runs are merged in
/// index order.
pub fn aggregate(runs: &[RunAccumulator]) -> Result<SummaryTable, MetricsError> {
    let first = runs.first().ok_or(MetricsError::NoRuns)?;
    for (i, run) in runs.iter().enumerate() {
        if !first.config.same_scenario(&run.config) {
            return Err(MetricsError::ConfigMismatch(i));
        }
        if run.end.is_none() {
            return Err(MetricsError::Unfinished(i));
        }
    }

    let metrics = MetricKey::ALL
        .iter()
        .map(|&key| {
            let mut pooled = Welford::new();
            let mut between = Welford::new();
            for run in runs {
                pooled.merge(run.metric(key));
                between.push(run.metric(key).mean());
            }
            MetricSummary {
                key,
                label: key.label().to_string(),
                mean: pooled.mean(),
                stddev: pooled.stddev(),
                between_run_stddev: between.stddev(),
            }
        })
        .collect();

    let pool = |f: fn(&RunAccumulator) -> &Welford| {
        let mut w = Welford::new();
        for run in runs {
            w.merge(f(run));
        }
        w
    };
    let satisfied = pool(|r| &r.rounds_in_queue);
    let exits = pool(|r| &r.queue_exit_rounds);
    let waits = WaitSummary {
        rounds_in_queue: satisfied.mean(),
        rounds_to_satisfaction: pool(|r| &r.rounds_to_satisfaction).mean(),
        queue_exit_rounds: exits.mean(),
        storage_wait: pool(|r| &r.storage_wait).mean(),
        satisfied_events: satisfied.count(),
        exit_events: exits.count(),
    };

    let per_run_mean = |f: fn(&EndOfRun) -> usize| {
        runs.iter()
            .map(|r| f(r.end.as_ref().expect("checked above")) as f64)
            .sum::<f64>()
            / runs.len() as f64
    };
    let n_rounds: u64 = runs.iter().map(|r| r.rounds()).sum();
    let with_queue: u64 = runs.iter().map(|r| r.rounds_with_queue).sum();

    Ok(SummaryTable {
        n_runs: runs.len(),
        n_rounds,
        metrics,
        waits,
        not_satisfied_by_end: per_run_mean(|e| e.not_satisfied_by_end),
        never_satisfied_in_queue: per_run_mean(|e| e.never_satisfied_in_queue),
        never_satisfied_by_battery: per_run_mean(|e| e.never_satisfied_by_battery),
        fraction_rounds_with_queue: if n_rounds > 0 {
            with_queue as f64 / n_rounds as f64
        } else {
            0.0
        },
    })
}

/// A quantity that can be read off a [`SummaryTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Round(MetricKey),
    RoundsInQueue,
    RoundsToSatisfaction,
    StorageWait,
    NotSatisfiedByEnd,
    NeverSatisfiedInQueue,
    NeverSatisfiedByBattery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceTable {
    Table2Battery,
    Table2NoBattery,
    Table3Unopt,
    Table3Opt,
}

impl ReferenceTable {
    pub const ALL: [ReferenceTable; 4] = [
        ReferenceTable::Table2Battery,
        ReferenceTable::Table2NoBattery,
        ReferenceTable::Table3Unopt,
        ReferenceTable::Table3Opt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReferenceTable::Table2Battery => "table2_battery",
            ReferenceTable::Table2NoBattery => "table2_nobattery",
            ReferenceTable::Table3Unopt => "table3_unopt",
            ReferenceTable::Table3Opt => "table3_opt",
        }
    }

    /// Published values as `(stat, row label, value)`.
    pub fn rows(self) -> Vec<(Stat, &'static str, f64)> {
        use MetricKey::*;
        use Stat::*;
        match self {
            ReferenceTable::Table2Battery | ReferenceTable::Table2NoBattery => {
                let battery = self == ReferenceTable::Table2Battery;
                let pick = |with: f64, without: f64| if battery { with } else { without };
                let mut rows = vec![
                    (Round(EnergyDistributed), "Energy distributed per round", pick(99.5224, 99.5326)),
                    (Round(EnergyRequested), "Energy requested per round", pick(189.0862, 190.4968)),
                    (
                        Round(CustomersInQueue),
                        "Number of customers in the queue per round",
                        pick(91.5224, 92.9716),
                    ),
                    (
                        Round(CustomersReceived),
                        "Number of customers that received energy per round",
                        pick(203.1692, 202.5528),
                    ),
                    (
                        Round(CustomersRequested),
                        "Number of customers that requested energy per round",
                        pick(294.6916, 295.5244),
                    ),
                    (
                        Round(CustomersEnteredQueue),
                        "Number of customers that entered the queue per round",
                        pick(6.7464, 6.8888),
                    ),
                    (
                        Round(CustomersSatisfiedFromQueue),
                        "Number of customers that were satisfied in the queue per round",
                        pick(4.6908, 4.8032),
                    ),
                    (
                        NotSatisfiedByEnd,
                        "Number of customers not satisfied by the end of the rounds",
                        pick(102.78, 104.28),
                    ),
                    (
                        NeverSatisfiedInQueue,
                        "Number of customers that were never satisfied in the queue",
                        pick(79.36, 79.2),
                    ),
                    (
                        Round(TotalDelivered),
                        "Total energy delivered (Battery+Grid) per round",
                        pick(99.9886, 99.5326),
                    ),
                    (
                        RoundsToSatisfaction,
                        "Number of rounds a customer in the queue waits to be satisfied",
                        pick(10.5674, 10.7096),
                    ),
                    (
                        RoundsInQueue,
                        "Number of rounds a customer spends in the queue",
                        pick(9.1522, 9.2972),
                    ),
                ];
                if battery {
                    rows.extend([
                        (Round(BatteryDistributed), "Energy distributed by the battery per round", 0.4662),
                        (Round(BatteryAvailable), "Energy available in the battery per round", 9.4556),
                        (Round(BatteryRequested), "Energy requested from battery per round", 9.4556),
                        (
                            Round(CustomersRequestedBattery),
                            "Number of customers that requested from the battery per round",
                            9.2533,
                        ),
                        (
                            Round(CustomersReceivedBattery),
                            "Number of customers that received energy from the battery per round",
                            0.4752,
                        ),
                        (
                            NeverSatisfiedByBattery,
                            "Number of customer that were never satisfied by the battery",
                            25.82,
                        ),
                        (StorageWait, "Wait time to receive energy from the battery", 9.4713),
                    ]);
                }
                rows
            }
            ReferenceTable::Table3Unopt | ReferenceTable::Table3Opt => {
                let opt = self == ReferenceTable::Table3Opt;
                let pick = |unopt: f64, with_opt: f64| if opt { with_opt } else { unopt };
                vec![
                    (Round(EnergyDistributed), "Energy distributed per round", pick(99.53, 99.978)),
                    (Round(EnergyRequested), "Energy requested per round", pick(189.80, 148.23)),
                    (
                        Round(CustomersInQueue),
                        "Number of customers in the queue per round",
                        pick(92.29, 96.73),
                    ),
                    (
                        Round(CustomersReceived),
                        "Number of customers that received energy per round",
                        pick(203.10, 200.356),
                    ),
                    (
                        Round(CustomersRequested),
                        "Number of customers that requested energy per round",
                        pick(295.4, 297.11),
                    ),
                    (
                        Round(CustomersSatisfiedFromQueue),
                        "Number of customers that were satisfied in the queue per round",
                        pick(4.83, 47.73),
                    ),
                    (
                        Round(BatteryDistributed),
                        "Energy distributed by the solar energy system per round",
                        pick(2.417, 2.5571),
                    ),
                    (
                        Round(BatteryAvailable),
                        "Energy available in the battery of the solar energy system per round",
                        pick(0.897, 0.0020),
                    ),
                    (Round(SolarProduced), "Solar energy produced per round", pick(2.443, 2.5571)),
                    (
                        Round(CustomersRequestedBattery),
                        "Number of customers that requested solar energy per round",
                        pick(9.312, 49.9740),
                    ),
                    (
                        Round(CustomersReceivedBattery),
                        "Number of customers that received solar energy per round",
                        pick(2.476, 6.49),
                    ),
                    (
                        Round(TotalDelivered),
                        "Total energy delivered (Solar+Grid) per round",
                        pick(101.9, 102.55),
                    ),
                    (
                        RoundsToSatisfaction,
                        "Number of rounds a customer in the queue waits to be satisfied",
                        pick(10.56, 2.0856),
                    ),
                    (
                        RoundsInQueue,
                        "Number of rounds a customer spends in the queue",
                        pick(9.229, 9.67),
                    ),
                    (
                        StorageWait,
                        "Wait time to receive energy from the solar system",
                        pick(0.2033, 6.3794),
                    ),
                ]
            }
        }
    }
}

impl FromStr for ReferenceTable {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReferenceTable::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| MetricsError::UnknownReference(s.to_string()))
    }
}

/// Relative tolerances for a golden comparison. Stats without a tolerance
/// are reported but not judged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tolerances {
    pub default: Option<f64>,
    pub per_stat: BTreeMap<Stat, f64>,
}

impl Tolerances {
    pub fn uniform(tol: f64) -> Self {
        Self {
            default: Some(tol),
            per_stat: BTreeMap::new(),
        }
    }

    pub fn only(entries: impl IntoIterator<Item = (Stat, f64)>) -> Self {
        Self {
            default: None,
            per_stat: entries.into_iter().collect(),
        }
    }

    pub fn for_stat(&self, stat: Stat) -> Option<f64> {
        self.per_stat.get(&stat).copied().or(self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub stat: Stat,
    pub label: String,
    pub golden: f64,
    pub observed: Option<f64>,
    /// `|observed - golden| / |golden|`.
    pub relative_deviation: Option<f64>,
    pub tolerance: Option<f64>,
    /// `None` when the stat was not judged.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reference: ReferenceTable,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass != Some(false))
    }

    pub fn row(&self, stat: Stat) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.stat == stat)
    }
}

/// Relative deviation of each summary value from the published table.
pub fn compare_to_reference(
    summary: &SummaryTable,
    reference: ReferenceTable,
    tolerances: &Tolerances,
) -> ComparisonReport {
    let rows = reference
        .rows()
        .into_iter()
        .map(|(stat, label, golden)| {
            let observed = summary.value(stat);
            let relative_deviation = observed.map(|o| {
                if golden == 0.0 {
                    o.abs()
                } else {
                    (o - golden).abs() / golden.abs()
                }
            });
            let tolerance = tolerances.for_stat(stat);
            let pass = match (tolerance, relative_deviation) {
                (Some(t), Some(d)) => Some(d <= t),
                (Some(_), None) => Some(false),
                (None, _) => None,
            };
            ComparisonRow {
                stat,
                label: label.to_string(),
                golden,
                observed,
                relative_deviation,
                tolerance,
                pass,
            }
        })
        .collect();
    ComparisonReport { reference, rows }
}

/// CSV writer with one row per round. Columns: the caller's leading
/// columns, then `replica`, `round`, then every [`MetricKey`] in
/// declaration order.
pub struct RoundsCsvWriter<W: Write> {
    inner: csv::Writer<W>,
    leading: usize,
}

impl<W: Write> RoundsCsvWriter<W> {
    pub fn new(writer: W, leading_columns: &[&str]) -> csv::Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        let header: Vec<&str> = leading_columns
            .iter()
            .copied()
            .chain(["replica", "round"])
            .chain(MetricKey::ALL.iter().map(|k| k.key()))
            .collect();
        inner.write_record(&header)?;
        Ok(Self {
            inner,
            leading: leading_columns.len(),
        })
    }

    pub fn write(&mut self, leading: &[String], replica: usize, m: &RoundMetrics) -> csv::Result<()> {
        assert_eq!(leading.len(), self.leading, "leading column count");
        let record: Vec<String> = leading
            .iter()
            .cloned()
            .chain([replica.to_string(), m.round.to_string()])
            .chain(MetricKey::ALL.iter().map(|&k| format!("{}", m.value(k))))
            .collect();
        self.inner.write_record(&record)
    }

    pub fn into_inner(self) -> std::io::Result<W> {
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::tests::fig3_like;

    #[test]
    fn welford_single_value() {
        let w: Welford = [3.5].into_iter().collect();
        assert_eq!(w.mean(), 3.5);
        assert_eq!(w.stddev(), 0.0);
    }

    #[test]
    fn welford_constant_stream() {
        let w: Welford = std::iter::repeat_n(0.1, 1000).collect();
        assert!(w.stddev() < 1e-12);
    }

    #[test]
    fn welford_one_to_four() {
        // mean 2.5; sample variance = (2.25 + 0.25 + 0.25 + 2.25) / 3 = 5/3.
        let w: Welford = [1.0, 2.0, 3.0, 4.0].into_iter().collect();
        assert_eq!(w.mean(), 2.5);
        assert!((w.stddev() - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((w.stddev() - 1.2910).abs() < 1e-4);
    }

    #[test]
    fn welford_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 17) as f64 * 0.3).collect();
        let all: Welford = xs.iter().copied().collect();
        let mut left: Welford = xs[..40].iter().copied().collect();
        let right: Welford = xs[40..].iter().copied().collect();
        left.merge(&right);
        assert_eq!(left.count(), all.count());
        assert!((left.mean() - all.mean()).abs() < 1e-12);
        assert!((left.variance() - all.variance()).abs() < 1e-12);
    }

    fn summary_with(values: &[(MetricKey, f64)]) -> SummaryTable {
        let mut acc = RunAccumulator::new(fig3_like());
        let mut m = RoundMetrics::default();
        for &(k, v) in values {
            match k {
                MetricKey::EnergyDistributed => m.energy_distributed = v,
                MetricKey::CustomersInQueue => m.customers_in_queue = v as usize,
                _ => unimplemented!("test helper"),
            }
        }
        record_round(&m, &mut acc);
        acc.finish(EndOfRun::default());
        aggregate(&[acc]).unwrap()
    }

    #[test]
    fn single_run_summary_equals_round() {
        let s = summary_with(&[(MetricKey::EnergyDistributed, 42.0)]);
        assert_eq!(s.mean(MetricKey::EnergyDistributed), 42.0);
        assert_eq!(s.metric(MetricKey::EnergyDistributed).unwrap().stddev, 0.0);
        assert_eq!(s.n_rounds, 1);
    }

    #[test]
    fn aggregate_rejects_mismatch_and_unfinished() {
        let mut a = RunAccumulator::new(fig3_like());
        a.finish(EndOfRun::default());
        let mut other = fig3_like();
        other.energy_cap = 10.0;
        let mut b = RunAccumulator::new(other);
        b.finish(EndOfRun::default());
        assert_eq!(aggregate(&[a.clone(), b]), Err(MetricsError::ConfigMismatch(1)));
        let c = RunAccumulator::new(fig3_like());
        assert_eq!(aggregate(&[a, c]), Err(MetricsError::Unfinished(1)));
        assert_eq!(aggregate(&[]), Err(MetricsError::NoRuns));
    }

    #[test]
    fn golden_comparison_verdicts() {
        let s = summary_with(&[(MetricKey::EnergyDistributed, 99.5)]);
        let tol = Tolerances::only([(Stat::Round(MetricKey::EnergyDistributed), 0.05)]);
        let r = compare_to_reference(&s, ReferenceTable::Table2NoBattery, &tol);
        let row = r.row(Stat::Round(MetricKey::EnergyDistributed)).unwrap();
        assert_eq!(row.pass, Some(true));
        assert!(r.all_pass());

        let s = summary_with(&[(MetricKey::CustomersInQueue, 50.0)]);
        let tol = Tolerances::only([(Stat::Round(MetricKey::CustomersInQueue), 0.10)]);
        let r = compare_to_reference(&s, ReferenceTable::Table2NoBattery, &tol);
        let row = r.row(Stat::Round(MetricKey::CustomersInQueue)).unwrap();
        assert_eq!(row.pass, Some(false));
        assert!((row.relative_deviation.unwrap() - 0.4622).abs() < 1e-3);
    }

    #[test]
    fn exact_match_passes_everything() {
        for table in ReferenceTable::ALL {
            let mut s = summary_with(&[]);
            for (stat, _, v) in table.rows() {
                match stat {
                    Stat::Round(k) => {
                        let m = s.metrics.iter_mut().find(|m| m.key == k).unwrap();
                        m.mean = v;
                    }
                    Stat::RoundsInQueue => s.waits.rounds_in_queue = v,
                    Stat::RoundsToSatisfaction => s.waits.rounds_to_satisfaction = v,
                    Stat::StorageWait => s.waits.storage_wait = v,
                    Stat::NotSatisfiedByEnd => s.not_satisfied_by_end = v,
                    Stat::NeverSatisfiedInQueue => s.never_satisfied_in_queue = v,
                    Stat::NeverSatisfiedByBattery => s.never_satisfied_by_battery = v,
                }
            }
            assert!(compare_to_reference(&s, table, &Tolerances::uniform(0.0)).all_pass());
        }
    }

    #[test]
    fn reference_names_parse() {
        assert_eq!("table2_nobattery".parse(), Ok(ReferenceTable::Table2NoBattery));
        assert!(matches!(
            "table9".parse::<ReferenceTable>(),
            Err(MetricsError::UnknownReference(_))
        ));
    }

    #[test]
    fn csv_header_order() {
        let mut w = RoundsCsvWriter::new(Vec::new(), &["p_request"]).unwrap();
        w.write(&["0.5".into()], 0, &RoundMetrics::default()).unwrap();
        let bytes = w.into_inner().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("p_request,replica,round,energy_distributed,energy_requested"));
        assert_eq!(text.lines().count(), 2);
    }
}
