//! Executing scenarios and writing their artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use dpn_core::config::GridConfig;
use dpn_core::metrics::{
    aggregate, compare_to_reference, ComparisonReport, MetricKey, ReferenceTable, RoundsCsvWriter,
    Stat, SummaryTable, Tolerances,
};
use dpn_core::rng::{Concern, RngStream};
use dpn_core::routing::{
    export_snapshot, route, EnergyGraph, NodeId, Role, RoutingPlan, SnapshotFormat,
};
use dpn_core::{run_replicas, RunOutput};

use crate::scenario::{RoutingSpec, Scenario, ScenarioKind, SweepSpec};

/// What `--format` asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    /// Only the CSV files and the summary.
    Csv,
    /// Adds rounds.json, or only snapshot.json for routing scenarios.
    Json,
    /// Only snapshot.dot (routing scenarios).
    Dot,
}

impl FromStr for OutputFormat {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "dot" => Ok(OutputFormat::Dot),
            other => bail!("unknown format `{other}` (expected csv, json or dot)"),
        }
    }
}

pub struct SingleOutcome {
    pub config: GridConfig,
    pub runs: Vec<RunOutput>,
    pub summary: SummaryTable,
    pub comparison: Option<ComparisonReport>,
}

pub struct SweepPoint {
    pub p_request: f64,
    pub p_stay_on: f64,
    pub runs: Vec<RunOutput>,
    pub summary: SummaryTable,
}

pub struct RoutingRound {
    pub round: usize,
    pub sources: Vec<NodeId>,
    pub demands: Vec<(NodeId, f64)>,
    /// Graph with this round's source roles set.
    pub graph: EnergyGraph,
    pub plan: RoutingPlan,
}

#[allow(clippy::large_enum_variant)]
pub enum Outcome {
    Single(SingleOutcome),
    Sweep(Vec<SweepPoint>),
    Routing(Vec<RoutingRound>),
}

/// Tolerances judged in summary.json for each reference table.
pub fn reference_tolerances(reference: ReferenceTable) -> Tolerances {
    match reference {
        ReferenceTable::Table2NoBattery => Tolerances::only([
            (Stat::Round(MetricKey::EnergyDistributed), 0.01),
            (Stat::Round(MetricKey::CustomersReceived), 0.10),
            (Stat::Round(MetricKey::CustomersInQueue), 0.15),
            (Stat::Round(MetricKey::CustomersRequested), 0.10),
        ]),
        _ => Tolerances::default(),
    }
}

fn run_single(config: &GridConfig, injected: Option<&[Vec<f64>]>) -> Result<(Vec<RunOutput>, SummaryTable)> {
    let runs = run_replicas(config, injected)?;
    let accs: Vec<_> = runs.iter().map(|r| r.accumulator.clone()).collect();
    let summary = aggregate(&accs)?;
    Ok((runs, summary))
}

pub fn execute(scenario: &Scenario) -> Result<Outcome> {
    scenario.validate()?;
    match &scenario.kind {
        ScenarioKind::Single {
            config,
            injected,
            reference,
        } => {
            let (runs, summary) = run_single(config, injected.as_deref())?;
            let comparison =
                reference.map(|r| compare_to_reference(&summary, r, &reference_tolerances(r)));
            Ok(Outcome::Single(SingleOutcome {
                config: config.clone(),
                runs,
                summary,
                comparison,
            }))
        }
        ScenarioKind::Sweep(spec) => Ok(Outcome::Sweep(run_sweep(spec)?)),
        ScenarioKind::Routing(spec) => Ok(Outcome::Routing(run_routing(spec)?)),
    }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    spec.points()
        .into_par_iter()
        .map(|(p_request, p_stay_on)| {
            let (runs, summary) = run_single(&spec.config_at(p_request, p_stay_on), None)?;
            Ok(SweepPoint {
                p_request,
                p_stay_on,
                runs,
                summary,
            })
        })
        .collect()
}

/// Each round draws fresh sources from the pool, consumers from the
/// remaining nodes and demands on `(0, 1]`, all from the routing stream.
pub fn run_routing(spec: &RoutingSpec) -> Result<Vec<RoutingRound>> {
    let base = spec.graph()?;
    let mut rng = RngStream::new(spec.seed, Concern::Routing);
    let mut rounds = Vec::with_capacity(spec.n_rounds);
    for round in 0..spec.n_rounds {
        let mut pool = spec.source_pool.clone();
        rng.shuffle(&mut pool);
        let mut sources = pool[..spec.n_sources].to_vec();
        sources.sort_unstable();
        let mut rest: Vec<NodeId> = base
            .nodes()
            .iter()
            .map(|n| n.id)
            .filter(|id| !sources.contains(id))
            .collect();
        rest.sort_unstable();
        rng.shuffle(&mut rest);
        let mut consumers = rest[..spec.n_consumers].to_vec();
        consumers.sort_unstable();
        let demands: Vec<(NodeId, f64)> =
            consumers.iter().map(|&c| (c, rng.uniform_positive(1.0))).collect();

        let mut graph = base.clone();
        graph.clear_roles();
        for &s in &sources {
            graph.set_role(s, Role::Source)?;
        }
        let plan = route(&graph, &demands, &spec.params)?;
        rounds.push(RoutingRound {
            round,
            sources,
            demands,
            graph,
            plan,
        });
    }
    Ok(rounds)
}

#[derive(Serialize)]
struct SingleSummary<'a> {
    scenario: &'a str,
    config: &'a GridConfig,
    summary: &'a SummaryTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<&'a ComparisonReport>,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    scenario: &'a str,
    base: &'a GridConfig,
    points: Vec<SweepPointSummary<'a>>,
}

#[derive(Serialize)]
struct SweepPointSummary<'a> {
    p_request: f64,
    p_stay_on: f64,
    summary: &'a SummaryTable,
}

#[derive(Serialize)]
struct RoutingSummary<'a> {
    scenario: &'a str,
    topology: &'a str,
    params: &'a dpn_core::routing::RoutingParams,
    rounds: usize,
    mean_assigned: f64,
    mean_queued: f64,
    mean_sent: f64,
    mean_delivered: f64,
    max_source_load: usize,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(dir.join(name))
}

/// Write the artifacts of `outcome` into `out`, creating it if needed.
/// Returns the written paths.
pub fn write_outputs(
    scenario: &Scenario,
    outcome: &Outcome,
    out: &Path,
    format: Option<OutputFormat>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut written = Vec::new();
    match outcome {
        Outcome::Single(o) => {
            if format == Some(OutputFormat::Dot) {
                bail!("--format dot needs a routing scenario");
            }
            let mut w = RoundsCsvWriter::new(create(out, "rounds.csv")?, &[])?;
            for run in &o.runs {
                for m in &run.rounds {
                    w.write(&[], run.replica, m)?;
                }
            }
            w.into_inner()?.flush()?;
            written.push(out.join("rounds.csv"));
            let summary = SingleSummary {
                scenario: &scenario.name,
                config: &o.config,
                summary: &o.summary,
                comparison: o.comparison.as_ref(),
            };
            written.push(write_json(out, "summary.json", &summary)?);
            if format == Some(OutputFormat::Json) {
                let rounds: Vec<_> = o.runs.iter().map(|r| &r.rounds).collect();
                written.push(write_json(out, "rounds.json", &rounds)?);
            }
        }
        Outcome::Sweep(points) => {
            if format == Some(OutputFormat::Dot) {
                bail!("--format dot needs a routing scenario");
            }
            let mut w = RoundsCsvWriter::new(create(out, "rounds.csv")?, &["p_request", "p_stay_on"])?;
            for p in points {
                let lead = [p.p_request.to_string(), p.p_stay_on.to_string()];
                for run in &p.runs {
                    for m in &run.rounds {
                        w.write(&lead, run.replica, m)?;
                    }
                }
            }
            w.into_inner()?.flush()?;
            written.push(out.join("rounds.csv"));
            written.push(write_sweep_csv(out, points)?);
            let ScenarioKind::Sweep(spec) = &scenario.kind else {
                bail!("sweep outcome for a non-sweep scenario");
            };
            let summary = SweepSummary {
                scenario: &scenario.name,
                base: &spec.base,
                points: points
                    .iter()
                    .map(|p| SweepPointSummary {
                        p_request: p.p_request,
                        p_stay_on: p.p_stay_on,
                        summary: &p.summary,
                    })
                    .collect(),
            };
            written.push(write_json(out, "summary.json", &summary)?);
        }
        Outcome::Routing(rounds) => {
            let ScenarioKind::Routing(spec) = &scenario.kind else {
                bail!("routing outcome for a non-routing scenario");
            };
            written.push(write_routing_csv(out, rounds)?);
            written.push(write_json(out, "summary.json", &routing_summary(scenario, spec, rounds))?);
            if let Some(first) = rounds.first() {
                let formats: &[SnapshotFormat] = match format {
                    None => &[SnapshotFormat::Dot, SnapshotFormat::Json],
                    Some(OutputFormat::Dot) => &[SnapshotFormat::Dot],
                    Some(OutputFormat::Json) => &[SnapshotFormat::Json],
                    Some(OutputFormat::Csv) => &[],
                };
                for &f in formats {
                    let name = match f {
                        SnapshotFormat::Dot => "snapshot.dot",
                        SnapshotFormat::Json => "snapshot.json",
                    };
                    let mut w = create(out, name)?;
                    w.write_all(export_snapshot(&first.plan, &first.graph, f).as_bytes())?;
                    w.flush()?;
                    written.push(out.join(name));
                }
            }
        }
    }
    Ok(written)
}

fn write_sweep_csv(out: &Path, points: &[SweepPoint]) -> Result<PathBuf> {
    let mut w = csv::Writer::from_writer(create(out, "sweep.csv")?);
    w.write_record([
        "p_request",
        "p_stay_on",
        "customers_in_queue",
        "fraction_rounds_with_queue",
        "rounds_in_queue",
        "queue_exit_rounds",
        "rounds_to_satisfaction",
        "queue_exit_events",
        "energy_distributed",
        "customers_requested",
    ])?;
    for p in points {
        let s = &p.summary;
        w.write_record(
            [
                p.p_request,
                p.p_stay_on,
                s.mean(MetricKey::CustomersInQueue),
                s.fraction_rounds_with_queue,
                s.waits.rounds_in_queue,
                s.waits.queue_exit_rounds,
                s.waits.rounds_to_satisfaction,
                s.waits.exit_events as f64,
                s.mean(MetricKey::EnergyDistributed),
                s.mean(MetricKey::CustomersRequested),
            ]
            .iter()
            .map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(out.join("sweep.csv"))
}

fn write_routing_csv(out: &Path, rounds: &[RoutingRound]) -> Result<PathBuf> {
    let mut w = csv::Writer::from_writer(create(out, "rounds.csv")?);
    w.write_record([
        "round",
        "sources",
        "consumers",
        "assigned",
        "queued",
        "pass_through",
        "total_sent",
        "total_delivered",
        "max_source_load",
    ])?;
    for r in rounds {
        let roles = r.plan.node_roles(&r.graph);
        let pass = roles.values().filter(|&&role| role == Role::PassThrough).count();
        let delivered: f64 = r.plan.assignments.iter().map(|a| a.delivered).sum();
        let max_load = r.plan.load_per_source().into_values().max().unwrap_or(0);
        let join = |ids: &mut dyn Iterator<Item = NodeId>| {
            ids.map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
        };
        w.write_record([
            r.round.to_string(),
            join(&mut r.sources.iter().copied()),
            join(&mut r.demands.iter().map(|d| d.0)),
            r.plan.assignments.len().to_string(),
            r.plan.queued.len().to_string(),
            pass.to_string(),
            r.plan.total_sent().to_string(),
            delivered.to_string(),
            max_load.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(out.join("rounds.csv"))
}

fn routing_summary<'a>(
    scenario: &'a Scenario,
    spec: &'a RoutingSpec,
    rounds: &[RoutingRound],
) -> RoutingSummary<'a> {
    let n = rounds.len().max(1) as f64;
    let mean = |f: &dyn Fn(&RoutingRound) -> f64| rounds.iter().map(f).sum::<f64>() / n;
    RoutingSummary {
        scenario: &scenario.name,
        topology: &spec.topology,
        params: &spec.params,
        rounds: rounds.len(),
        mean_assigned: mean(&|r| r.plan.assignments.len() as f64),
        mean_queued: mean(&|r| r.plan.queued.len() as f64),
        mean_sent: mean(&|r| r.plan.total_sent()),
        mean_delivered: mean(&|r| r.plan.assignments.iter().map(|a| a.delivered).sum()),
        max_source_load: rounds
            .iter()
            .filter_map(|r| r.plan.load_per_source().into_values().max())
            .max()
            .unwrap_or(0),
    }
}
