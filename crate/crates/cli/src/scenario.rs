//! Scenario descriptions: presets and config files resolve to these.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Deserialize;

use dpn_core::config::{validate_config, GridConfig};
use dpn_core::metrics::ReferenceTable;
use dpn_core::routing::{preset_topology, EnergyGraph, NodeId, Role, RoutingParams, TopologyDoc};
use dpn_core::routing::{load_topology, GENERATOR_BUSES};
use dpn_core::rng::RngStreams;
use dpn_core::Simulation;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
}

#[derive(Debug, Clone)]
pub enum ScenarioKind {
    /// One configuration, many replicas.
    Single {
        config: GridConfig,
        /// Per-round request vectors replacing the demand step.
        injected: Option<Vec<Vec<f64>>>,
        reference: Option<ReferenceTable>,
    },
    /// The same configuration over a (p_request, p_stay_on) grid.
    Sweep(SweepSpec),
    Routing(RoutingSpec),
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: GridConfig,
    pub p_request: Vec<f64>,
    pub p_stay_on: Vec<f64>,
}

impl SweepSpec {
    /// Grid points in row-major order (p_request outer).
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.p_request
            .iter()
            .flat_map(|&r| self.p_stay_on.iter().map(move |&s| (r, s)))
            .collect()
    }

    pub fn config_at(&self, p_request: f64, p_stay_on: f64) -> GridConfig {
        let mut c = self.base.clone();
        c.demand.p_request = p_request;
        c.demand.p_stay_on = p_stay_on;
        c
    }
}

#[derive(Debug, Clone)]
pub struct RoutingSpec {
    /// Built-in topology name or path to a topology file.
    pub topology: String,
    /// Nodes that may be picked as sources each round.
    pub source_pool: Vec<NodeId>,
    pub n_sources: usize,
    pub n_consumers: usize,
    pub params: RoutingParams,
    pub n_rounds: usize,
    pub seed: u64,
}

impl RoutingSpec {
    pub fn graph(&self) -> Result<EnergyGraph> {
        match preset_topology(&self.topology) {
            Ok(g) => Ok(g),
            Err(_) => {
                let doc = TopologyDoc::from_path(&self.topology)
                    .with_context(|| format!("topology `{}`", self.topology))?;
                Ok(load_topology(&doc)?)
            }
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ScenarioKind::Single { config, injected, .. } => {
                let sim = Simulation::new(config.clone(), RngStreams::new(config.seed))?;
                if let Some(rounds) = injected {
                    sim.with_injected_requests(rounds.clone())?;
                }
            }
            ScenarioKind::Sweep(s) => {
                ensure!(!s.p_request.is_empty() && !s.p_stay_on.is_empty(), "empty sweep grid");
                for (r, p) in s.points() {
                    validate_config(s.config_at(r, p))
                        .with_context(|| format!("sweep point p_request={r}, p_stay_on={p}"))?;
                }
            }
            ScenarioKind::Routing(r) => {
                let g = r.graph()?;
                ensure!(
                    (0.0..1.0).contains(&r.params.path_loss),
                    "routing.params.path_loss: {} outside [0, 1)",
                    r.params.path_loss
                );
                for &n in &r.source_pool {
                    ensure!(g.contains(n), "routing.source_pool: unknown node {n}");
                }
                ensure!(
                    r.n_sources >= 1 && r.n_sources <= r.source_pool.len(),
                    "routing.n_sources: need between 1 and {} sources",
                    r.source_pool.len()
                );
                ensure!(
                    r.n_sources + r.n_consumers <= g.node_count(),
                    "routing.n_consumers: graph has only {} nodes",
                    g.node_count()
                );
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self.kind {
            ScenarioKind::Single { config, .. } => config.seed = seed,
            ScenarioKind::Sweep(s) => s.base.seed = seed,
            ScenarioKind::Routing(r) => r.seed = seed,
        }
        self
    }

    pub fn with_injected(mut self, rounds: Vec<Vec<f64>>) -> Result<Self> {
        match &mut self.kind {
            ScenarioKind::Single { injected, .. } => *injected = Some(rounds),
            _ => bail!("--inject-requests only applies to single-configuration scenarios"),
        }
        Ok(self)
    }

    /// Load a scenario from a grid config file. Optional `sweep` and
    /// `routing` tables turn it into a sweep or a routing scenario.
    pub fn from_config_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let file: ScenarioFile = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "config".into());
        let base_dir = path.parent().unwrap_or(Path::new("."));
        let kind = match (file.sweep, file.routing) {
            (Some(_), Some(_)) => bail!("a config may define `sweep` or `routing`, not both"),
            (Some(s), None) => ScenarioKind::Sweep(SweepSpec {
                base: file.grid,
                p_request: s.p_request,
                p_stay_on: s.p_stay_on,
            }),
            (None, Some(r)) => {
                let topology = if preset_topology(&r.topology).is_ok() {
                    r.topology
                } else {
                    resolve(base_dir, &r.topology)
                };
                let mut spec = RoutingSpec {
                    topology,
                    source_pool: Vec::new(),
                    n_sources: r.n_sources,
                    n_consumers: r.n_consumers,
                    params: r.params,
                    n_rounds: file.grid.n_rounds,
                    seed: file.grid.seed,
                };
                spec.source_pool = match r.source_pool {
                    Some(pool) => pool,
                    None => default_pool(&spec)?,
                };
                ScenarioKind::Routing(spec)
            }
            (None, None) => ScenarioKind::Single {
                config: file.grid,
                injected: None,
                reference: file.reference,
            },
        };
        Ok(Scenario { name, kind })
    }
}

fn resolve(base: &Path, p: &str) -> String {
    let p = PathBuf::from(p);
    if p.is_absolute() { p } else { base.join(p) }.display().to_string()
}

/// Source-role nodes of the topology, or the generator buses of the
/// built-in system.
fn default_pool(spec: &RoutingSpec) -> Result<Vec<NodeId>> {
    if spec.topology == "ieee39" {
        return Ok(GENERATOR_BUSES.to_vec());
    }
    let pool = spec.graph()?.nodes_with_role(Role::Source);
    ensure!(!pool.is_empty(), "routing.source_pool: topology has no source nodes");
    Ok(pool)
}

#[derive(Debug, Deserialize)]
struct ScenarioFile {
    #[serde(flatten)]
    grid: GridConfig,
    #[serde(default)]
    reference: Option<ReferenceTable>,
    #[serde(default)]
    sweep: Option<SweepSection>,
    #[serde(default)]
    routing: Option<RoutingSection>,
}

#[derive(Debug, Deserialize)]
struct SweepSection {
    p_request: Vec<f64>,
    p_stay_on: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct RoutingSection {
    topology: String,
    #[serde(default)]
    source_pool: Option<Vec<NodeId>>,
    n_sources: usize,
    n_consumers: usize,
    #[serde(default)]
    params: RoutingParams,
}
