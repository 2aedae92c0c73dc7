//! Experiment specification: a TOML document with strict key checking.

use std::path::{Path, PathBuf};

use oneshot_td::consensus::{erdos_renyi_connected, random_strongly_connected, Graph};
use oneshot_td::features::FeatureMap;
use oneshot_td::gridworld::Gridworld;
use oneshot_td::io;
use oneshot_td::mdp::{Mdp, Policy};
use oneshot_td::rng;
use oneshot_td::swarm::{Init, Sampling, SwarmConfig};
use oneshot_td::td::{decaying_constants, StepSchedule, TheoremPart, DEFAULT_DIVERGENCE_GUARD};
use oneshot_td::Problem;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub seed: u64,
    /// Defaults to 1 for `run` and 200 for `sweep` and `check-bounds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub environment: Environment,
    #[serde(default)]
    pub features: FeatureSpec,
    #[serde(default)]
    pub policy: PolicySpec,
    pub swarm: SwarmSpec,
    pub schedule: ScheduleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSpec>,
    #[serde(default)]
    pub consensus: ConsensusSpec,
    #[serde(default)]
    pub bounds: BoundsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Environment {
    Gridworld(Gridworld),
    RandomMdp(RandomMdp),
    File(MdpFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMdp {
    #[serde(default = "RandomMdp::default_states")]
    pub states: usize,
    #[serde(default = "RandomMdp::default_actions")]
    pub actions: usize,
    #[serde(default = "RandomMdp::default_gamma")]
    pub gamma: f64,
    #[serde(default = "RandomMdp::default_seed")]
    pub seed: u64,
}

impl RandomMdp {
    fn default_states() -> usize {
        10
    }
    fn default_actions() -> usize {
        2
    }
    fn default_gamma() -> f64 {
        0.5
    }
    fn default_seed() -> u64 {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FeatureSpec {
    #[default]
    Tabular,
    /// Drawn after the MDP from the environment's stream for `random-mdp`,
    /// from `seed` otherwise.
    Random { dim: usize, seed: Option<u64> },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    #[default]
    Uniform,
    Deterministic { actions: Vec<usize> },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmSpec {
    pub agents: usize,
    pub horizon: usize,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub init: Init,
    /// Trace stride; defaults to `ceil(T / 1000)`, `0` disables the trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_every: Option<usize>,
    #[serde(default)]
    pub identical_seeds: bool,
    #[serde(default = "default_guard")]
    pub divergence_guard: f64,
}

fn default_guard() -> f64 {
    DEFAULT_DIVERGENCE_GUARD
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant { alpha: f64 },
    /// `1/sqrt(T)` with `T` the swarm horizon.
    InvSqrtT,
    /// Missing constants take the theorem's values.
    Decaying { alpha: Option<f64>, tau: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    pub graph: GraphSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphSpec {
    ErdosRenyi { p: f64, seed: u64 },
    Complete,
    Path,
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusSpec {
    /// Accuracy of the consensus used to read out the one-shot curve.
    #[serde(default = "ConsensusSpec::default_eps")]
    pub eps: f64,
    /// Graph used for the one-shot read-out and `consensus-demo`; falls back
    /// to the baseline graph, then to exact averaging.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    #[serde(default = "ConsensusSpec::default_nodes")]
    pub nodes: usize,
    #[serde(default = "ConsensusSpec::default_directed_nodes")]
    pub directed_nodes: usize,
    #[serde(default = "ConsensusSpec::default_directed_p")]
    pub directed_p: f64,
    #[serde(default = "ConsensusSpec::default_rounds")]
    pub rounds: usize,
}

impl ConsensusSpec {
    fn default_eps() -> f64 {
        1e-8
    }
    fn default_nodes() -> usize {
        100
    }
    fn default_directed_nodes() -> usize {
        50
    }
    fn default_directed_p() -> f64 {
        0.05
    }
    fn default_rounds() -> usize {
        200
    }
}

impl Default for ConsensusSpec {
    fn default() -> Self {
        Self {
            eps: Self::default_eps(),
            graph: None,
            nodes: Self::default_nodes(),
            directed_nodes: Self::default_directed_nodes(),
            directed_p: Self::default_directed_p(),
            rounds: Self::default_rounds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    #[serde(default)]
    pub parts: Vec<TheoremPart>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Agents,
    Alpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// A spec together with the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedSpec {
    pub spec: ExperimentSpec,
    pub base_dir: PathBuf,
}

pub fn parse_spec(text: &str) -> CliResult<ExperimentSpec> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(1);
        CliError::Spec { line, msg: e.message().to_string() }
    })
}

pub fn load_spec(path: &Path) -> CliResult<LoadedSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let spec = parse_spec(&text)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedSpec { spec, base_dir })
}

fn read(base: &Path, rel: &Path) -> CliResult<String> {
    let path = base.join(rel);
    std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))
}

impl ExperimentSpec {
    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        let canonical = self.canonical();
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.swarm.agents == 0 || self.swarm.horizon == 0 {
            return Err(CliError::validation("swarm.agents and swarm.horizon must be positive"));
        }
        if self.replications == Some(0) {
            return Err(CliError::validation("replications must be positive"));
        }
        if !(self.consensus.eps > 0.0) {
            return Err(CliError::validation("consensus.eps must be positive"));
        }
        if let Some(sweep) = &self.sweep {
            sweep.validate()?;
        }
        Ok(())
    }
}

impl SweepSpec {
    pub fn validate(&self) -> CliResult<()> {
        if self.values.is_empty() {
            return Err(CliError::validation("sweep.values is empty"));
        }
        for &v in &self.values {
            let ok = match self.axis {
                SweepAxis::Agents => v >= 1.0 && v.fract() == 0.0,
                SweepAxis::Alpha => v > 0.0 && v.is_finite(),
            };
            if !ok {
                return Err(CliError::validation(format!("invalid {:?} sweep value {v}", self.axis)));
            }
        }
        Ok(())
    }
}

impl LoadedSpec {
    pub fn problem(&self) -> CliResult<Problem> {
        let spec = &self.spec;
        let (mdp, mut env_rng) = match &spec.environment {
            Environment::Gridworld(g) => (g.mdp()?, None),
            Environment::RandomMdp(r) => {
                let mut stream = rng::stream(r.seed);
                (Mdp::random(r.states, r.actions, r.gamma, &mut stream)?, Some(stream))
            }
            Environment::File(f) => (io::parse_mdp(&read(&self.base_dir, &f.path)?)?, None),
        };
        let n = mdp.n_states();
        let features = match &spec.features {
            FeatureSpec::Tabular => FeatureMap::tabular(n),
            FeatureSpec::Random { dim, seed } => match (seed, env_rng.as_mut()) {
                (None, Some(stream)) => FeatureMap::random(n, *dim, stream)?,
                (seed, _) => FeatureMap::random(n, *dim, &mut rng::stream(seed.unwrap_or(0)))?,
            },
            FeatureSpec::File { path } => io::parse_features(&read(&self.base_dir, path)?)?,
        };
        let policy = match &spec.policy {
            PolicySpec::Uniform => Policy::uniform(n, mdp.n_actions()),
            PolicySpec::Deterministic { actions } => Policy::deterministic(mdp.n_actions(), actions)?,
            PolicySpec::File { path } => io::parse_policy(&read(&self.base_dir, path)?)?,
        };
        Ok(Problem::new(mdp, policy, features)?)
    }

    pub fn graph(&self, spec: &GraphSpec, nodes: usize) -> CliResult<Graph> {
        Ok(match spec {
            GraphSpec::ErdosRenyi { p, seed } => erdos_renyi_connected(nodes, *p, &mut rng::stream(*seed))?,
            GraphSpec::Complete => Graph::complete(nodes),
            GraphSpec::Path => Graph::path(nodes),
            GraphSpec::File { path } => {
                let g = io::parse_graph(&read(&self.base_dir, path)?)?;
                if g.n_nodes() != nodes || g.is_directed() {
                    return Err(CliError::validation(format!(
                        "graph file {} must be undirected with {nodes} nodes",
                        path.display()
                    )));
                }
                g
            }
        })
    }

    pub fn directed_graph(&self) -> CliResult<Graph> {
        let c = &self.spec.consensus;
        Ok(random_strongly_connected(c.directed_nodes, c.directed_p, &mut rng::stream(self.spec.seed))?)
    }

    pub fn schedule(&self, problem: &Problem) -> StepSchedule {
        match self.spec.schedule {
            ScheduleSpec::Constant { alpha } => StepSchedule::Constant { alpha },
            ScheduleSpec::InvSqrtT => StepSchedule::InvSqrtT { horizon: self.spec.swarm.horizon },
            ScheduleSpec::Decaying { alpha, tau } => {
                let (a, t) = decaying_constants(problem.gamma(), problem.oracle.omega);
                StepSchedule::Decaying { alpha: alpha.unwrap_or(a), tau: tau.unwrap_or(t) }
            }
        }
    }

    pub fn swarm_config(&self, schedule: StepSchedule) -> SwarmConfig {
        let s = &self.spec.swarm;
        let mut cfg = SwarmConfig::new(s.agents, s.horizon, schedule).with_seed(self.spec.seed);
        cfg.sampling = s.sampling;
        cfg.init = s.init.clone();
        if let Some(stride) = s.trace_every {
            cfg.trace_every = stride;
        }
        cfg.identical_seeds = s.identical_seeds;
        cfg.divergence_guard = s.divergence_guard;
        cfg
    }
}
