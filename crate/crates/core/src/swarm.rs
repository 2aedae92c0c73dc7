//! N independent TD(0) agents with one-shot averaging, and the
//! mix-every-step baseline.
//!
//! Agent `v` draws all of its samples from [`rng::agent_stream`]`(master_seed, v)`,
//! so a swarm's output depends only on its configuration, never on thread
//! count or scheduling. Network averages are always reduced in agent-id
//! order.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::consensus::WeightMatrix;
use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::rng::{self, Stream};
use crate::stats::Welford;
use crate::td::{local_step, LearnerState, StepSchedule, DEFAULT_DIVERGENCE_GUARD};

/// Where the observed states come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// `s ~ pi` independently at every step.
    #[default]
    Iid,
    /// A single trajectory per agent started from `s ~ pi`. Not covered by the
    /// convergence guarantees.
    Markov,
}

/// Initial parameters `theta_v(0)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Init {
    #[default]
    Zeros,
    Constant { theta: Vec<f64> },
    /// `theta_v(0) = radius * z_v` with `z_v` standard normal, seeded per agent.
    Gaussian { radius: f64, seed: u64 },
}

impl Init {
    pub fn theta0(&self, agent: usize, dim: usize) -> Result<DVector<f64>> {
        match self {
            Init::Zeros => Ok(DVector::zeros(dim)),
            Init::Constant { theta } => {
                if theta.len() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "initial theta has {} entries, features have {dim}",
                        theta.len()
                    )));
                }
                Ok(DVector::from_column_slice(theta))
            }
            Init::Gaussian { radius, seed } => {
                let mut r = rng::stream(rng::derive_seed(*seed, agent as u64));
                Ok(DVector::from_fn(dim, |_, _| radius * r.sample::<f64, _>(StandardNormal)))
            }
        }
    }

    /// All agents' initial parameters.
    pub fn all(&self, agents: usize, dim: usize) -> Result<Vec<DVector<f64>>> {
        (0..agents).map(|v| self.theta0(v, dim)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmConfig {
    pub agents: usize,
    pub horizon: usize,
    pub schedule: StepSchedule,
    pub sampling: Sampling,
    pub master_seed: u64,
    pub init: Init,
    /// Trace stride in steps; `0` disables the trace.
    pub trace_every: usize,
    /// Keep every agent's parameters at each trace point.
    pub record_agents: bool,
    /// Give every agent the same stream (degenerate test mode).
    pub identical_seeds: bool,
    pub divergence_guard: f64,
}

impl SwarmConfig {
    /// Defaults: i.i.d. sampling, zero initialization, a trace point every
    /// `ceil(T / 1000)` steps.
    pub fn new(agents: usize, horizon: usize, schedule: StepSchedule) -> Self {
        Self {
            agents,
            horizon,
            schedule,
            sampling: Sampling::Iid,
            master_seed: 0,
            init: Init::Zeros,
            trace_every: default_trace_stride(horizon),
            record_agents: false,
            identical_seeds: false,
            divergence_guard: DEFAULT_DIVERGENCE_GUARD,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn without_trace(mut self) -> Self {
        self.trace_every = 0;
        self
    }

    pub fn validate(&self, problem: &Problem) -> Result<()> {
        if self.agents == 0 || self.horizon == 0 {
            return Err(Error::InvalidParameter(format!(
                "agents and horizon must be positive (got N={}, T={})",
                self.agents, self.horizon
            )));
        }
        if !self.schedule.is_non_increasing() || !(self.schedule.alpha(0) > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid step schedule {:?}", self.schedule)));
        }
        // Surfaces dimension errors before any agent runs.
        self.init.theta0(0, problem.dim())?;
        Ok(())
    }

    /// Whether the convergence theorem's premises (i.i.d. sampling and a
    /// compliant schedule) hold for this run.
    pub fn theorem_applies(&self, problem: &Problem) -> bool {
        self.sampling == Sampling::Iid && self.schedule.check_compliance(problem.gamma(), problem.oracle.omega).is_ok()
    }

    fn agent_stream(&self, agent: usize) -> Stream {
        let id = if self.identical_seeds { 0 } else { agent };
        rng::agent_stream(self.master_seed, id)
    }

    fn trace_steps(&self) -> Vec<usize> {
        if self.trace_every == 0 {
            return Vec::new();
        }
        let mut steps: Vec<usize> = (0..self.horizon).step_by(self.trace_every).collect();
        steps.push(self.horizon);
        steps
    }
}

pub fn default_trace_stride(horizon: usize) -> usize {
    horizon.div_ceil(1000).max(1)
}

/// Network-level quantities at one recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub step: usize,
    /// `theta_bar(t)`, the exact network average.
    pub theta_bar: DVector<f64>,
    /// Average of the agents' running averages.
    pub theta_hat: DVector<f64>,
    /// `|theta_bar(t) - theta*|^2`.
    pub sq_err: f64,
    /// `|V_{theta_hat} - V*|_D^2` and `|V_{theta_hat} - V*|_Dir^2`.
    pub d_err_hat: f64,
    pub dir_err_hat: f64,
    /// `|V_{theta_bar} - V^mu|_D`.
    pub value_err: f64,
    pub agents: Option<Vec<DVector<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmResult {
    /// `theta_bar(T) = (1/N) sum_v theta_v(T)`.
    pub theta_bar: DVector<f64>,
    /// `theta_hat(T) = (1/N) sum_v theta_hat_v(T)`, averaging steps `0..=T`.
    pub theta_hat: DVector<f64>,
    /// `(1/T) sum_{t=1..T} theta_bar(t)`, the average without the initial point.
    pub theta_hat_tail: DVector<f64>,
    pub per_agent_final: Vec<DVector<f64>>,
    pub per_agent_hat: Vec<DVector<f64>>,
    pub trace: Vec<TracePoint>,
    /// False for Markov sampling or a non-compliant schedule.
    pub theorem_applies: bool,
}

impl SwarmResult {
    pub fn sq_err(&self, problem: &Problem) -> f64 {
        problem.sq_dist(&self.theta_bar)
    }
}

struct AgentRun {
    state: LearnerState,
    tail_sum: DVector<f64>,
    snapshots: Vec<(DVector<f64>, DVector<f64>)>,
}

fn run_agent(problem: &Problem, cfg: &SwarmConfig, v: usize, trace: &[usize]) -> Result<AgentRun> {
    let fm = &problem.features;
    let gamma = problem.gamma();
    let mut rng = cfg.agent_stream(v);
    let mut state = LearnerState::new(cfg.init.theta0(v, problem.dim())?);
    let mut tail_sum = DVector::zeros(problem.dim());
    let mut snapshots = Vec::with_capacity(trace.len());
    let mut next_trace = trace.iter().peekable();
    let mut current = match cfg.sampling {
        Sampling::Iid => 0,
        Sampling::Markov => problem.sampler.sample_state(&mut rng),
    };
    for t in 0..cfg.horizon {
        if next_trace.peek() == Some(&&t) {
            snapshots.push((state.theta.clone(), state.theta_hat.clone()));
            next_trace.next();
        }
        let tuple = match cfg.sampling {
            Sampling::Iid => problem.sampler.sample_iid(&mut rng),
            Sampling::Markov => {
                let tuple = problem.sampler.sample_markov_step(current, &mut rng);
                current = tuple.s_next;
                tuple
            }
        };
        state
            .td0_update(fm, &tuple, cfg.schedule.alpha(t), gamma, cfg.divergence_guard)
            .map_err(|e| match e {
                Error::Divergence { step, norm, .. } => Error::Divergence { agent: v, step, norm },
                other => other,
            })?;
        tail_sum += &state.theta;
    }
    if next_trace.peek().is_some() {
        snapshots.push((state.theta.clone(), state.theta_hat.clone()));
    }
    Ok(AgentRun { state, tail_sum, snapshots })
}

fn mean_in_order<'a>(vs: impl Iterator<Item = &'a DVector<f64>>, dim: usize) -> DVector<f64> {
    let mut sum = DVector::zeros(dim);
    let mut count = 0usize;
    for v in vs {
        sum += v;
        count += 1;
    }
    sum / count as f64
}

fn assemble(problem: &Problem, cfg: &SwarmConfig, runs: Vec<AgentRun>, trace_steps: &[usize]) -> SwarmResult {
    let dim = problem.dim();
    let theta_bar = mean_in_order(runs.iter().map(|r| &r.state.theta), dim);
    let theta_hat = mean_in_order(runs.iter().map(|r| &r.state.theta_hat), dim);
    let theta_hat_tail = mean_in_order(runs.iter().map(|r| &r.tail_sum), dim) / cfg.horizon as f64;
    let trace = trace_steps
        .iter()
        .enumerate()
        .map(|(i, &step)| {
            let bar = mean_in_order(runs.iter().map(|r| &r.snapshots[i].0), dim);
            let hat = mean_in_order(runs.iter().map(|r| &r.snapshots[i].1), dim);
            let (d_err_hat, dir_err_hat) = problem.oracle.value_errors(&problem.features, &problem.chain, &hat);
            TracePoint {
                step,
                sq_err: problem.sq_dist(&bar),
                value_err: problem.value_error(&bar),
                d_err_hat,
                dir_err_hat,
                agents: cfg.record_agents.then(|| runs.iter().map(|r| r.snapshots[i].0.clone()).collect()),
                theta_bar: bar,
                theta_hat: hat,
            }
        })
        .collect();
    SwarmResult {
        theta_bar,
        theta_hat,
        theta_hat_tail,
        per_agent_final: runs.iter().map(|r| r.state.theta.clone()).collect(),
        per_agent_hat: runs.iter().map(|r| r.state.theta_hat.clone()).collect(),
        trace,
        theorem_applies: cfg.theorem_applies(problem),
    }
}

/// Every agent runs `T` local TD(0) steps without communicating; the
/// network averages are formed once at the end.
pub fn run_parallel_td0(problem: &Problem, cfg: &SwarmConfig) -> Result<SwarmResult> {
    cfg.validate(problem)?;
    let trace = cfg.trace_steps();
    #[cfg(feature = "parallel")]
    let runs: Vec<AgentRun> = {
        use rayon::prelude::*;
        (0..cfg.agents).into_par_iter().map(|v| run_agent(problem, cfg, v, &trace)).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<AgentRun> = (0..cfg.agents).map(|v| run_agent(problem, cfg, v, &trace)).collect::<Result<_>>()?;
    Ok(assemble(problem, cfg, runs, &trace))
}

/// Baseline: every step each agent takes a local TD(0) step and then the
/// network replaces `Theta` by `W Theta`. Running averages track the mixed
/// parameters.
pub fn run_consensus_every_step(problem: &Problem, cfg: &SwarmConfig, w: &WeightMatrix) -> Result<SwarmResult> {
    cfg.validate(problem)?;
    let n = cfg.agents;
    if w.n_nodes() != n {
        return Err(Error::DimensionMismatch(format!("weight matrix has {} nodes, swarm has {n} agents", w.n_nodes())));
    }
    let fm = &problem.features;
    let gamma = problem.gamma();
    let k = problem.dim();
    let trace = cfg.trace_steps();

    let mut rngs: Vec<Stream> = (0..n).map(|v| cfg.agent_stream(v)).collect();
    let mut states: Vec<LearnerState> = (0..n)
        .map(|v| cfg.init.theta0(v, k).map(LearnerState::new))
        .collect::<Result<_>>()?;
    let mut current: Vec<usize> = match cfg.sampling {
        Sampling::Iid => vec![0; n],
        Sampling::Markov => rngs.iter_mut().map(|r| problem.sampler.sample_state(r)).collect(),
    };
    let mut tail_sums = vec![DVector::zeros(k); n];
    let mut snapshots: Vec<Vec<(DVector<f64>, DVector<f64>)>> = vec![Vec::with_capacity(trace.len()); n];
    let mut next_trace = trace.iter().peekable();
    let mut buf = vec![0.0; n * k];
    let mut mixed = vec![0.0; n * k];

    for t in 0..cfg.horizon {
        if next_trace.peek() == Some(&&t) {
            for (snap, st) in snapshots.iter_mut().zip(&states) {
                snap.push((st.theta.clone(), st.theta_hat.clone()));
            }
            next_trace.next();
        }
        let alpha = cfg.schedule.alpha(t);
        for v in 0..n {
            let tuple = match cfg.sampling {
                Sampling::Iid => problem.sampler.sample_iid(&mut rngs[v]),
                Sampling::Markov => {
                    let tuple = problem.sampler.sample_markov_step(current[v], &mut rngs[v]);
                    current[v] = tuple.s_next;
                    tuple
                }
            };
            let theta = &mut buf[v * k..(v + 1) * k];
            theta.copy_from_slice(states[v].theta.as_slice());
            local_step(theta, fm, &tuple, alpha, gamma);
        }
        w.mix_into(&buf, &mut mixed, k);
        for (v, st) in states.iter_mut().enumerate() {
            st.theta.as_mut_slice().copy_from_slice(&mixed[v * k..(v + 1) * k]);
            st.advance_average();
            let norm = st.theta.norm();
            if !(norm <= cfg.divergence_guard) {
                return Err(Error::Divergence { agent: v, step: st.t, norm });
            }
            tail_sums[v] += &st.theta;
        }
    }
    if next_trace.peek().is_some() {
        for (snap, st) in snapshots.iter_mut().zip(&states) {
            snap.push((st.theta.clone(), st.theta_hat.clone()));
        }
    }
    let runs = states
        .into_iter()
        .zip(tail_sums)
        .zip(snapshots)
        .map(|((state, tail_sum), snapshots)| AgentRun { state, tail_sum, snapshots })
        .collect();
    Ok(assemble(problem, cfg, runs, &trace))
}

/// Monte Carlo estimate of `E[delta phi(s)]` at a fixed `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanUpdateEstimate {
    pub mean: DVector<f64>,
    /// Per-coordinate standard errors (infinite when `M = 1`).
    pub std_errors: DVector<f64>,
    pub samples: usize,
}

pub fn estimate_mean_update<R: Rng + ?Sized>(
    problem: &Problem,
    theta: &DVector<f64>,
    samples: usize,
    rng: &mut R,
) -> Result<MeanUpdateEstimate> {
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let k = problem.dim();
    if theta.len() != k {
        return Err(Error::DimensionMismatch(format!("theta has {} entries, features have {k}", theta.len())));
    }
    let fm = &problem.features;
    let mut acc = Welford::new(k);
    let mut dir = vec![0.0; k];
    for _ in 0..samples {
        let tuple = problem.sampler.sample_iid(rng);
        let delta = crate::td::td_error(fm, &tuple, theta.as_slice(), problem.gamma());
        for (d, p) in dir.iter_mut().zip(fm.row(tuple.s)) {
            *d = delta * p;
        }
        acc.push(&dir);
    }
    Ok(MeanUpdateEstimate {
        mean: DVector::from_column_slice(acc.mean()),
        std_errors: DVector::from_vec(acc.std_errors()),
        samples,
    })
}

/// Advance every agent by one i.i.d. TD(0) step from `thetas` with step
/// size `alpha` and return the new network average.
pub fn one_step_average<R: Rng + ?Sized>(
    problem: &Problem,
    thetas: &[DVector<f64>],
    alpha: f64,
    rng: &mut R,
) -> DVector<f64> {
    let k = problem.dim();
    let mut sum = DVector::zeros(k);
    let mut theta = vec![0.0; k];
    for th in thetas {
        theta.copy_from_slice(th.as_slice());
        let tuple = problem.sampler.sample_iid(rng);
        local_step(&mut theta, &problem.features, &tuple, alpha, problem.gamma());
        for (s, x) in sum.iter_mut().zip(&theta) {
            *s += x;
        }
    }
    sum / thetas.len() as f64
}
