//! Browser demo: three interactive computations exposed through wasm-bindgen.

use oneshot_td::bounds::{constant_step_rhs, decaying_step_rhs, BoundInputs};
use oneshot_td::consensus::{
    erdos_renyi_connected, max_deviation, node_mean, random_strongly_connected, PushSumState, WeightMatrix,
};
use oneshot_td::gridworld::Gridworld;
use oneshot_td::nalgebra::DMatrix;
use oneshot_td::rng;
use oneshot_td::swarm::{run_parallel_td0, SwarmConfig};
use oneshot_td::td::StepSchedule;
use oneshot_td::{Problem, Result};
use rand::Rng;
use wasm_bindgen::prelude::*;

/// An x axis with two y series.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    xs: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
}

#[wasm_bindgen]
impl Curves {
    #[wasm_bindgen(getter)]
    pub fn xs(&self) -> Vec<f64> {
        self.xs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn first(&self) -> Vec<f64> {
        self.first.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn second(&self) -> Vec<f64> {
        self.second.clone()
    }
}

/// TD error of `N` one-shot-averaged agents (first) and of a single agent
/// (second) on a square gridworld.
pub fn gridworld_curves(size: usize, agents: usize, horizon: usize, alpha: f64, seed: u64) -> Result<Curves> {
    let problem = Problem::gridworld(&Gridworld::new(size, size))?;
    let mut cfg = SwarmConfig::new(agents, horizon, StepSchedule::Constant { alpha }).with_seed(seed);
    cfg.trace_every = horizon.div_ceil(200).max(1);
    let many = run_parallel_td0(&problem, &cfg)?;
    let one = run_parallel_td0(&problem, &SwarmConfig { agents: 1, ..cfg })?;
    Ok(Curves {
        xs: many.trace.iter().map(|tp| tp.step as f64).collect(),
        first: many.trace.iter().map(|tp| tp.value_err).collect(),
        second: one.trace.iter().map(|tp| tp.value_err).collect(),
    })
}

/// Max distance to the mean per round: average consensus with Metropolis
/// weights on an Erdős–Rényi graph (first), push-sum on a random strongly
/// connected digraph with the same node count (second).
pub fn consensus_curves(nodes: usize, p: f64, rounds: usize, seed: u64) -> Result<Curves> {
    let mut r = rng::stream(seed);
    let g = erdos_renyi_connected(nodes, p, &mut r)?;
    let w = WeightMatrix::metropolis(&g)?;
    let dg = random_strongly_connected(nodes, p, &mut r)?;
    let values = DMatrix::from_fn(nodes, 1, |_, _| r.random_range(-1.0..1.0));
    let mean = node_mean(&values);
    let mut x = values.clone();
    let mut ps = PushSumState::new(&values);
    let mut first = vec![max_deviation(&x, &mean)];
    let mut second = vec![max_deviation(&ps.estimates(), &mean)];
    for _ in 0..rounds {
        x = w.mix(&x);
        ps.step(&dg);
        first.push(max_deviation(&x, &mean));
        second.push(max_deviation(&ps.estimates(), &mean));
    }
    Ok(Curves { xs: (0..=rounds).map(|i| i as f64).collect(), first, second })
}

/// Constant-step bound (first) and decaying-step bound at `t = T - 1`
/// (second) against the number of agents, for a random 10-state instance.
pub fn bound_curves(gamma: f64, alpha: f64, horizon: usize, max_agents: usize, seed: u64) -> Result<Curves> {
    let problem = Problem::random(10, 2, 4, gamma, seed)?;
    let r0 = problem.oracle.theta_star.norm_squared();
    let mut xs = Vec::new();
    let mut first = Vec::new();
    let mut second = Vec::new();
    for n in 1..=max_agents {
        let b = BoundInputs {
            gamma,
            omega: problem.oracle.omega,
            sigma_sq: problem.oracle.sigma_sq,
            r_hat_0: r0,
            init_mean_err: r0,
            agents: n,
            horizon,
            alpha: Some(alpha),
        };
        xs.push(n as f64);
        first.push(constant_step_rhs(&b)?);
        second.push(decaying_step_rhs(&b, horizon.saturating_sub(1)));
    }
    Ok(Curves { xs, first, second })
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = gridworldCurves)]
pub fn gridworld_curves_js(size: usize, agents: usize, horizon: usize, alpha: f64, seed: u32) -> std::result::Result<Curves, JsError> {
    js(gridworld_curves(size, agents, horizon, alpha, seed.into()))
}

#[wasm_bindgen(js_name = consensusCurves)]
pub fn consensus_curves_js(nodes: usize, p: f64, rounds: usize, seed: u32) -> std::result::Result<Curves, JsError> {
    js(consensus_curves(nodes, p, rounds, seed.into()))
}

#[wasm_bindgen(js_name = boundCurves)]
pub fn bound_curves_js(gamma: f64, alpha: f64, horizon: usize, max_agents: usize, seed: u32) -> std::result::Result<Curves, JsError> {
    js(bound_curves(gamma, alpha, horizon, max_agents, seed.into()))
}
