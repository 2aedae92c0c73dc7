use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::gridworld::Gridworld;
use crate::mdp::{induce_chain, InducedChain, Mdp, Policy, Sampler};
use crate::oracle::{build_oracle, TdOracle};
use crate::rng;

/// A validated policy-evaluation instance with every exact quantity
/// precomputed: the induced chain, the TD oracle, the true value function
/// and the sampling tables.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mdp: Mdp,
    pub policy: Policy,
    pub features: FeatureMap,
    pub chain: InducedChain,
    pub oracle: TdOracle,
    pub sampler: Sampler,
    /// Exact `V^mu`.
    pub value: DVector<f64>,
}

impl Problem {
    pub fn new(mdp: Mdp, policy: Policy, features: FeatureMap) -> Result<Self> {
        if features.n_states() != mdp.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "feature matrix has {} rows but the MDP has {} states",
                features.n_states(),
                mdp.n_states()
            )));
        }
        let chain = induce_chain(&mdp, &policy)?;
        let oracle = build_oracle(&mdp, &policy, &chain, &features)?;
        let sampler = Sampler::new(&mdp, &policy, &chain)?;
        let value = chain.value_function(mdp.gamma())?;
        Ok(Self { mdp, policy, features, chain, oracle, sampler, value })
    }

    /// Random MDP with `m` actions, uniform policy and `k` random features,
    /// all drawn from one seeded stream.
    pub fn random(n: usize, m: usize, k: usize, gamma: f64, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed);
        let mdp = Mdp::random(n, m, gamma, &mut r)?;
        let features = FeatureMap::random(n, k, &mut r)?;
        Self::new(mdp, Policy::uniform(n, m), features)
    }

    /// Gridworld under the uniform random policy with tabular features.
    pub fn gridworld(grid: &Gridworld) -> Result<Self> {
        let mdp = grid.mdp()?;
        let n = mdp.n_states();
        Self::new(mdp, grid.uniform_policy(), FeatureMap::tabular(n))
    }

    pub fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    /// `|theta - theta*|_2^2`.
    pub fn sq_dist(&self, theta: &DVector<f64>) -> f64 {
        (theta - &self.oracle.theta_star).norm_squared()
    }

    /// `(1 - gamma) |V_theta - V*|_D^2 + gamma |V_theta - V*|_Dir^2`.
    pub fn weighted_error(&self, theta: &DVector<f64>) -> f64 {
        self.oracle.weighted_error(&self.features, &self.chain, theta)
    }

    /// `|V_theta - V^mu|_D`, the distance to the true value function.
    pub fn value_error(&self, theta: &DVector<f64>) -> f64 {
        let diff = self.features.value_of(theta) - &self.value;
        self.chain.d_norm_sq(&diff).sqrt()
    }
}
