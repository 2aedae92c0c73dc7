//! Finite MDPs, policies, the chain a policy induces, and tuple sampling.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for row sums of stochastic matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Tolerance for the stationary fixed point `pi^T P = pi^T`, per entry.
pub const FIXED_POINT_TOL: f64 = 1e-10;
/// Largest state count solved with a dense direct solve.
pub const DIRECT_SOLVE_MAX_STATES: usize = 2000;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 1_000_000;

/// Tabular discounted MDP with deterministic rewards `r(s, a, s')`.
///
/// Transition probabilities and rewards are stored densely, indexed by
/// `(s * m + a) * n + s'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mdp {
    n: usize,
    m: usize,
    gamma: f64,
    p: Vec<f64>,
    r: Vec<f64>,
}

impl Mdp {
    pub fn new(n: usize, m: usize, p: Vec<f64>, r: Vec<f64>, gamma: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter(format!(
                "MDP needs at least one state and one action (n={n}, m={m})"
            )));
        }
        let len = n * m * n;
        if p.len() != len || r.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "expected {len} transition/reward entries, got {}/{}",
                p.len(),
                r.len()
            )));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in (0,1), got {gamma}")));
        }
        if let Some(&bad) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidParameter(format!("negative or non-finite probability {bad}")));
        }
        if let Some(&bad) = r.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite reward {bad}")));
        }
        for s in 0..n {
            for a in 0..m {
                let start = (s * m + a) * n;
                let sum: f64 = p[start..start + n].iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::NotStochastic { row: format!("P(.|s={s},a={a})"), sum });
                }
            }
        }
        Ok(Self { n, m, gamma, p, r })
    }

    /// Build an MDP from closures giving `P(s'|s,a)` and `r(s,a,s')`.
    pub fn from_fn(
        n: usize,
        m: usize,
        gamma: f64,
        mut prob: impl FnMut(usize, usize, usize) -> f64,
        mut reward: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut p = Vec::with_capacity(n * m * n);
        let mut r = Vec::with_capacity(n * m * n);
        for s in 0..n {
            for a in 0..m {
                for s2 in 0..n {
                    p.push(prob(s, a, s2));
                    r.push(reward(s, a, s2));
                }
            }
        }
        Self::new(n, m, p, r, gamma)
    }

    /// Random MDP with dense transition rows and rewards uniform in `[-1, 1]`.
    ///
    /// Every transition has positive probability, so any policy induces an
    /// irreducible aperiodic chain.
    pub fn random<R: Rng + ?Sized>(n: usize, m: usize, gamma: f64, rng: &mut R) -> Result<Self> {
        let mut p = Vec::with_capacity(n * m * n);
        let mut r = Vec::with_capacity(n * m * n);
        for _ in 0..n * m {
            let row: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
            let sum: f64 = row.iter().sum();
            let mut acc = 0.0;
            for (i, x) in row.iter().enumerate() {
                let q = if i + 1 == n { 1.0 - acc } else { x / sum };
                acc += q;
                p.push(q);
            }
            r.extend((0..n).map(|_| rng.random_range(-1.0..=1.0)));
        }
        Self::new(n, m, p, r, gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn n_actions(&self) -> usize {
        self.m
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    fn idx(&self, s: usize, a: usize, s2: usize) -> usize {
        (s * self.m + a) * self.n + s2
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.p[self.idx(s, a, s2)]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.r[self.idx(s, a, s2)]
    }

    /// Same dynamics with a different discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.n, self.m, self.p.clone(), self.r.clone(), gamma)
    }
}

/// Stationary randomized policy `mu(a|s)`, stored row-major `n x m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n: usize,
    m: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n: usize, m: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n * m {
            return Err(Error::DimensionMismatch(format!(
                "policy expects {} entries, got {}",
                n * m,
                probs.len()
            )));
        }
        if let Some(&bad) = probs.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidParameter(format!("negative or non-finite action probability {bad}")));
        }
        for s in 0..n {
            let sum: f64 = probs[s * m..(s + 1) * m].iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic { row: format!("mu(.|s={s})"), sum });
            }
        }
        Ok(Self { n, m, probs })
    }

    pub fn uniform(n: usize, m: usize) -> Self {
        Self { n, m, probs: vec![1.0 / m as f64; n * m] }
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(m: usize, actions: &[usize]) -> Result<Self> {
        let n = actions.len();
        let mut probs = vec![0.0; n * m];
        for (s, &a) in actions.iter().enumerate() {
            if a >= m {
                return Err(Error::InvalidParameter(format!("action {a} out of range for state {s}")));
            }
            probs[s * m + a] = 1.0;
        }
        Ok(Self { n, m, probs })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn n_actions(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.m + a]
    }
}

/// Markov chain induced by running a fixed policy on an MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedChain {
    pub p_mu: DMatrix<f64>,
    pub r_mu: DVector<f64>,
    pub pi: DVector<f64>,
}

/// Compute `P^mu`, `R^mu` and the stationary distribution, rejecting chains
/// that are reducible or periodic.
pub fn induce_chain(mdp: &Mdp, policy: &Policy) -> Result<InducedChain> {
    if mdp.n != policy.n || mdp.m != policy.m {
        return Err(Error::DimensionMismatch(format!(
            "MDP is {}x{} (states x actions), policy is {}x{}",
            mdp.n, mdp.m, policy.n, policy.m
        )));
    }
    let n = mdp.n;
    let mut p_mu = DMatrix::zeros(n, n);
    let mut r_mu = DVector::zeros(n);
    for s in 0..n {
        for a in 0..mdp.m {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for s2 in 0..n {
                let q = w * mdp.prob(s, a, s2);
                p_mu[(s, s2)] += q;
                r_mu[s] += q * mdp.reward(s, a, s2);
            }
        }
    }
    InducedChain::from_parts(p_mu, r_mu)
}

impl InducedChain {
    /// Validate a transition matrix and reward vector and compute `pi`.
    pub fn from_parts(p_mu: DMatrix<f64>, r_mu: DVector<f64>) -> Result<Self> {
        let n = p_mu.nrows();
        if n == 0 || p_mu.ncols() != n || r_mu.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "transition matrix {}x{} with reward vector of length {}",
                p_mu.nrows(),
                p_mu.ncols(),
                r_mu.len()
            )));
        }
        for (s, row) in p_mu.row_iter().enumerate() {
            let sum = row.sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL || row.iter().any(|x| *x < 0.0) {
                return Err(Error::NotStochastic { row: format!("P^mu(s={s},.)"), sum });
            }
        }
        check_ergodic(&p_mu)?;
        let pi = stationary_distribution(&p_mu)?;
        Ok(Self { p_mu, r_mu, pi })
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    /// The diagonal matrix `D = diag(pi)`.
    pub fn d_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.pi)
    }

    /// Exact value function `(I - gamma P^mu)^{-1} R^mu`.
    pub fn value_function(&self, gamma: f64) -> Result<DVector<f64>> {
        exact_value_function(self, gamma)
    }

    /// `sum_s pi_s V(s)^2`.
    pub fn d_norm_sq(&self, v: &DVector<f64>) -> f64 {
        debug_assert_eq!(v.len(), self.pi.len());
        self.pi.iter().zip(v.iter()).map(|(p, x)| p * x * x).sum()
    }

    /// `1/2 sum_{s,s'} pi_s P^mu(s,s') (V(s') - V(s))^2`.
    pub fn dirichlet_seminorm_sq(&self, v: &DVector<f64>) -> f64 {
        debug_assert_eq!(v.len(), self.pi.len());
        let n = self.pi.len();
        let mut acc = 0.0;
        for s in 0..n {
            let mut row = 0.0;
            for s2 in 0..n {
                let d = v[s2] - v[s];
                row += self.p_mu[(s, s2)] * d * d;
            }
            acc += self.pi[s] * row;
        }
        0.5 * acc
    }

    /// `max_s |(pi^T P)_s - pi_s|`.
    pub fn fixed_point_residual(&self) -> f64 {
        let lhs = self.p_mu.tr_mul(&self.pi);
        (lhs - &self.pi).amax()
    }
}

pub fn exact_value_function(chain: &InducedChain, gamma: f64) -> Result<DVector<f64>> {
    let n = chain.n_states();
    let system = DMatrix::<f64>::identity(n, n) - &chain.p_mu * gamma;
    let v = system
        .clone()
        .lu()
        .solve(&chain.r_mu)
        .ok_or_else(|| Error::SingularSystem("I - gamma P^mu".into()))?;
    let residual = (&system * &v - &chain.r_mu).amax();
    let scale = chain.r_mu.amax().max(1.0);
    if !(residual <= 1e-10 * scale) {
        return Err(Error::SingularSystem(format!("value-function residual {residual:e}")));
    }
    Ok(v)
}

/// Verify irreducibility (single strongly connected class) and aperiodicity
/// on the support graph of `p`.
pub fn check_ergodic(p: &DMatrix<f64>) -> Result<()> {
    let n = p.nrows();
    let forward: Vec<Vec<usize>> =
        (0..n).map(|s| (0..n).filter(|&t| p[(s, t)] > 0.0).collect()).collect();
    let mut backward = vec![Vec::new(); n];
    for (s, outs) in forward.iter().enumerate() {
        for &t in outs {
            backward[t].push(s);
        }
    }
    let levels = bfs_levels(&forward);
    if let Some(s) = levels.iter().position(Option::is_none) {
        return Err(Error::NotIrreducible { state: s });
    }
    if let Some(s) = bfs_levels(&backward).iter().position(Option::is_none) {
        return Err(Error::NotIrreducible { state: s });
    }
    // Period = gcd over edges (u -> v) of level(u) + 1 - level(v).
    let mut period = 0usize;
    for (u, outs) in forward.iter().enumerate() {
        let lu = levels[u].unwrap();
        for &v in outs {
            let lv = levels[v].unwrap();
            let diff = (lu + 1).abs_diff(lv);
            period = gcd(period, diff);
        }
    }
    if period > 1 {
        return Err(Error::NotAperiodic { period });
    }
    Ok(())
}

fn bfs_levels(adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut levels = vec![None; adj.len()];
    let mut queue = VecDeque::new();
    levels[0] = Some(0);
    queue.push_back(0);
    while let Some(u) = queue.pop_front() {
        let next = levels[u].unwrap() + 1;
        for &v in &adj[u] {
            if levels[v].is_none() {
                levels[v] = Some(next);
                queue.push_back(v);
            }
        }
    }
    levels
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Stationary distribution of an irreducible aperiodic chain.
///
/// Small chains replace one balance equation of `(P^T - I) pi = 0` by the
/// normalization `sum pi = 1` and solve directly; large chains fall back to
/// power iteration.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    let mut pi = if n <= DIRECT_SOLVE_MAX_STATES {
        stationary_direct(p)?
    } else {
        stationary_power(p, POWER_TOL, POWER_MAX_ITERS)?
    };
    // Round-off can leave entries of order 1e-17 with the wrong sign.
    for x in pi.iter_mut() {
        if *x < 0.0 && *x > -1e-14 {
            *x = 0.0;
        }
    }
    let total = pi.sum();
    pi /= total;
    if let Some(s) = pi.iter().position(|x| *x <= 0.0) {
        return Err(Error::NotIrreducible { state: s });
    }
    let residual = (p.tr_mul(&pi) - &pi).amax();
    if residual > FIXED_POINT_TOL {
        return Err(Error::SingularSystem(format!("stationary residual {residual:e}")));
    }
    Ok(pi)
}

pub fn stationary_direct(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    let mut system = p.transpose() - DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        system[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("stationary balance equations".into()))
}

pub fn stationary_power(p: &DMatrix<f64>, tol: f64, max_iters: usize) -> Result<DVector<f64>> {
    let n = p.nrows();
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..max_iters {
        let next = p.tr_mul(&pi);
        let delta = (&next - &pi).amax();
        pi = next;
        if delta <= tol {
            return Ok(pi);
        }
    }
    Err(Error::SingularSystem(format!("power iteration did not converge in {max_iters} iterations")))
}

/// One observed transition `(s, a, s', r(s, a, s'))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleTuple {
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub reward: f64,
}

/// Cumulative tables for drawing states, actions and successors.
#[derive(Debug, Clone)]
pub struct Sampler {
    pi_cdf: Vec<f64>,
    action_cdf: Vec<Vec<(usize, f64)>>,
    next_cdf: Vec<Vec<(usize, f64, f64)>>,
    m: usize,
}

fn draw<T: Copy>(table: &[(usize, T)], u: f64, cum: impl Fn(&T) -> f64) -> usize {
    let i = table.partition_point(|(_, c)| cum(c) <= u);
    table[i.min(table.len() - 1)].0
}

impl Sampler {
    pub fn new(mdp: &Mdp, policy: &Policy, chain: &InducedChain) -> Result<Self> {
        if mdp.n != policy.n || mdp.m != policy.m || chain.n_states() != mdp.n {
            return Err(Error::DimensionMismatch("sampler inputs disagree on state/action counts".into()));
        }
        let mut acc = 0.0;
        let pi_cdf = chain
            .pi
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let action_cdf = (0..mdp.n)
            .map(|s| {
                let mut acc = 0.0;
                (0..mdp.m)
                    .filter(|&a| policy.prob(s, a) > 0.0)
                    .map(|a| {
                        acc += policy.prob(s, a);
                        (a, acc)
                    })
                    .collect()
            })
            .collect();
        let next_cdf = (0..mdp.n * mdp.m)
            .map(|sa| {
                let (s, a) = (sa / mdp.m, sa % mdp.m);
                let mut acc = 0.0;
                (0..mdp.n)
                    .filter(|&s2| mdp.prob(s, a, s2) > 0.0)
                    .map(|s2| {
                        acc += mdp.prob(s, a, s2);
                        (s2, acc, mdp.reward(s, a, s2))
                    })
                    .collect()
            })
            .collect();
        Ok(Self { pi_cdf, action_cdf, next_cdf, m: mdp.m })
    }

    /// Draw `s ~ pi`.
    #[inline]
    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let i = self.pi_cdf.partition_point(|c| *c <= u);
        i.min(self.pi_cdf.len() - 1)
    }

    /// Draw `a ~ mu(.|s)`, `s' ~ P(.|s,a)` from a given state.
    #[inline]
    pub fn sample_markov_step<R: Rng + ?Sized>(&self, current: usize, rng: &mut R) -> SampleTuple {
        let a = draw(&self.action_cdf[current], rng.random(), |c| *c);
        let row = &self.next_cdf[current * self.m + a];
        let u: f64 = rng.random();
        let i = row.partition_point(|(_, c, _)| *c <= u).min(row.len() - 1);
        let (s_next, _, reward) = row[i];
        SampleTuple { s: current, a, s_next, reward }
    }

    /// Draw an i.i.d. tuple with `s ~ pi`.
    #[inline]
    pub fn sample_iid<R: Rng + ?Sized>(&self, rng: &mut R) -> SampleTuple {
        let s = self.sample_state(rng);
        self.sample_markov_step(s, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn chain_from(rows: &[&[f64]], r: &[f64]) -> Result<InducedChain> {
        let n = rows.len();
        let p = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        InducedChain::from_parts(p, DVector::from_column_slice(r))
    }

    fn symmetric2() -> InducedChain {
        chain_from(&[&[0.9, 0.1], &[0.1, 0.9]], &[1.0, 0.0]).unwrap()
    }

    #[test]
    fn symmetric_two_state_is_uniform() {
        let c = symmetric2();
        assert_relative_eq!(c.pi[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(c.pi[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn deterministic_cycle_is_periodic() {
        let err = chain_from(&[&[0.0, 1.0], &[1.0, 0.0]], &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NotAperiodic { period: 2 }));
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let err = chain_from(&[&[1.0, 0.0], &[0.5, 0.5]], &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NotIrreducible { .. }));
    }

    #[test]
    fn three_state_chain_is_uniform() {
        let c = chain_from(&[&[0.5, 0.5, 0.0], &[0.0, 0.5, 0.5], &[0.5, 0.0, 0.5]], &[0.0; 3]).unwrap();
        for s in 0..3 {
            assert_relative_eq!(c.pi[s], 1.0 / 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn power_iteration_agrees_with_direct_solve() {
        let p = DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.3, 0.1, 0.1, 0.8, 0.6, 0.3, 0.1]);
        let direct = stationary_direct(&p).unwrap();
        let power = stationary_power(&p, 1e-14, 100_000).unwrap();
        assert!((direct - power).amax() < 1e-12);
    }

    #[test]
    fn value_function_examples() {
        let zero = chain_from(&[&[0.9, 0.1], &[0.1, 0.9]], &[0.0, 0.0]).unwrap();
        assert_eq!(zero.value_function(0.9).unwrap().amax(), 0.0);

        let single = chain_from(&[&[1.0]], &[1.0]).unwrap();
        assert_relative_eq!(single.value_function(0.5).unwrap()[0], 2.0, epsilon = 1e-14);

        // 2x2 oracle by Cramer's rule.
        let g = 0.9;
        let (a, b, c, d) = (1.0 - g * 0.9, -g * 0.1, -g * 0.1, 1.0 - g * 0.9);
        let det = a * d - b * c;
        let expect = [d * 1.0 / det, -c * 1.0 / det];
        let v = symmetric2().value_function(g).unwrap();
        assert_relative_eq!(v[0], expect[0], max_relative = 1e-12);
        assert_relative_eq!(v[1], expect[1], max_relative = 1e-12);
    }

    #[test]
    fn norm_examples() {
        let c = symmetric2();
        assert_eq!(c.d_norm_sq(&DVector::zeros(2)), 0.0);
        assert_relative_eq!(c.d_norm_sq(&DVector::from_vec(vec![0.0, 1.0])), c.pi[1]);
        assert_relative_eq!(c.d_norm_sq(&DVector::from_element(2, 1.0)), 1.0, epsilon = 1e-14);
        assert_eq!(c.dirichlet_seminorm_sq(&DVector::from_element(2, 3.0)), 0.0);
        assert_eq!(c.dirichlet_seminorm_sq(&DVector::zeros(2)), 0.0);
        assert_relative_eq!(
            c.dirichlet_seminorm_sq(&DVector::from_vec(vec![0.0, 1.0])),
            0.05,
            epsilon = 1e-14
        );
    }

    #[test]
    fn mdp_rejects_non_stochastic_rows() {
        let err = Mdp::new(1, 1, vec![0.9], vec![0.0], 0.5).unwrap_err();
        assert!(matches!(err, Error::NotStochastic { .. }));
        assert!(Mdp::new(1, 1, vec![1.0], vec![0.0], 1.0).is_err());
        assert!(Policy::new(1, 2, vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn degenerate_sampler_always_returns_the_same_tuple() {
        let mdp = Mdp::new(1, 1, vec![1.0], vec![3.5], 0.5).unwrap();
        let pol = Policy::uniform(1, 1);
        let chain = induce_chain(&mdp, &pol).unwrap();
        let sampler = Sampler::new(&mdp, &pol, &chain).unwrap();
        let mut rng = rng::stream(1);
        for _ in 0..100 {
            assert_eq!(sampler.sample_iid(&mut rng), SampleTuple { s: 0, a: 0, s_next: 0, reward: 3.5 });
        }
    }

    #[test]
    fn markov_step_follows_deterministic_successor() {
        // 3-cycle with a self loop at state 0 so the chain is aperiodic.
        let mdp = Mdp::from_fn(
            3,
            2,
            0.9,
            |s, a, s2| match (s, a) {
                (0, 0) => f64::from(u8::from(s2 == 0)),
                _ => f64::from(u8::from(s2 == (s + 1) % 3)),
            },
            |_, _, _| 0.0,
        )
        .unwrap();
        let pol = Policy::deterministic(2, &[1, 1, 1]).unwrap();
        let chain = induce_chain(&mdp, &Policy::uniform(3, 2)).unwrap();
        let sampler = Sampler::new(&mdp, &pol, &chain).unwrap();
        let mut rng = rng::stream(3);
        for s in 0..3 {
            let t = sampler.sample_markov_step(s, &mut rng);
            assert_eq!((t.s, t.a, t.s_next), (s, 1, (s + 1) % 3));
        }
    }

    #[test]
    fn seeded_streams_reproduce_tuples() {
        let mut rng = rng::stream(11);
        let mdp = Mdp::random(4, 3, 0.9, &mut rng).unwrap();
        let pol = Policy::uniform(4, 3);
        let chain = induce_chain(&mdp, &pol).unwrap();
        let sampler = Sampler::new(&mdp, &pol, &chain).unwrap();
        let mut a = rng::stream(5);
        let mut b = rng::stream(5);
        for _ in 0..1000 {
            assert_eq!(sampler.sample_iid(&mut a), sampler.sample_iid(&mut b));
        }
    }

    fn random_chain(seed: u64, n: usize) -> (Mdp, Policy, InducedChain) {
        let mut rng = rng::stream(seed);
        let mdp = Mdp::random(n, 2, 0.9, &mut rng).unwrap();
        let pol = Policy::uniform(n, 2);
        let chain = induce_chain(&mdp, &pol).unwrap();
        (mdp, pol, chain)
    }

    #[test]
    fn iid_state_frequencies_match_pi() {
        let (mdp, pol, chain) = random_chain(21, 5);
        let sampler = Sampler::new(&mdp, &pol, &chain).unwrap();
        let mut rng = rng::stream(8);
        let draws = 1_000_000;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            counts[sampler.sample_iid(&mut rng).s] += 1;
        }
        // Pearson chi-square with 4 degrees of freedom; 18.467 is the 0.999 quantile.
        let chi2: f64 = (0..5)
            .map(|s| {
                let e = chain.pi[s] * draws as f64;
                (counts[s] as f64 - e).powi(2) / e
            })
            .sum();
        assert!(chi2 < 18.467, "chi2 = {chi2}");
    }

    #[test]
    fn markov_occupancy_converges_to_pi() {
        let (mdp, pol, chain) = random_chain(22, 5);
        let sampler = Sampler::new(&mdp, &pol, &chain).unwrap();
        let mut rng = rng::stream(9);
        let steps = 1_000_000;
        let mut counts = [0usize; 5];
        let mut s = 0;
        for _ in 0..steps {
            let t = sampler.sample_markov_step(s, &mut rng);
            counts[t.s] += 1;
            s = t.s_next;
        }
        let tv: f64 = 0.5 * (0..5).map(|i| (counts[i] as f64 / steps as f64 - chain.pi[i]).abs()).sum::<f64>();
        assert!(tv < 1e-2, "total variation {tv}");
    }

    #[test]
    fn iid_reward_mean_matches_pi_dot_r() {
        let (mdp, pol, chain) = random_chain(23, 6);
        let sampler = Sampler::new(&mdp, &pol, &chain).unwrap();
        let mut rng = rng::stream(10);
        let draws = 400_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..draws {
            let t = sampler.sample_iid(&mut rng);
            assert_eq!(t.reward, mdp.reward(t.s, t.a, t.s_next));
            sum += t.reward;
            sum_sq += t.reward * t.reward;
        }
        let mean = sum / draws as f64;
        let var = sum_sq / draws as f64 - mean * mean;
        let se = (var / draws as f64).sqrt();
        let exact = chain.pi.dot(&chain.r_mu);
        assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} (se {se})");
    }

    proptest! {
        #[test]
        fn stationary_fixed_point_holds(seed in any::<u64>(), n in 1usize..12) {
            let (_, _, chain) = random_chain(seed, n);
            prop_assert!(chain.fixed_point_residual() <= FIXED_POINT_TOL);
            prop_assert!(chain.pi.iter().all(|p| *p > 0.0));
        }

        #[test]
        fn dirichlet_is_nonnegative_and_vanishes_on_constants(
            seed in any::<u64>(),
            v in proptest::collection::vec(-10.0f64..10.0, 6),
            c in -5.0f64..5.0,
        ) {
            let (_, _, chain) = random_chain(seed, 6);
            let v = DVector::from_vec(v);
            prop_assert!(chain.dirichlet_seminorm_sq(&v) >= 0.0);
            prop_assert_eq!(chain.dirichlet_seminorm_sq(&DVector::from_element(6, c)), 0.0);
        }

        #[test]
        fn uniform_pi_gives_scaled_euclidean_norm(v in proptest::collection::vec(-10.0f64..10.0, 3)) {
            let chain = chain_from(&[&[0.5, 0.5, 0.0], &[0.0, 0.5, 0.5], &[0.5, 0.0, 0.5]], &[0.0; 3]).unwrap();
            let v = DVector::from_vec(v);
            let expect = v.norm_squared() / 3.0;
            prop_assert!((chain.d_norm_sq(&v) - expect).abs() <= 1e-12 * (1.0 + expect));
        }
    }
}
