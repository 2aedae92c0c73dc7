//! Exact constants of linear TD(0): `A`, `b`, `theta*`, `sigma^2`, `omega`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::{InducedChain, Mdp, Policy};

#[derive(Debug, Clone, PartialEq)]
pub struct TdOracle {
    /// `Phi^T D (I - gamma P^mu) Phi`.
    pub a: DMatrix<f64>,
    /// `Phi^T D R^mu`.
    pub b: DVector<f64>,
    /// Solution of `A theta = b`.
    pub theta_star: DVector<f64>,
    /// Second moment of the TD error at `theta*` under stationary sampling.
    pub sigma_sq: f64,
    /// Smallest eigenvalue of `Phi^T D Phi`.
    pub omega: f64,
    pub gamma: f64,
}

pub fn build_oracle(mdp: &Mdp, policy: &Policy, chain: &InducedChain, fm: &FeatureMap) -> Result<TdOracle> {
    let n = mdp.n_states();
    if fm.n_states() != n || chain.n_states() != n || policy.n_states() != n {
        return Err(Error::DimensionMismatch("oracle inputs disagree on the state count".into()));
    }
    let gamma = mdp.gamma();
    let phi = fm.matrix();
    let d = chain.d_matrix();
    let phi_t_d = phi.transpose() * &d;
    let a = &phi_t_d * (DMatrix::<f64>::identity(n, n) - &chain.p_mu * gamma) * phi;
    let b = &phi_t_d * &chain.r_mu;
    let theta_star = a.clone().lu().solve(&b).ok_or(Error::SingularA)?;
    let residual = (&a * &theta_star - &b).norm();
    if !(residual <= 1e-9 * b.norm().max(1e-300) || residual <= 1e-12) {
        return Err(Error::SingularA);
    }

    let v_star = phi * &theta_star;
    let mut sigma_sq = 0.0;
    for s in 0..n {
        for act in 0..mdp.n_actions() {
            let w = chain.pi[s] * policy.prob(s, act);
            if w == 0.0 {
                continue;
            }
            for s2 in 0..n {
                let p = mdp.prob(s, act, s2);
                if p == 0.0 {
                    continue;
                }
                let delta = mdp.reward(s, act, s2) + gamma * v_star[s2] - v_star[s];
                sigma_sq += w * p * delta * delta;
            }
        }
    }

    let cov = &phi_t_d * phi;
    let omega = cov.symmetric_eigenvalues().min();
    if !(omega > 0.0) {
        return Err(Error::RankDeficient(format!("Phi^T D Phi has smallest eigenvalue {omega:e}")));
    }

    Ok(TdOracle { a, b, theta_star, sigma_sq, omega, gamma })
}

impl TdOracle {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Mean TD update direction `b - A theta`.
    pub fn expected_update_direction(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * theta
    }

    /// `(1 - gamma) |V_theta - V*|_D^2 + gamma |V_theta - V*|_Dir^2`.
    pub fn weighted_error(&self, fm: &FeatureMap, chain: &InducedChain, theta: &DVector<f64>) -> f64 {
        let (d, dir) = self.value_errors(fm, chain, theta);
        (1.0 - self.gamma) * d + self.gamma * dir
    }

    /// D-norm and Dirichlet seminorm (both squared) of `V_theta - V_{theta*}`.
    pub fn value_errors(&self, fm: &FeatureMap, chain: &InducedChain, theta: &DVector<f64>) -> (f64, f64) {
        let diff = fm.value_of(&(theta - &self.theta_star));
        (chain.d_norm_sq(&diff), chain.dirichlet_seminorm_sq(&diff))
    }
}

/// `max_v |theta_v(0) - theta*|^2` for deterministic initial parameters.
pub fn r_hat_0(initial_thetas: &[DVector<f64>], theta_star: &DVector<f64>) -> f64 {
    initial_thetas
        .iter()
        .map(|t| (t - theta_star).norm_squared())
        .fold(0.0, f64::max)
}
