//! Right-hand sides of the finite-time error bounds for one-shot averaged
//! TD(0), the one-step recursion they are built from, and the product
//! estimate used for the decaying schedule.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::InducedChain;
use crate::oracle::TdOracle;
use crate::td::{decaying_constants, max_constant_alpha, min_inv_sqrt_horizon};

const COMPLIANCE_RTOL: f64 = 1e-12;

/// Every constant entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub gamma: f64,
    pub omega: f64,
    pub sigma_sq: f64,
    /// `max_v E|theta_v(0) - theta*|^2`.
    pub r_hat_0: f64,
    /// `E|theta_bar(0) - theta*|^2`.
    pub init_mean_err: f64,
    pub agents: usize,
    pub horizon: usize,
    /// Constant step size for part (a).
    pub alpha: Option<f64>,
}

impl BoundInputs {
    /// Decaying-schedule constants `(alpha, tau)`.
    pub fn decaying(&self) -> (f64, f64) {
        decaying_constants(self.gamma, self.omega)
    }

    /// `zeta_hat = max(2 alpha^2 sigma^2, tau R0)` with the decaying-schedule constants.
    pub fn zeta_hat(&self) -> f64 {
        let (alpha, tau) = self.decaying();
        (2.0 * alpha * alpha * self.sigma_sq).max(tau * self.r_hat_0)
    }
}

/// Constant step size `alpha <= (1-gamma)/8`:
/// `(1/T)(E0/(2 alpha) + 4 R0/(1-gamma)) + alpha sigma^2/N + 8 alpha^2 sigma^2/(1-gamma)`.
pub fn constant_step_rhs(b: &BoundInputs) -> Result<f64> {
    let alpha = b.alpha.ok_or_else(|| Error::InvalidParameter("part (a) needs a step size".into()))?;
    let max = max_constant_alpha(b.gamma);
    if !(alpha > 0.0) || alpha > max * (1.0 + COMPLIANCE_RTOL) {
        return Err(Error::NonCompliantAlpha { alpha, max });
    }
    let g = 1.0 - b.gamma;
    let t = b.horizon as f64;
    let n = b.agents as f64;
    Ok((b.init_mean_err / (2.0 * alpha) + 4.0 * b.r_hat_0 / g) / t
        + alpha * b.sigma_sq / n
        + 8.0 * alpha * alpha * b.sigma_sq / g)
}

/// Step size `1/sqrt(T)` with `T >= 64/(1-gamma)^2`:
/// `(E0 + 2 sigma^2/N)/(2 sqrt T) + (4 R0 + 8 sigma^2)/((1-gamma) T)`.
pub fn inv_sqrt_step_rhs(b: &BoundInputs) -> Result<f64> {
    let min = min_inv_sqrt_horizon(b.gamma);
    if (b.horizon as f64) < min * (1.0 - COMPLIANCE_RTOL) {
        return Err(Error::HorizonTooShort { horizon: b.horizon, min });
    }
    let g = 1.0 - b.gamma;
    let t = b.horizon as f64;
    let n = b.agents as f64;
    Ok((b.init_mean_err + 2.0 * b.sigma_sq / n) / (2.0 * t.sqrt()) + (4.0 * b.r_hat_0 + 8.0 * b.sigma_sq) / (g * t))
}

/// Decaying step size `alpha/(t+tau)`: bound on `E|theta_bar(t+1) - theta*|^2`,
/// `2 alpha^2 (sigma^2/N)/(t+tau) + 8 alpha^2 zeta/(t+tau)^2 + (tau-1)^4 E0/(t+tau)^4`.
pub fn decaying_step_rhs(b: &BoundInputs, t: usize) -> f64 {
    let (alpha, tau) = b.decaying();
    let s = t as f64 + tau;
    let a2 = alpha * alpha;
    2.0 * a2 * (b.sigma_sq / b.agents as f64) / s
        + 8.0 * a2 * b.zeta_hat() / (s * s)
        + (tau - 1.0).powi(4) * b.init_mean_err / s.powi(4)
}

/// One-step recursion for the network average:
/// `E_t + alpha^2 (2 sigma^2/N + (8/N) sum_v |V_v - V*|_D^2)
///  - 2 alpha ((1-gamma)|V_bar - V*|_D^2 + gamma |V_bar - V*|_Dir^2)`.
///
/// `current_mean_err` and `per_agent_dnorm_errs` are the (expected) values
/// of `|theta_bar(t) - theta*|^2` and `|V_{theta_v(t)} - V*|_D^2`; the last
/// term is evaluated exactly at `mean_theta`.
pub fn one_step_rhs(
    oracle: &TdOracle,
    current_mean_err: f64,
    per_agent_dnorm_errs: &[f64],
    alpha_t: f64,
    mean_theta: &DVector<f64>,
    fm: &FeatureMap,
    chain: &InducedChain,
) -> f64 {
    let n = per_agent_dnorm_errs.len() as f64;
    let gamma = oracle.gamma;
    let (d, dir) = oracle.value_errors(fm, chain, mean_theta);
    let variance = 2.0 * oracle.sigma_sq / n + 8.0 / n * per_agent_dnorm_errs.iter().sum::<f64>();
    current_mean_err + alpha_t * alpha_t * variance - 2.0 * alpha_t * ((1.0 - gamma) * d + gamma * dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProductCheck {
    /// The strict inequality held for every `t <= t_max`.
    pub holds: bool,
    /// Largest `LHS / RHS` over the range.
    pub max_ratio: f64,
    /// Whether the ratio never increased with `t`.
    pub ratio_non_increasing: bool,
}

/// Check `prod_{i=0}^{t} (1 - 4/(t+tau-i)) < ((tau-1)/(t+tau))^4` for all
/// `t <= t_max`.
///
/// The product over `i` runs over denominators `tau, ..., t + tau`, so it is
/// accumulated incrementally in `t`.
pub fn product_estimate_check(tau: f64, t_max: usize) -> Result<ProductCheck> {
    if !(tau > 5.0) {
        return Err(Error::InvalidParameter(format!("product estimate needs tau > 5, got {tau}")));
    }
    let mut lhs = 1.0;
    let mut holds = true;
    let mut max_ratio: f64 = 0.0;
    let mut prev_ratio = f64::INFINITY;
    let mut ratio_non_increasing = true;
    for t in 0..=t_max {
        let s = t as f64 + tau;
        lhs *= 1.0 - 4.0 / s;
        let rhs = ((tau - 1.0) / s).powi(4);
        let ratio = lhs / rhs;
        holds &= lhs < rhs;
        max_ratio = max_ratio.max(ratio);
        ratio_non_increasing &= ratio <= prev_ratio * (1.0 + 1e-12);
        prev_ratio = ratio;
    }
    Ok(ProductCheck { holds, max_ratio, ratio_non_increasing })
}
