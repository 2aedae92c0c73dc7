//! Single-agent TD(0) with a running-average iterate, and step-size schedules.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::{SampleTuple, Sampler};

/// Default bound on `|theta|_2` before a run is declared divergent.
pub const DEFAULT_DIVERGENCE_GUARD: f64 = 1e12;

/// Relative slack used when comparing step sizes against theorem thresholds.
const COMPLIANCE_RTOL: f64 = 1e-12;

/// Temporal difference `r - (phi(s) - gamma phi(s'))^T theta`.
#[inline]
pub fn td_error(fm: &FeatureMap, tuple: &SampleTuple, theta: &[f64], gamma: f64) -> f64 {
    let (phi, phi_next) = (fm.row(tuple.s), fm.row(tuple.s_next));
    let mut pred = 0.0;
    for ((p, q), t) in phi.iter().zip(phi_next).zip(theta) {
        pred += (p - gamma * q) * t;
    }
    tuple.reward - pred
}

/// In-place `theta += alpha * delta * phi(s)`; returns `delta`.
#[inline]
pub fn local_step(theta: &mut [f64], fm: &FeatureMap, tuple: &SampleTuple, alpha: f64, gamma: f64) -> f64 {
    let delta = td_error(fm, tuple, theta, gamma);
    let scale = alpha * delta;
    if scale != 0.0 {
        for (t, p) in theta.iter_mut().zip(fm.row(tuple.s)) {
            *t += scale * p;
        }
    }
    delta
}

/// Parameter `theta(t)`, its running average `theta_hat(t)` and the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub theta: DVector<f64>,
    pub theta_hat: DVector<f64>,
    pub t: usize,
}

impl LearnerState {
    /// Start at `theta(0)` with `theta_hat(0) = theta(0)`.
    pub fn new(theta0: DVector<f64>) -> Self {
        Self { theta_hat: theta0.clone(), theta: theta0, t: 0 }
    }

    /// One TD(0) step followed by the running-average update
    /// `theta_hat(t+1) = (1 - 1/(t+2)) theta_hat(t) + theta(t+1)/(t+2)`.
    ///
    /// Returns the TD error used. Fails with [`Error::Divergence`] (agent 0)
    /// when `|theta|_2` exceeds `guard`.
    #[inline]
    pub fn td0_update(
        &mut self,
        fm: &FeatureMap,
        tuple: &SampleTuple,
        alpha: f64,
        gamma: f64,
        guard: f64,
    ) -> Result<f64> {
        let delta = local_step(self.theta.as_mut_slice(), fm, tuple, alpha, gamma);
        self.advance_average();
        let norm_sq = self.theta.norm_squared();
        if !(norm_sq <= guard * guard) {
            return Err(Error::Divergence { agent: 0, step: self.t, norm: norm_sq.sqrt() });
        }
        Ok(delta)
    }

    /// Fold the current `theta` into the running average and bump `t`.
    #[inline]
    pub fn advance_average(&mut self) {
        let w = 1.0 / (self.t as f64 + 2.0);
        for (h, t) in self.theta_hat.iter_mut().zip(self.theta.iter()) {
            *h = (1.0 - w) * *h + w * t;
        }
        self.t += 1;
    }
}

/// Step-size sequence `alpha_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant { alpha: f64 },
    /// `alpha_t = 1/sqrt(T)` for a fixed horizon `T`.
    InvSqrtT { horizon: usize },
    /// `alpha_t = alpha / (t + tau)`.
    Decaying { alpha: f64, tau: f64 },
}

impl StepSchedule {
    #[inline]
    pub fn alpha(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant { alpha } => alpha,
            StepSchedule::InvSqrtT { horizon } => 1.0 / (horizon as f64).sqrt(),
            StepSchedule::Decaying { alpha, tau } => alpha / (t as f64 + tau),
        }
    }

    /// Check the schedule against the theorem's requirements for the given
    /// discount and covariance eigenvalue bound.
    pub fn check_compliance(&self, gamma: f64, omega: f64) -> Result<()> {
        match *self {
            StepSchedule::Constant { alpha } => {
                let max = max_constant_alpha(gamma);
                if !(alpha > 0.0) || alpha > max * (1.0 + COMPLIANCE_RTOL) {
                    return Err(Error::NonCompliantAlpha { alpha, max });
                }
            }
            StepSchedule::InvSqrtT { horizon } => {
                let min = min_inv_sqrt_horizon(gamma);
                if (horizon as f64) < min * (1.0 - COMPLIANCE_RTOL) {
                    return Err(Error::HorizonTooShort { horizon, min });
                }
            }
            StepSchedule::Decaying { alpha, tau } => {
                let (a, t) = decaying_constants(gamma, omega);
                let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * y.abs();
                if !(close(alpha, a) && close(tau, t)) {
                    return Err(Error::NonCompliantSchedule(format!(
                        "decaying schedule needs alpha={a}, tau={t}; got alpha={alpha}, tau={tau}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_non_increasing(&self) -> bool {
        match *self {
            StepSchedule::Constant { .. } | StepSchedule::InvSqrtT { .. } => true,
            StepSchedule::Decaying { alpha, tau } => alpha >= 0.0 && tau > 0.0,
        }
    }
}

/// `(1 - gamma) / 8`.
pub fn max_constant_alpha(gamma: f64) -> f64 {
    (1.0 - gamma) / 8.0
}

/// `64 / (1 - gamma)^2`.
pub fn min_inv_sqrt_horizon(gamma: f64) -> f64 {
    64.0 / ((1.0 - gamma) * (1.0 - gamma))
}

/// `(alpha, tau) = (2/((1-gamma) omega), 16/((1-gamma)^2 omega))`.
pub fn decaying_constants(gamma: f64, omega: f64) -> (f64, f64) {
    let g = 1.0 - gamma;
    (2.0 / (g * omega), 16.0 / (g * g * omega))
}

/// The three parts of the convergence theorem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoremPart {
    A,
    B,
    C,
}

impl std::str::FromStr for TheoremPart {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(TheoremPart::A),
            "b" => Ok(TheoremPart::B),
            "c" => Ok(TheoremPart::C),
            other => Err(Error::InvalidParameter(format!("unknown theorem part '{other}'"))),
        }
    }
}

/// The step-size schedule prescribed by a theorem part.
///
/// For part (a) a requested `alpha` above `(1-gamma)/8` is an error when
/// `strict`, otherwise it is replaced by the maximum compliant value.
pub fn theorem_schedule(
    part: TheoremPart,
    gamma: f64,
    omega: f64,
    horizon: usize,
    alpha: Option<f64>,
    strict: bool,
) -> Result<StepSchedule> {
    match part {
        TheoremPart::A => {
            let max = max_constant_alpha(gamma);
            match alpha {
                Some(a) if a > 0.0 && a <= max * (1.0 + COMPLIANCE_RTOL) => Ok(StepSchedule::Constant { alpha: a }),
                Some(a) if strict => Err(Error::NonCompliantAlpha { alpha: a, max }),
                _ => Ok(StepSchedule::Constant { alpha: max }),
            }
        }
        TheoremPart::B => {
            let min = min_inv_sqrt_horizon(gamma);
            if (horizon as f64) < min * (1.0 - COMPLIANCE_RTOL) {
                return Err(Error::HorizonTooShort { horizon, min });
            }
            Ok(StepSchedule::InvSqrtT { horizon })
        }
        TheoremPart::C => {
            if !(omega > 0.0) {
                return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
            }
            let (alpha, tau) = decaying_constants(gamma, omega);
            Ok(StepSchedule::Decaying { alpha, tau })
        }
    }
}

/// Classical single-agent TD(0) on i.i.d. samples drawn from `rng`.
pub fn run_td0<R: Rng + ?Sized>(
    sampler: &Sampler,
    fm: &FeatureMap,
    schedule: &StepSchedule,
    gamma: f64,
    theta0: DVector<f64>,
    horizon: usize,
    rng: &mut R,
) -> Result<LearnerState> {
    let mut state = LearnerState::new(theta0);
    for t in 0..horizon {
        let tuple = sampler.sample_iid(rng);
        state.td0_update(fm, &tuple, schedule.alpha(t), gamma, DEFAULT_DIVERGENCE_GUARD)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{induce_chain, Mdp, Policy};
    use crate::oracle::build_oracle;
    use crate::rng;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn tuple(s: usize, s_next: usize, reward: f64) -> SampleTuple {
        SampleTuple { s, a: 0, s_next, reward }
    }

    #[test]
    fn td_error_examples() {
        let fm = FeatureMap::tabular(3);
        assert_eq!(td_error(&fm, &tuple(0, 2, 1.7), &[0.0; 3], 0.9), 1.7);
        assert_eq!(td_error(&fm, &tuple(0, 0, 1.0), &[1.0, 0.0, 0.0], 0.5), 0.5);
    }

    #[test]
    fn td_error_vanishes_at_fixed_point_of_deterministic_chain() {
        let mdp = Mdp::new(1, 1, vec![1.0], vec![1.0], 0.5).unwrap();
        let pol = Policy::uniform(1, 1);
        let chain = induce_chain(&mdp, &pol).unwrap();
        let fm = FeatureMap::tabular(1);
        let o = build_oracle(&mdp, &pol, &chain, &fm).unwrap();
        assert_eq!(td_error(&fm, &tuple(0, 0, 1.0), o.theta_star.as_slice(), 0.5), 0.0);
    }

    #[test]
    fn zero_td_error_leaves_theta() {
        let fm = FeatureMap::tabular(2);
        let mut st = LearnerState::new(DVector::from_vec(vec![2.0, 0.0]));
        // r = theta(s) - gamma theta(s') = 2 - 0.5 * 0
        let d = st.td0_update(&fm, &tuple(0, 1, 2.0), 0.3, 0.5, DEFAULT_DIVERGENCE_GUARD).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(st.theta, DVector::from_vec(vec![2.0, 0.0]));
    }

    #[test]
    fn first_average_is_midpoint() {
        let fm = FeatureMap::tabular(1);
        let mut st = LearnerState::new(DVector::from_vec(vec![1.0]));
        st.theta_hat = DVector::from_vec(vec![4.0]);
        st.td0_update(&fm, &tuple(0, 0, 1.0), 0.5, 0.5, DEFAULT_DIVERGENCE_GUARD).unwrap();
        // delta = 1 - 0.5 = 0.5, theta(1) = 1.25
        assert_eq!(st.theta[0], 1.25);
        assert_eq!(st.theta_hat[0], 0.5 * 4.0 + 0.5 * 1.25);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn divergence_is_reported() {
        let fm = FeatureMap::tabular(1);
        let mut st = LearnerState::new(DVector::from_vec(vec![1.0]));
        let err = st.td0_update(&fm, &tuple(0, 0, 1e6), 1.0, 0.5, 10.0).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 1, .. }));
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(max_constant_alpha(0.5), 0.0625);
        assert_eq!(min_inv_sqrt_horizon(0.5), 256.0);
        assert_eq!(StepSchedule::InvSqrtT { horizon: 256 }.alpha(17), 0.0625);
        let (a, tau) = decaying_constants(0.5, 1.0);
        assert_eq!((a, tau), (4.0, 64.0));
        assert_eq!(StepSchedule::Decaying { alpha: a, tau }.alpha(0), 0.0625);
        assert_eq!(StepSchedule::Constant { alpha: 0.3 }.alpha(1000), 0.3);
    }

    #[test]
    fn theorem_schedule_examples() {
        let err = theorem_schedule(TheoremPart::B, 0.5, 1.0, 255, None, true).unwrap_err();
        assert!(matches!(err, Error::HorizonTooShort { horizon: 255, .. }));
        assert_eq!(
            theorem_schedule(TheoremPart::B, 0.5, 1.0, 256, None, true).unwrap(),
            StepSchedule::InvSqrtT { horizon: 256 }
        );

        match theorem_schedule(TheoremPart::C, 0.9, 0.2, 0, None, true).unwrap() {
            StepSchedule::Decaying { alpha, tau } => {
                assert_relative_eq!(alpha, 100.0, max_relative = 1e-12);
                assert_relative_eq!(tau, 8000.0, max_relative = 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }

        let err = theorem_schedule(TheoremPart::A, 0.5, 1.0, 10, Some(0.1), true).unwrap_err();
        assert!(matches!(err, Error::NonCompliantAlpha { .. }));
        assert_eq!(
            theorem_schedule(TheoremPart::A, 0.5, 1.0, 10, Some(0.1), false).unwrap(),
            StepSchedule::Constant { alpha: 0.0625 }
        );
        assert_eq!(
            theorem_schedule(TheoremPart::A, 0.5, 1.0, 10, Some(0.01), true).unwrap(),
            StepSchedule::Constant { alpha: 0.01 }
        );
    }

    #[test]
    fn compliance_boundaries_tolerate_rounding() {
        // 1 - 0.9 is not exactly 0.1 in binary.
        assert!(StepSchedule::InvSqrtT { horizon: 6400 }.check_compliance(0.9, 1.0).is_ok());
        assert!(StepSchedule::Constant { alpha: 0.0125 }.check_compliance(0.9, 1.0).is_ok());
        assert!(StepSchedule::Constant { alpha: 0.013 }.check_compliance(0.9, 1.0).is_err());
        assert!(StepSchedule::InvSqrtT { horizon: 6399 }.check_compliance(0.9, 1.0).is_err());
        assert!(StepSchedule::Decaying { alpha: 4.0, tau: 64.0 }.check_compliance(0.5, 1.0).is_ok());
        assert!(StepSchedule::Decaying { alpha: 4.0, tau: 60.0 }.check_compliance(0.5, 1.0).is_err());
    }

    /// Independent oracle: arithmetic mean of the stored trajectory.
    fn direct_mean(traj: &[DVector<f64>]) -> DVector<f64> {
        let mut sum = DVector::zeros(traj[0].len());
        for t in traj {
            sum += t;
        }
        sum / traj.len() as f64
    }

    #[test]
    fn running_average_matches_direct_mean() {
        let mut r = rng::stream(41);
        let mdp = Mdp::random(5, 2, 0.9, &mut r).unwrap();
        let pol = Policy::uniform(5, 2);
        let chain = induce_chain(&mdp, &pol).unwrap();
        let sampler = Sampler::new(&mdp, &pol, &chain).unwrap();
        let fm = FeatureMap::random(5, 3, &mut r).unwrap();
        let mut st = LearnerState::new(DVector::from_vec(vec![0.5, -0.5, 1.0]));
        let mut traj = vec![st.theta.clone()];
        for _ in 0..5000 {
            let t = sampler.sample_iid(&mut r);
            st.td0_update(&fm, &t, 0.05, 0.9, DEFAULT_DIVERGENCE_GUARD).unwrap();
            traj.push(st.theta.clone());
        }
        assert!((&st.theta_hat - direct_mean(&traj)).amax() <= 1e-12);
    }

    #[test]
    fn expected_updates_contract_toward_theta_star() {
        let mut r = rng::stream(42);
        for _ in 0..5 {
            let mdp = Mdp::random(6, 2, 0.5, &mut r).unwrap();
            let pol = Policy::uniform(6, 2);
            let chain = induce_chain(&mdp, &pol).unwrap();
            let fm = FeatureMap::random(6, 3, &mut r).unwrap();
            let o = build_oracle(&mdp, &pol, &chain, &fm).unwrap();
            let alpha = max_constant_alpha(0.5);
            let mut theta = DVector::from_element(3, 5.0);
            let mut prev = f64::INFINITY;
            for t in 0..20_000 {
                theta += o.expected_update_direction(&theta) * alpha;
                let dist = (&theta - &o.theta_star).norm();
                if t > 1000 {
                    assert!(dist <= prev + 1e-12, "distance increased at step {t}");
                }
                prev = dist;
            }
        }
    }

    proptest! {
        #[test]
        fn running_average_is_exact_mean(steps in proptest::collection::vec((0usize..3, 0usize..3, -2.0f64..2.0), 1..300)) {
            let fm = FeatureMap::tabular(3);
            let mut st = LearnerState::new(DVector::from_vec(vec![0.1, 0.2, 0.3]));
            let mut traj = vec![st.theta.clone()];
            for (s, s2, r) in steps {
                st.td0_update(&fm, &tuple(s, s2, r), 0.1, 0.9, DEFAULT_DIVERGENCE_GUARD).unwrap();
                traj.push(st.theta.clone());
            }
            prop_assert!((&st.theta_hat - direct_mean(&traj)).amax() <= 1e-12);
        }
    }
}
