//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use oneshot_td::bounds::{product_estimate_check, constant_step_rhs, decaying_step_rhs, one_step_rhs, BoundInputs};
use oneshot_td::consensus::{
    disagreement, erdos_renyi_connected, random_strongly_connected, rounds_for_accuracy, run_average_consensus,
    PushSumState, StopRule, WeightMatrix,
};
use oneshot_td::features::FeatureMap;
use oneshot_td::gridworld::Gridworld;
use oneshot_td::mdp::{Mdp, Policy};
use oneshot_td::oracle::r_hat_0;
use oneshot_td::rng;
use oneshot_td::stats::{linear_fit, loglog_fit, replicate, MeanSe};
use oneshot_td::swarm::{estimate_mean_update, one_step_average, run_consensus_every_step, run_parallel_td0, SwarmConfig};
use oneshot_td::td::{decaying_constants, StepSchedule};
use oneshot_td::{Problem, Result};
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn default_instance() -> Problem {
    Problem::random(10, 2, 4, 0.5, 1).expect("default instance")
}

fn zeros_inputs(p: &Problem, agents: usize, horizon: usize, alpha: Option<f64>) -> BoundInputs {
    let r0 = r_hat_0(&[DVector::zeros(p.dim())], &p.oracle.theta_star);
    BoundInputs {
        gamma: p.gamma(),
        omega: p.oracle.omega,
        sigma_sq: p.oracle.sigma_sq,
        r_hat_0: r0,
        init_mean_err: r0,
        agents,
        horizon,
        alpha,
    }
}

fn c1_oracle_equivalence() -> Result<Outcome> {
    let mut r = rng::stream(101);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let n = r.random_range(1..=20);
        let m = r.random_range(1..=4);
        let gamma = if i % 2 == 0 { 0.5 } else { 0.9 };
        let mdp = Mdp::random(n, m, gamma, &mut r)?;
        let policy = Policy::uniform(n, m);
        let p = Problem::new(mdp.clone(), policy.clone(), FeatureMap::tabular(n))?;
        let mut p_mu = DMatrix::zeros(n, n);
        let mut r_mu = DVector::zeros(n);
        for s in 0..n {
            for a in 0..m {
                for s2 in 0..n {
                    let w = policy.prob(s, a) * mdp.prob(s, a, s2);
                    p_mu[(s, s2)] += w;
                    r_mu[s] += w * mdp.reward(s, a, s2);
                }
            }
        }
        let lhs = DMatrix::identity(n, n) - p_mu * gamma;
        let v = lhs.full_piv_lu().solve(&r_mu).expect("nonsingular");
        worst = worst.max((&p.oracle.theta_star - &v).norm() / v.norm().max(1e-300));
    }
    outcome(worst <= 1e-9, format!("max relative error {worst:.2e} (tol 1e-9)"))
}

fn c2_mean_update() -> Result<Outcome> {
    let instances = [default_instance(), Problem::gridworld(&Gridworld::default())?];
    let mut worst: f64 = 0.0;
    for (i, p) in instances.iter().enumerate() {
        let mut r = rng::stream(200 + i as u64);
        let k = p.dim();
        let mut thetas = vec![p.oracle.theta_star.clone(), DVector::zeros(k)];
        for _ in 0..3 {
            thetas.push(DVector::from_fn(k, |_, _| 2.0 * r.sample::<f64, _>(StandardNormal)));
        }
        for theta in &thetas {
            let est = estimate_mean_update(p, theta, 1_000_000, &mut r)?;
            let exact = p.oracle.expected_update_direction(theta);
            for j in 0..k {
                let z = (est.mean[j] - exact[j]).abs() / est.std_errors[j];
                worst = worst.max(if z.is_nan() { 0.0 } else { z });
            }
        }
    }
    outcome(worst <= 5.0, format!("max |z| {worst:.2} over 2 instances x 5 thetas (tol 5 SE)"))
}

fn c3_one_step() -> Result<Outcome> {
    let p = Problem::random(3, 2, 2, 0.5, 3)?;
    let star = &p.oracle.theta_star;
    let offsets = [
        (vec![[0.5, -0.3], [-0.2, 0.4], [1.0, 1.0], [0.0, -0.6]], 0.0625),
        (vec![[2.0, 0.0], [2.0, 0.1], [1.5, -0.1], [2.2, 0.0]], 0.03),
        (vec![[-1.0, 3.0], [0.3, 0.3], [0.0, 0.0], [-0.5, -2.0]], 0.01),
    ];
    let mut worst = f64::NEG_INFINITY;
    for (i, (offs, alpha)) in offsets.iter().enumerate() {
        let thetas: Vec<DVector<f64>> = offs.iter().map(|o| star + DVector::from_column_slice(o)).collect();
        let n = thetas.len() as f64;
        let mean = thetas.iter().fold(DVector::zeros(2), |acc, t| acc + t) / n;
        let errs: Vec<f64> = replicate(100_000, 300 + i as u64, |_, seed| {
            let next = one_step_average(&p, &thetas, *alpha, &mut rng::stream(seed));
            Ok(p.sq_dist(&next))
        })?;
        let lhs = MeanSe::from_samples(&errs);
        let dnorms: Vec<f64> = thetas
            .iter()
            .map(|t| p.chain.d_norm_sq(&p.features.value_of(&(t - star))))
            .collect();
        let rhs = one_step_rhs(&p.oracle, p.sq_dist(&mean), &dnorms, *alpha, &mean, &p.features, &p.chain);
        worst = worst.max((lhs.mean - rhs) / lhs.se);
    }
    outcome(worst <= 5.0, format!("max (LHS - RHS)/SE {worst:.2} at 3 points (tol 5)"))
}

fn c4_part_a() -> Result<Outcome> {
    let p = default_instance();
    let horizon = 10_000;
    let mut details = Vec::new();
    let mut pass = true;
    for alpha in [0.01, 0.0625] {
        for agents in [1, 16] {
            let cfg = SwarmConfig::new(agents, horizon, StepSchedule::Constant { alpha }).without_trace();
            let lhs: Vec<f64> = replicate(200, 400 + agents as u64, |_, seed| {
                let res = run_parallel_td0(&p, &cfg.clone().with_seed(seed))?;
                Ok(p.weighted_error(&res.theta_hat))
            })?;
            let m = MeanSe::from_samples(&lhs);
            let rhs = constant_step_rhs(&zeros_inputs(&p, agents, horizon, Some(alpha)))?;
            pass &= m.mean <= rhs + 3.0 * m.se;
            details.push(format!("a={alpha} N={agents}: {:.3e}<={rhs:.3e}", m.mean));
        }
    }
    outcome(pass, details.join("; "))
}

fn c5_linear_speedup() -> Result<Outcome> {
    let p = default_instance();
    let alpha = 0.02;
    let horizon = 10_000;
    let ns = [1usize, 4, 16, 64];
    let mut ys = Vec::new();
    for &n in &ns {
        let cfg = SwarmConfig::new(n, horizon, StepSchedule::Constant { alpha }).without_trace();
        let errs: Vec<f64> = replicate(200, 500 + n as u64, |_, seed| {
            Ok(run_parallel_td0(&p, &cfg.clone().with_seed(seed))?.sq_err(&p))
        })?;
        ys.push(MeanSe::from_samples(&errs).mean);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let fit = loglog_fit(&xs, &ys);
    let errs: Vec<String> = ys.iter().map(|y| format!("{y:.3e}")).collect();
    outcome(
        (fit.slope + 1.0).abs() <= 0.15,
        format!("slope {:.3} (tol -1 +/- 0.15), errors [{}]", fit.slope, errs.join(", ")),
    )
}

fn c6_part_c() -> Result<Outcome> {
    let p = default_instance();
    let agents = 4;
    let (alpha, tau) = decaying_constants(p.gamma(), p.oracle.omega);
    let horizon = ((20.0 * tau) as usize).max(10_000);
    let mut cfg = SwarmConfig::new(agents, horizon, StepSchedule::Decaying { alpha, tau });
    cfg.trace_every = horizon / 50;
    let traces: Vec<Vec<f64>> = replicate(200, 600, |_, seed| {
        let res = run_parallel_td0(&p, &cfg.clone().with_seed(seed))?;
        Ok(res.trace.iter().map(|tp| tp.sq_err).collect())
    })?;
    let steps: Vec<usize> = (0..horizon).step_by(cfg.trace_every).chain([horizon]).collect();
    let b = zeros_inputs(&p, agents, horizon, None);
    let mut worst = f64::NEG_INFINITY;
    let mut scaled = Vec::new();
    for (i, &t) in steps.iter().enumerate() {
        let col: Vec<f64> = traces.iter().map(|tr| tr[i]).collect();
        let m = MeanSe::from_samples(&col);
        let rhs = if t == 0 { b.init_mean_err } else { decaying_step_rhs(&b, t - 1) };
        worst = worst.max((m.mean - rhs) / m.se.max(f64::MIN_POSITIVE));
        scaled.push((t as f64 + tau) * m.mean);
    }
    let limit = 2.0 * alpha * alpha * p.oracle.sigma_sq / agents as f64;
    let tail = scaled[scaled.len() - 5..].iter().sum::<f64>() / 5.0;
    outcome(
        worst <= 3.0 && tail <= 1.25 * limit,
        format!(
            "max (err - rhs)/SE {worst:.2} over {} points; tail (t+tau)*err {tail:.3e} vs 2a^2s^2/N {limit:.3e} (tau {tau:.0}, T {horizon})",
            steps.len()
        ),
    )
}

fn c7_consensus() -> Result<Outcome> {
    let mut r = rng::stream(700);
    let g = erdos_renyi_connected(100, 0.1, &mut r)?;
    let w = WeightMatrix::metropolis(&g)?;
    let values = DMatrix::from_fn(100, 3, |_, _| r.random_range(-10.0..10.0));
    let eps = 1e-8;
    let (_, rounds) = run_average_consensus(&w, &values, eps, StopRule::OracleMean)?;
    let bound = rounds_for_accuracy(&w, eps, disagreement(&values))?;

    let dg = random_strongly_connected(50, 0.05, &mut r)?;
    let xs = DMatrix::from_fn(50, 1, |_, _| r.random_range(-10.0..10.0));
    let mean = xs.mean();
    let mut ps = PushSumState::new(&xs);
    let mut errs = Vec::new();
    for _ in 0..2000 {
        ps.step(&dg);
        let e = ps.estimates().iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        if e < 1e-11 {
            break;
        }
        errs.push(e);
    }
    let start = errs.len() / 5;
    let rs: Vec<f64> = (start..errs.len()).map(|i| i as f64).collect();
    let logs: Vec<f64> = errs[start..].iter().map(|e| e.ln()).collect();
    let fit = linear_fit(&rs, &logs);
    outcome(
        rounds <= bound && fit.r_squared >= 0.99 && fit.slope < 0.0,
        format!(
            "ER(100,0.1): {rounds} rounds <= {bound}; push-sum rate {:.4}/round, R^2 {:.4} over {} rounds",
            fit.slope.exp(),
            fit.r_squared,
            rs.len()
        ),
    )
}

fn c8_consensus_at_one_over_t() -> Result<Outcome> {
    let p = default_instance();
    let agents = 16;
    let horizon = 100_000;
    let eps = 1.0 / horizon as f64;
    let g = erdos_renyi_connected(agents, 0.3, &mut rng::stream(800))?;
    let w = WeightMatrix::metropolis(&g)?;
    let cfg = SwarmConfig::new(agents, horizon, StepSchedule::Constant { alpha: 0.0625 }).without_trace();
    let rows = |vs: &[DVector<f64>]| DMatrix::from_fn(vs.len(), p.dim(), |i, j| vs[i][j]);
    let runs: Vec<([f64; 3], [f64; 3], usize, f64)> = replicate(20, 801, |_, seed| {
        let res = run_parallel_td0(&p, &cfg.clone().with_seed(seed))?;
        let fin = rows(&res.per_agent_final);
        let hat = rows(&res.per_agent_hat);
        let scale = disagreement(&fin).max(disagreement(&hat));
        let (fin_c, rounds) = run_average_consensus(&w, &fin, eps, StopRule::Precomputed { value_scale: scale })?;
        let (hat_c, _) = run_average_consensus(&w, &hat, eps, StopRule::Precomputed { value_scale: scale })?;
        let bar_c = fin_c.row(0).transpose();
        let hat_c = hat_c.row(0).transpose();
        let exact = [p.sq_dist(&res.theta_bar), p.weighted_error(&res.theta_hat), p.value_error(&res.theta_bar)];
        let cons = [p.sq_dist(&bar_c), p.weighted_error(&hat_c), p.value_error(&bar_c)];
        Ok((exact, cons, rounds, scale))
    })?;
    let mut worst_ratio: f64 = 0.0;
    for metric in 0..3 {
        let exact: Vec<f64> = runs.iter().map(|r| r.0[metric]).collect();
        let cons: Vec<f64> = runs.iter().map(|r| r.1[metric]).collect();
        let se = MeanSe::from_samples(&exact).se;
        let change = (MeanSe::from_samples(&cons).mean - MeanSe::from_samples(&exact).mean).abs();
        let max_pointwise = exact.iter().zip(&cons).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_ratio = worst_ratio.max(change.max(max_pointwise) / se);
    }
    let max_rounds = runs.iter().map(|r| r.2).max().unwrap_or(0);
    let max_scale = runs.iter().map(|r| r.3).fold(0.0, f64::max);
    let c = 2.0 / (1.0 / w.lambda2()).ln();
    let log_t = (horizon as f64).ln();
    outcome(
        worst_ratio < 1.0 && (max_rounds as f64) <= c * log_t && max_scale <= horizon as f64,
        format!(
            "max change {worst_ratio:.2e} SE; rounds {max_rounds} <= C log T = {:.1} (lambda2 {:.3}, C = 2/ln(1/lambda2))",
            c * log_t,
            w.lambda2()
        ),
    )
}

fn c9_gridworld_figure() -> Result<Outcome> {
    let grid = Gridworld::default();
    let p = Problem::gridworld(&grid)?;
    let agents = 100;
    let g = erdos_renyi_connected(agents, 0.1, &mut rng::stream(900))?;
    let w = WeightMatrix::metropolis(&g)?;
    let cfg = SwarmConfig::new(agents, 20_000, StepSchedule::Constant { alpha: 0.05 }).with_seed(901);
    let one_shot = run_parallel_td0(&p, &cfg)?;
    let baseline = run_consensus_every_step(&p, &cfg, &w)?;
    let a = one_shot.trace.last().expect("trace").value_err;
    let b = baseline.trace.last().expect("trace").value_err;
    let rel = (a - b).abs() / b;
    let start = one_shot.trace[0].value_err;
    outcome(
        rel <= 0.05,
        format!("final TD error one-shot {a:.4} vs baseline {b:.4} (start {start:.3}), relative gap {:.2}%", 100.0 * rel),
    )
}

fn c10_product_estimate() -> Result<Outcome> {
    let mut pass = true;
    let mut details = Vec::new();
    for tau in [16.0, 64.0, 8000.0] {
        let c = product_estimate_check(tau, 10_000)?;
        pass &= c.holds;
        details.push(format!("tau={tau}: max ratio {:.4}", c.max_ratio));
    }
    outcome(pass, details.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("oracle equivalence (tabular)", c1_oracle_equivalence),
        ("mean update direction", c2_mean_update),
        ("one-step recursion", c3_one_step),
        ("constant-step bound dominance", c4_part_a),
        ("linear speedup in N", c5_linear_speedup),
        ("decaying-step bound and tail", c6_part_c),
        ("consensus accuracy and push-sum rate", c7_consensus),
        ("consensus at eps = 1/T", c8_consensus_at_one_over_t),
        ("gridworld one-shot vs baseline", c9_gridworld_figure),
        ("product estimate", c10_product_estimate),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {:<40} {} [{:.1}s] {detail}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
