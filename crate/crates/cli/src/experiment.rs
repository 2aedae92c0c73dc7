//! The subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use oneshot_td::bounds::{constant_step_rhs, inv_sqrt_step_rhs, decaying_step_rhs, BoundInputs};
use oneshot_td::consensus::{
    disagreement, erdos_renyi_connected, max_deviation, node_mean, rounds_for_accuracy, run_average_consensus,
    PushSumState, StopRule, WeightMatrix,
};
use oneshot_td::nalgebra::{DMatrix, DVector};
use oneshot_td::oracle::r_hat_0;
use oneshot_td::rng;
use oneshot_td::stats::{linear_fit, loglog_fit, replicate, MeanSe};
use oneshot_td::swarm::{run_consensus_every_step, run_parallel_td0, Sampling, SwarmConfig, SwarmResult};
use oneshot_td::td::{theorem_schedule, StepSchedule, TheoremPart};
use oneshot_td::Problem;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CliError, CliResult};
use crate::output::{num, Artifacts};
use crate::spec::{LoadedSpec, SweepAxis};
use crate::svg::{LineChart, Series};

pub const TD_ERROR_METRIC: &str = "TD error = |V_theta - V^mu|_D, the stationary-weighted distance between the \
     linear value estimate and the exact value function of the evaluated policy";

/// Options shared by every subcommand after flag overrides.
pub struct Context {
    pub loaded: LoadedSpec,
    pub strict: bool,
    pub replications: Option<usize>,
}

impl Context {
    fn reps(&self, default: usize) -> usize {
        self.replications.or(self.loaded.spec.replications).unwrap_or(default)
    }
}

fn rows(vs: &[DVector<f64>]) -> DMatrix<f64> {
    let k = vs.first().map_or(0, |v| v.len());
    DMatrix::from_fn(vs.len(), k, |i, j| vs[i][j])
}

fn check_strict(ctx: &Context, problem: &Problem, cfg: &SwarmConfig) -> CliResult<()> {
    if ctx.strict {
        cfg.schedule.check_compliance(problem.gamma(), problem.oracle.omega)?;
        if cfg.sampling != Sampling::Iid {
            return Err(CliError::validation("strict compliance requires i.i.d. sampling"));
        }
    }
    Ok(())
}

fn bound_inputs(problem: &Problem, cfg: &SwarmConfig) -> CliResult<BoundInputs> {
    let init = cfg.init.all(cfg.agents, problem.dim())?;
    let mean = init.iter().fold(DVector::zeros(problem.dim()), |acc, t| acc + t) / cfg.agents as f64;
    Ok(BoundInputs {
        gamma: problem.gamma(),
        omega: problem.oracle.omega,
        sigma_sq: problem.oracle.sigma_sq,
        r_hat_0: r_hat_0(&init, &problem.oracle.theta_star),
        init_mean_err: problem.sq_dist(&mean),
        agents: cfg.agents,
        horizon: cfg.horizon,
        alpha: match cfg.schedule {
            StepSchedule::Constant { alpha } => Some(alpha),
            _ => None,
        },
    })
}

fn part_of(schedule: &StepSchedule) -> TheoremPart {
    match schedule {
        StepSchedule::Constant { .. } => TheoremPart::A,
        StepSchedule::InvSqrtT { .. } => TheoremPart::B,
        StepSchedule::Decaying { .. } => TheoremPart::C,
    }
}

/// One row of a bound comparison table.
struct BoundRow {
    part: TheoremPart,
    t: usize,
    emp: MeanSe,
    rhs: f64,
}

impl BoundRow {
    fn holds(&self) -> bool {
        self.emp.mean <= self.rhs + 3.0 * self.emp.se
    }
}

/// Bound comparison rows for replicated swarm results run under `part`'s schedule.
fn bound_rows(problem: &Problem, cfg: &SwarmConfig, part: TheoremPart, runs: &[SwarmResult]) -> CliResult<Vec<BoundRow>> {
    let b = bound_inputs(problem, cfg)?;
    match part {
        TheoremPart::A | TheoremPart::B => {
            let lhs: Vec<f64> = runs.iter().map(|r| problem.weighted_error(&r.theta_hat)).collect();
            let rhs = if part == TheoremPart::A { constant_step_rhs(&b)? } else { inv_sqrt_step_rhs(&b)? };
            Ok(vec![BoundRow { part, t: cfg.horizon, emp: MeanSe::from_samples(&lhs), rhs }])
        }
        TheoremPart::C => {
            let Some(first) = runs.first() else { return Ok(Vec::new()) };
            Ok(first
                .trace
                .iter()
                .enumerate()
                .filter(|(_, tp)| tp.step > 0)
                .map(|(i, tp)| {
                    let errs: Vec<f64> = runs.iter().map(|r| r.trace[i].sq_err).collect();
                    BoundRow { part, t: tp.step, emp: MeanSe::from_samples(&errs), rhs: decaying_step_rhs(&b, tp.step - 1) }
                })
                .collect())
        }
    }
}

fn write_bound_rows(out: &mut Artifacts, name: &str, rows: &[BoundRow]) -> CliResult<()> {
    out.write_csv(name, &["part", "t", "empirical_mean", "std_error", "rhs", "holds"], |w| {
        for r in rows {
            let part = format!("{:?}", r.part).to_lowercase();
            w.write_record([
                part,
                r.t.to_string(),
                num(r.emp.mean),
                num(r.emp.se),
                num(r.rhs),
                r.holds().to_string(),
            ])?;
        }
        Ok(())
    })
}

fn readout_weights(loaded: &LoadedSpec, agents: usize) -> CliResult<Option<WeightMatrix>> {
    let spec = &loaded.spec;
    let graph_spec = spec.consensus.graph.as_ref().or(spec.baseline.as_ref().map(|b| &b.graph));
    graph_spec
        .map(|g| Ok(WeightMatrix::metropolis(&loaded.graph(g, agents)?)?))
        .transpose()
}

#[derive(Default)]
struct TraceMetrics {
    value_err: Vec<f64>,
    sq_err: Vec<f64>,
    weighted_hat: Vec<f64>,
}

struct RunReplicate {
    steps: Vec<usize>,
    one_shot: TraceMetrics,
    baseline: Option<TraceMetrics>,
}

fn trace_metrics(problem: &Problem, res: &SwarmResult, readout: Option<(&WeightMatrix, f64)>) -> oneshot_td::Result<TraceMetrics> {
    let mut m = TraceMetrics::default();
    for tp in &res.trace {
        let value_err = match (readout, &tp.agents) {
            (Some((w, eps)), Some(agents)) => {
                let x = rows(agents);
                let (mixed, _) =
                    run_average_consensus(w, &x, eps, StopRule::Precomputed { value_scale: disagreement(&x) })?;
                problem.value_error(&mixed.row(0).transpose())
            }
            _ => tp.value_err,
        };
        m.value_err.push(value_err);
        m.sq_err.push(tp.sq_err);
        m.weighted_hat.push(problem.weighted_error(&tp.theta_hat));
    }
    Ok(m)
}

fn column_stats(reps: &[&TraceMetrics], pick: fn(&TraceMetrics) -> &Vec<f64>, i: usize) -> MeanSe {
    let xs: Vec<f64> = reps.iter().map(|m| pick(m)[i]).collect();
    MeanSe::from_samples(&xs)
}

pub fn run(ctx: &Context, out: &mut Artifacts) -> CliResult<BTreeMap<String, String>> {
    let loaded = &ctx.loaded;
    let problem = loaded.problem()?;
    let mut cfg = loaded.swarm_config(loaded.schedule(&problem));
    check_strict(ctx, &problem, &cfg)?;
    if cfg.trace_every == 0 {
        return Err(CliError::validation("run needs a trace (swarm.trace_every > 0)"));
    }
    let readout = readout_weights(loaded, cfg.agents)?;
    cfg.record_agents = readout.is_some();
    let eps = loaded.spec.consensus.eps;
    let baseline_w = match &loaded.spec.baseline {
        Some(b) => Some(WeightMatrix::metropolis(&loaded.graph(&b.graph, cfg.agents)?)?),
        None => None,
    };
    let reps = ctx.reps(1);
    let part = part_of(&cfg.schedule);
    let applies = cfg.theorem_applies(&problem);

    let (results, finals): (Vec<RunReplicate>, Vec<SwarmResult>) = replicate(reps, cfg.master_seed, |_, seed| {
        let c = SwarmConfig { master_seed: seed, ..cfg.clone() };
        let mut res = run_parallel_td0(&problem, &c)?;
        let one_shot = trace_metrics(&problem, &res, readout.as_ref().map(|w| (w, eps)))?;
        for tp in &mut res.trace {
            tp.agents = None;
        }
        let baseline = match &baseline_w {
            Some(w) => {
                let c = SwarmConfig { record_agents: false, ..c };
                Some(trace_metrics(&problem, &run_consensus_every_step(&problem, &c, w)?, None)?)
            }
            None => None,
        };
        let steps = res.trace.iter().map(|tp| tp.step).collect();
        Ok((RunReplicate { steps, one_shot, baseline }, res))
    })?
    .into_iter()
    .unzip();

    let steps = results[0].steps.clone();
    let mut methods: Vec<(&str, Vec<&TraceMetrics>)> = vec![("one-shot", results.iter().map(|r| &r.one_shot).collect())];
    if baseline_w.is_some() {
        methods.push(("consensus-every-step", results.iter().filter_map(|r| r.baseline.as_ref()).collect()));
    }

    out.write_csv(
        "trace.csv",
        &[
            "method",
            "step",
            "td_error_mean",
            "td_error_se",
            "sq_err_mean",
            "sq_err_se",
            "weighted_err_hat_mean",
            "weighted_err_hat_se",
        ],
        |w| {
            for (name, reps) in &methods {
                for (i, step) in steps.iter().enumerate() {
                    let v = column_stats(reps, |m| &m.value_err, i);
                    let s = column_stats(reps, |m| &m.sq_err, i);
                    let h = column_stats(reps, |m| &m.weighted_hat, i);
                    w.write_record([
                        name.to_string(),
                        step.to_string(),
                        num(v.mean),
                        num(v.se),
                        num(s.mean),
                        num(s.se),
                        num(h.mean),
                        num(h.se),
                    ])?;
                }
            }
            Ok(())
        },
    )?;

    let chart = LineChart {
        title: format!("TD error, N = {}, {} replication(s)", cfg.agents, reps),
        x_label: "iteration".into(),
        y_label: "td_error".into(),
        note: TD_ERROR_METRIC.into(),
        log_y: true,
        series: methods
            .iter()
            .map(|(name, reps)| Series {
                name: name.to_string(),
                points: steps
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| (t as f64, column_stats(reps, |m| &m.value_err, i).mean))
                    .collect(),
            })
            .collect(),
        ..Default::default()
    };
    out.write_chart("td_error", &chart)?;

    let k = problem.dim();
    let mut header = vec!["step".to_string()];
    header.extend((0..k).map(|j| format!("theta_bar_{j}")));
    header.extend((0..k).map(|j| format!("theta_hat_{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write_csv("trajectory.csv", &header, |w| {
        for tp in &finals[0].trace {
            let mut rec = vec![tp.step.to_string()];
            rec.extend(tp.theta_bar.iter().chain(tp.theta_hat.iter()).map(|x| num(*x)));
            w.write_record(rec)?;
        }
        Ok(())
    })?;

    let last = steps.len() - 1;
    let mut notes = BTreeMap::new();
    notes.insert("td_error_metric".into(), TD_ERROR_METRIC.into());
    notes.insert(
        "one_shot_readout".into(),
        match readout {
            Some(_) => format!("average consensus on the read-out graph to eps = {eps}, node 0"),
            None => "exact network average".into(),
        },
    );
    notes.insert("replications".into(), reps.to_string());
    notes.insert("theorem_applies".into(), applies.to_string());
    for (name, reps) in &methods {
        let v = column_stats(reps, |m| &m.value_err, last);
        println!("{name}: final TD error {} (se {})", num(v.mean), num(v.se));
        notes.insert(format!("final_td_error_{name}"), num(v.mean));
    }
    if applies {
        let rows = bound_rows(&problem, &cfg, part, &finals)?;
        write_bound_rows(out, "bounds.csv", &rows)?;
        let violated = rows.iter().filter(|r| !r.holds()).count();
        println!("bound ({part:?}): {} of {} rows hold", rows.len() - violated, rows.len());
    } else {
        println!("theorem premises not met by this schedule/sampling; no bound table written");
    }
    Ok(notes)
}

pub fn sweep(ctx: &Context, out: &mut Artifacts) -> CliResult<BTreeMap<String, String>> {
    let loaded = &ctx.loaded;
    let sweep = loaded.spec.sweep.as_ref().ok_or_else(|| CliError::validation("spec has no [sweep] section"))?;
    sweep.validate()?;
    let problem = loaded.problem()?;
    let base = loaded.swarm_config(loaded.schedule(&problem)).without_trace();
    let reps = ctx.reps(200);

    let mut table = Vec::new();
    for &value in &sweep.values {
        let mut cfg = base.clone();
        match sweep.axis {
            SweepAxis::Agents => cfg.agents = value as usize,
            SweepAxis::Alpha => cfg.schedule = StepSchedule::Constant { alpha: value },
        }
        check_strict(ctx, &problem, &cfg)?;
        let runs: Vec<(f64, f64)> = replicate(reps, cfg.master_seed, |_, seed| {
            let res = run_parallel_td0(&problem, &SwarmConfig { master_seed: seed, ..cfg.clone() })?;
            Ok((res.sq_err(&problem), problem.weighted_error(&res.theta_hat)))
        })?;
        let sq = MeanSe::from_samples(&runs.iter().map(|r| r.0).collect::<Vec<_>>());
        let wh = MeanSe::from_samples(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
        let rhs = if cfg.theorem_applies(&problem) {
            let b = bound_inputs(&problem, &cfg)?;
            match part_of(&cfg.schedule) {
                TheoremPart::A => constant_step_rhs(&b).ok(),
                TheoremPart::B => inv_sqrt_step_rhs(&b).ok(),
                TheoremPart::C => Some(decaying_step_rhs(&b, cfg.horizon - 1)),
            }
        } else {
            None
        };
        println!("{} = {value}: sq_err {} (se {})", format!("{:?}", sweep.axis).to_lowercase(), num(sq.mean), num(sq.se));
        table.push((value, sq, wh, rhs));
    }

    let axis = format!("{:?}", sweep.axis).to_lowercase();
    out.write_csv(
        "sweep.csv",
        &[&axis, "sq_err_mean", "sq_err_se", "weighted_err_hat_mean", "weighted_err_hat_se", "rhs"],
        |w| {
            for (v, sq, wh, rhs) in &table {
                w.write_record([num(*v), num(sq.mean), num(sq.se), num(wh.mean), num(wh.se), rhs.map(num).unwrap_or_default()])?;
            }
            Ok(())
        },
    )?;
    let mut notes = BTreeMap::new();
    notes.insert("replications".into(), reps.to_string());
    let xs: Vec<f64> = table.iter().map(|r| r.0).collect();
    let ys: Vec<f64> = table.iter().map(|r| r.1.mean).collect();
    if sweep.axis == SweepAxis::Agents && xs.len() >= 2 {
        let fit = loglog_fit(&xs, &ys);
        out.write_csv("sweep_fit.csv", &["slope", "intercept", "r_squared"], |w| {
            w.write_record([num(fit.slope), num(fit.intercept), num(fit.r_squared)])
        })?;
        println!("log-log slope {} (R^2 {})", num(fit.slope), num(fit.r_squared));
        notes.insert("loglog_slope".into(), num(fit.slope));
    }
    let mut series = vec![Series { name: "empirical".into(), points: xs.iter().copied().zip(ys.iter().copied()).collect() }];
    let rhs_points: Vec<(f64, f64)> = table.iter().filter_map(|r| Some((r.0, r.3?))).collect();
    if !rhs_points.is_empty() {
        series.push(Series { name: "bound".into(), points: rhs_points });
    }
    let chart = LineChart {
        title: format!("|theta_bar(T) - theta*|^2 vs {axis}"),
        x_label: axis,
        y_label: "sq_err".into(),
        note: format!("{reps} replications per point; bound column is the matching theorem right-hand side"),
        log_x: true,
        log_y: true,
        series,
    };
    out.write_chart("sweep_chart", &chart)?;
    Ok(notes)
}

/// Returns the notes and whether every comparison held.
pub fn check_bounds(ctx: &Context, out: &mut Artifacts) -> CliResult<(BTreeMap<String, String>, bool)> {
    let loaded = &ctx.loaded;
    let problem = loaded.problem()?;
    let base = loaded.swarm_config(loaded.schedule(&problem));
    if base.sampling != Sampling::Iid {
        return Err(CliError::validation("bound checks require i.i.d. sampling"));
    }
    let explicit = !loaded.spec.bounds.parts.is_empty();
    let parts = if explicit { loaded.spec.bounds.parts.clone() } else { vec![TheoremPart::A, TheoremPart::B, TheoremPart::C] };
    let reps = ctx.reps(200);
    let alpha = match base.schedule {
        StepSchedule::Constant { alpha } => Some(alpha),
        _ => None,
    };
    let mut all_rows = Vec::new();
    let mut notes = BTreeMap::new();
    for part in parts {
        let schedule = match theorem_schedule(part, problem.gamma(), problem.oracle.omega, base.horizon, alpha, ctx.strict) {
            Ok(s) => s,
            Err(e) if !explicit => {
                println!("part {part:?}: skipped ({e})");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mut cfg = SwarmConfig { schedule, ..base.clone() };
        if part != TheoremPart::C {
            cfg.trace_every = 0;
        } else if cfg.trace_every == 0 {
            cfg.trace_every = oneshot_td::swarm::default_trace_stride(cfg.horizon);
        }
        let runs = replicate(reps, cfg.master_seed, |_, seed| {
            run_parallel_td0(&problem, &SwarmConfig { master_seed: seed, ..cfg.clone() })
        })?;
        let rows = bound_rows(&problem, &cfg, part, &runs)?;
        let held = rows.iter().filter(|r| r.holds()).count();
        println!("part {part:?} ({schedule:?}): {held} of {} comparisons hold", rows.len());
        notes.insert(format!("part_{part:?}").to_lowercase(), format!("{held}/{} hold", rows.len()));
        all_rows.extend(rows);
    }
    write_bound_rows(out, "bounds.csv", &all_rows)?;
    notes.insert("replications".into(), reps.to_string());
    Ok((notes, all_rows.iter().all(BoundRow::holds)))
}

pub fn oracle_report(ctx: &Context) -> CliResult<String> {
    let loaded = &ctx.loaded;
    let problem = loaded.problem()?;
    let cfg = loaded.swarm_config(loaded.schedule(&problem));
    let b = bound_inputs(&problem, &cfg)?;
    let o = &problem.oracle;
    let vec = |v: &DVector<f64>| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(" ");
    let mut s = String::new();
    let _ = writeln!(s, "states {}", problem.mdp.n_states());
    let _ = writeln!(s, "actions {}", problem.mdp.n_actions());
    let _ = writeln!(s, "features {}", problem.dim());
    let _ = writeln!(s, "gamma {}", num(problem.gamma()));
    let _ = writeln!(s, "A");
    for row in o.a.row_iter() {
        let _ = writeln!(s, "  {}", vec(&row.transpose()));
    }
    let _ = writeln!(s, "b {}", vec(&o.b));
    let _ = writeln!(s, "theta_star {}", vec(&o.theta_star));
    let _ = writeln!(s, "sigma_sq {}", num(o.sigma_sq));
    let _ = writeln!(s, "omega {}", num(o.omega));
    let _ = writeln!(s, "r_hat_0 {}", num(b.r_hat_0));
    let _ = writeln!(s, "stationary {}", vec(&problem.chain.pi));
    Ok(s)
}

pub fn consensus_demo(ctx: &Context, out: &mut Artifacts) -> CliResult<BTreeMap<String, String>> {
    let loaded = &ctx.loaded;
    let c = &loaded.spec.consensus;
    let seed = loaded.spec.seed;
    let graph = match c.graph.as_ref().or(loaded.spec.baseline.as_ref().map(|b| &b.graph)) {
        Some(g) => loaded.graph(g, c.nodes)?,
        None => erdos_renyi_connected(c.nodes, 0.1, &mut rng::stream(seed))?,
    };
    let w = WeightMatrix::metropolis(&graph)?;
    let mut r = rng::stream(rng::derive_seed(seed, 1));
    let values = DMatrix::from_fn(c.nodes, 1, |_, _| r.sample::<f64, _>(StandardNormal));
    let mean = node_mean(&values);
    let (_, needed) = run_average_consensus(&w, &values, c.eps, StopRule::OracleMean)?;
    let bound = rounds_for_accuracy(&w, c.eps, disagreement(&values))?;

    let mut avg_err = Vec::with_capacity(c.rounds + 1);
    let mut x = values.clone();
    avg_err.push(max_deviation(&x, &mean));
    for _ in 0..c.rounds {
        x = w.mix(&x);
        avg_err.push(max_deviation(&x, &mean));
    }

    let digraph = loaded.directed_graph()?;
    let dvals = DMatrix::from_fn(c.directed_nodes, 1, |_, _| r.sample::<f64, _>(StandardNormal));
    let dmean = node_mean(&dvals);
    let mut ps = PushSumState::new(&dvals);
    let mut push_err = vec![max_deviation(&ps.estimates(), &dmean)];
    for _ in 0..c.rounds {
        ps.step(&digraph);
        push_err.push(max_deviation(&ps.estimates(), &dmean));
    }
    let fit_window: Vec<(f64, f64)> = push_err
        .iter()
        .enumerate()
        .skip(c.rounds / 10)
        .filter(|(_, e)| **e > 1e-12)
        .map(|(i, e)| (i as f64, e.ln()))
        .collect();
    let (fx, fy): (Vec<f64>, Vec<f64>) = fit_window.into_iter().unzip();
    let rate = (fx.len() >= 3).then(|| linear_fit(&fx, &fy));

    println!("average consensus: lambda2 {}, {needed} rounds to eps {} (bound {bound})", num(w.lambda2()), num(c.eps));
    if let Some(f) = rate {
        println!("push-sum: geometric rate {} per round (R^2 {})", num(f.slope.exp()), num(f.r_squared));
    }
    let chart = LineChart {
        title: "Consensus error per round".into(),
        x_label: "round".into(),
        y_label: "max_abs_error".into(),
        note: format!(
            "average consensus on {} nodes (Metropolis weights), push-sum on {} nodes (directed)",
            c.nodes, c.directed_nodes
        ),
        log_y: true,
        series: vec![
            Series {
                name: "average consensus".into(),
                points: avg_err.iter().enumerate().map(|(i, e)| (i as f64, *e)).collect(),
            },
            Series { name: "push-sum".into(), points: push_err.iter().enumerate().map(|(i, e)| (i as f64, *e)).collect() },
        ],
        ..Default::default()
    };
    out.write_chart("consensus", &chart)?;
    let mut notes = BTreeMap::new();
    notes.insert("lambda2".into(), num(w.lambda2()));
    notes.insert("rounds_to_eps".into(), needed.to_string());
    notes.insert("rounds_bound".into(), bound.to_string());
    if let Some(f) = rate {
        notes.insert("push_sum_rate".into(), num(f.slope.exp()));
        notes.insert("push_sum_fit_r_squared".into(), num(f.r_squared));
    }
    Ok(notes)
}
