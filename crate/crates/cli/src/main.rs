mod error;
mod experiment;
mod output;
mod spec;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliError, CliResult};
use crate::experiment::Context;
use crate::output::Artifacts;
use crate::spec::load_spec;

/// Parallel TD(0) with one-shot averaging: experiments, oracles and bound checks.
#[derive(Debug, Parser)]
#[command(name = "oneshot-td", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment spec (TOML).
    #[arg(long, global = true)]
    spec: Option<PathBuf>,

    /// Output directory; overrides the spec's `out`, default `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed; overrides the spec's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    replications: Option<usize>,

    /// Worker threads for replications and agents (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Reject schedules and sampling modes outside the theorem's premises.
    #[arg(long, global = true)]
    strict_compliance: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// One-shot swarm (and baseline, if configured) with traces, charts and bound table.
    Run,
    /// Replicated sweep over `agents` or `alpha`.
    Sweep,
    /// Print the exact TD quantities for the spec's instance.
    Oracle,
    /// Average consensus and push-sum convergence.
    ConsensusDemo,
    /// Compare replicated errors with the theorem right-hand sides; exits 1 on a violation.
    CheckBounds,
}

fn execute(cli: &Cli) -> CliResult<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::validation(format!("thread pool: {e}")))?;
    }
    let path = cli.spec.as_ref().ok_or_else(|| CliError::validation("--spec is required"))?;
    let mut loaded = load_spec(path)?;
    if let Some(seed) = cli.seed {
        loaded.spec.seed = seed;
    }
    if let Some(r) = cli.replications {
        loaded.spec.replications = Some(r);
    }
    loaded.spec.validate()?;
    let ctx = Context { loaded, strict: cli.strict_compliance, replications: cli.replications };

    if let Command::Oracle = cli.command {
        print!("{}", experiment::oracle_report(&ctx)?);
        return Ok(true);
    }
    let dir = cli.out.clone().or_else(|| ctx.loaded.spec.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let mut out = Artifacts::create(&dir)?;
    let (name, notes, ok) = match cli.command {
        Command::Run => ("run", experiment::run(&ctx, &mut out)?, true),
        Command::Sweep => ("sweep", experiment::sweep(&ctx, &mut out)?, true),
        Command::ConsensusDemo => ("consensus-demo", experiment::consensus_demo(&ctx, &mut out)?, true),
        Command::CheckBounds => {
            let (notes, ok) = experiment::check_bounds(&ctx, &mut out)?;
            ("check-bounds", notes, ok)
        }
        Command::Oracle => unreachable!(),
    };
    out.finish(name, &ctx.loaded.spec, &notes)?;
    println!("artifacts written to {}", dir.display());
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error[bound-violation]: at least one bound comparison failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category().as_str());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
