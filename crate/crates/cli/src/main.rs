//! `barons`: run experiments, execute invariant suites, print schedules.
//!
//! Exit codes: 0 success, 1 runtime failure or failed check, 2 bad
//! configuration or flags, 3 divergence.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use barons::barons::{compute_params, BaronsParams, Mode, NormBound};
use barons::barrier::BarrierParams;
use barons::checks::{run_suite, SUITES};
use barons::harness::{run_matrix, write_csv, RunConfig};
use barons::Error;
use clap::{Args, Parser, Subcommand};
use toml::Value;

#[derive(Parser)]
#[command(name = "barons", version, about = "Barrier-regularized online Newton steps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more experiment configs and write their traces.
    Run(RunArgs),
    /// Run a randomized inequality suite.
    Check(CheckArgs),
    /// Print the step size, tolerance and derived constants of a schedule.
    Params(ParamsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; repeat for a run matrix.
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    /// Worker threads for a run matrix (0: one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Override any key, e.g. `--set run.T=4000`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long = "T")]
    horizon: Option<i64>,
    #[arg(long)]
    seed: Option<i64>,
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    monitor_every: Option<i64>,
    /// Polytope text file to use as the domain.
    #[arg(long)]
    domain_file: Option<String>,
}

#[derive(Args)]
struct CheckArgs {
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
}

#[derive(Args)]
struct ParamsArgs {
    /// Local-norm gradient bound b.
    #[arg(long = "local-b", conflicts_with_all = ["euclidean_g", "radius"])]
    local_b: Option<f64>,
    /// Euclidean gradient bound G.
    #[arg(long = "euclidean-G", requires = "radius")]
    euclidean_g: Option<f64>,
    /// Radius of the ball containing the domain.
    #[arg(long = "R", requires = "euclidean_g")]
    radius: Option<f64>,
    /// Barrier parameter ν.
    #[arg(long)]
    nu: f64,
    /// Self-concordance constant.
    #[arg(long = "M", default_value_t = 1.0)]
    m: f64,
    /// Horizon.
    #[arg(long = "T")]
    horizon: usize,
    /// 1/c for the comparator shrink (default: T).
    #[arg(long = "c-inv")]
    c_inv: Option<f64>,
    #[arg(long)]
    strict: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_)
        | Error::Parse(_)
        | Error::InvalidBounds(_)
        | Error::PreconditionViolated(_)
        | Error::ZeroRow(_)
        | Error::InfeasibleWitness { .. } => 2,
        Error::DivergenceDetected { .. } => 3,
        _ => 1,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e))
}

fn load_config(path: &Path, args: &RunArgs) -> Result<RunConfig, Error> {
    let mut table = config::read_table(path)?;
    config::resolve_domain_path(&mut table, path.parent().unwrap_or(Path::new(".")));
    config::apply_env(&mut table)?;
    for raw in &args.overrides {
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set {raw:?}: expected SECTION.KEY=VALUE")))?;
        config::set_key(&mut table, key.trim(), config::parse_value(value.trim()))?;
    }
    let flags = [
        ("run.T", args.horizon.map(Value::Integer)),
        ("run.seed", args.seed.map(Value::Integer)),
        ("run.output", args.output.clone().map(Value::String)),
        ("algorithm.mode", args.mode.clone().map(Value::String)),
        ("algorithm.monitor_every", args.monitor_every.map(Value::Integer)),
        ("domain.path", args.domain_file.clone().map(Value::String)),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            config::set_key(&mut table, key, v)?;
        }
    }
    if args.domain_file.is_some() {
        config::set_key(&mut table, "domain.kind", Value::String("file".into()))?;
    }
    config::into_config(table, &path.display().to_string())
}

fn default_output(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    format!("{stem}.csv")
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let mut cfgs = Vec::new();
    for path in &args.configs {
        match load_config(path, &args) {
            Ok(mut cfg) => {
                cfg.run.output.get_or_insert_with(|| default_output(path));
                cfgs.push(cfg);
            }
            Err(e) => return fail(&e),
        }
    }
    let many = cfgs.len() > 1;
    let mut worst: Option<Error> = None;
    for ((path, cfg), result) in args.configs.iter().zip(&cfgs).zip(run_matrix(&cfgs, args.jobs)) {
        let prefix = if many { format!("config={} ", path.display()) } else { String::new() };
        let out = match result {
            Ok(out) => out,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                if worst.as_ref().is_none_or(|w| exit_code(&e) > exit_code(w)) {
                    worst = Some(e);
                }
                continue;
            }
        };
        let dest = cfg.run.output.as_deref().expect("set above");
        if let Err(e) = write_csv(&out.trace, dest) {
            eprintln!("error: {dest}: {e}");
            worst.get_or_insert(e);
            continue;
        }
        for (k, v) in &out.trace.meta {
            if k == "local_norm_warning" {
                eprintln!("warning: {}{k}: {v}", prefix);
            }
        }
        println!(
            "{prefix}final_regret={} landmark_updates={} max_local_norm={}",
            out.summary.final_regret, out.summary.landmark_updates, out.summary.max_local_norm
        );
    }
    match worst {
        None => ExitCode::SUCCESS,
        Some(e) => ExitCode::from(exit_code(&e)),
    }
}

fn cmd_check(args: CheckArgs) -> ExitCode {
    let report = match run_suite(&args.suite, args.seed, args.trials) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    println!("suite {} (seed {}): {}/{} trials passed", report.name, report.seed, report.passed, report.trials);
    for ineq in &report.inequalities {
        println!("  {}: {}/{}", ineq.label, ineq.passed, ineq.total);
    }
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        if let Some(cx) = &report.first_counterexample {
            println!("first counterexample:\n{cx}");
        }
        ExitCode::from(1)
    }
}

fn print_params(p: &BaronsParams<f64>) {
    println!("eta={}", p.eta);
    println!("eps={}", p.eps);
    println!("m_newton={}", p.m_newton);
    println!("landmark_threshold={}", p.landmark_threshold);
    println!("lambda_target={}", p.lambda_target);
    println!("guard_threshold={}", p.guard_threshold());
    println!("local_bound={}", p.local_bound);
}

fn cmd_params(args: ParamsArgs) -> ExitCode {
    let bound = match (args.local_b, args.euclidean_g, args.radius) {
        (Some(b), None, None) => NormBound::LocalNorm { b },
        (None, Some(g), Some(r)) => NormBound::Euclidean { g, r },
        _ => {
            eprintln!("error: give either --local-b or both --euclidean-G and --R");
            return ExitCode::from(2);
        }
    };
    let c = match args.c_inv {
        Some(ci) if ci > 1.0 => 1.0 / ci,
        Some(ci) => {
            eprintln!("error: --c-inv must exceed 1, got {ci}");
            return ExitCode::from(2);
        }
        None => 1.0 / args.horizon.max(2) as f64,
    };
    let barrier = BarrierParams { m: args.m, nu: args.nu };
    let params = match compute_params(barrier, bound, args.horizon, c, Mode::Practical) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    print_params(&params);
    if args.strict {
        if let Err(e) = BaronsParams::from_schedule(params.eta, params.eps, args.m, params.local_bound, Mode::Strict) {
            println!("preconditions=violated");
            println!("PreconditionViolated: {}", e.root().to_string().trim_start_matches("precondition violated: "));
            return ExitCode::from(2);
        }
        println!("preconditions=satisfied");
    } else if params.warnings.is_empty() {
        println!("preconditions=satisfied");
    } else {
        println!("preconditions=violated (practical mode: {})", params.warnings.join("; "));
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Check(args) => {
            if !SUITES.contains(&args.suite.as_str()) {
                eprintln!("error: unknown suite {:?}; known: {}", args.suite, SUITES.join(", "));
                return ExitCode::from(2);
            }
            cmd_check(args)
        }
        Command::Params(args) => cmd_params(args),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_root() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::PreconditionViolated("x".into())), 2);
        let diverged = Error::DivergenceDetected { round: 4, decrement: 0.3 }.at_round(4);
        assert_eq!(exit_code(&diverged), 3);
        assert_eq!(exit_code(&Error::NonPositiveWealth(0.0).at_round(2)), 1);
    }
}
