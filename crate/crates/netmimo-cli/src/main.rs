//! Command-line front end for the netmimo simulator.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 when a
//! solve failed to converge (results are still written).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netmimo::bd::effective_channels;
use netmimo::channel::rayleigh_channels;
use netmimo::dual::{gradient_check, solve, SolveOptions};
use netmimo::linalg::CMat;
use netmimo::sim::{emit_outputs, run_experiment, ConstraintKind, ExperimentConfig, SchedulerKind};
use netmimo::{Error, Result};

#[derive(Parser)]
#[command(
    name = "netmimo",
    version,
    about = "Coordinated multi-cell MIMO downlink precoding simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment from a config file and write CSV results.
    Run(RunArgs),
    /// Solve one random instance and print the solver report.
    SolveOne(SolveOneArgs),
    /// Compare the analytic dual gradient against finite differences.
    GradientCheck(GradientCheckArgs),
    /// Parse and validate a config file without running anything.
    ValidateConfig(ValidateConfigArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment description file (TOML).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override master_seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Override the number of drops.
    #[arg(long, value_name = "N")]
    drops: Option<usize>,
    /// Output directory; beats NETMIMO_OUT and the config's output_dir.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override worker threads (0 sizes the pool automatically).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Override solver_max_iter.
    #[arg(long, value_name = "N")]
    max_iter: Option<usize>,
    /// Override solver_tol_kkt.
    #[arg(long, value_name = "X")]
    tol_kkt: Option<f64>,
    /// Override solver_tol_gap.
    #[arg(long, value_name = "X")]
    tol_gap: Option<f64>,
}

#[derive(Args)]
struct SolveOneArgs {
    /// Seed for the channel draw.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Coordinated cells: 1, 3 or 7.
    #[arg(long, default_value_t = 1)]
    cluster_size: usize,
    /// Transmit antennas per base station.
    #[arg(long, default_value_t = 4)]
    n_t: usize,
    /// Receive antennas per user.
    #[arg(long, default_value_t = 2)]
    n_r: usize,
    /// Scheduled users; defaults to the zero-forcing maximum.
    #[arg(long, value_name = "K")]
    users: Option<usize>,
    /// Power constraint: per-antenna, per-bs or sum.
    #[arg(long, default_value = "per-antenna", value_parser = parse_kind)]
    constraint: ConstraintKind,
    /// Noise-normalized budget per base station.
    #[arg(long, default_value_t = 1.0)]
    bs_power: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol_kkt: f64,
    #[arg(long, default_value_t = 1e-5)]
    tol_gap: f64,
    /// Print the per-iteration trace.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct GradientCheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Random evaluation points per constraint kind.
    #[arg(long, default_value_t = 50)]
    points: usize,
}

#[derive(Args)]
struct ValidateConfigArgs {
    /// Experiment description file (TOML).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
}

fn parse_kind(text: &str) -> std::result::Result<ConstraintKind, String> {
    match text {
        "per-antenna" => Ok(ConstraintKind::PerAntenna),
        "per-bs" => Ok(ConstraintKind::PerBs),
        "sum" => Ok(ConstraintKind::Sum),
        other => Err(format!(
            "unknown constraint '{other}', expected per-antenna, per-bs or sum"
        )),
    }
}

fn kind_name(kind: ConstraintKind) -> &'static str {
    match kind {
        ConstraintKind::PerAntenna => "per-antenna",
        ConstraintKind::PerBs => "per-bs",
        ConstraintKind::Sum => "sum",
    }
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Io { .. } => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let ok = err.exit_code() == 0;
            let _ = err.print();
            return ExitCode::from(if ok { 0 } else { 1 });
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => run_cmd(args),
        Command::SolveOne(args) => solve_one_cmd(args),
        Command::GradientCheck(args) => gradient_check_cmd(args),
        Command::ValidateConfig(args) => validate_config_cmd(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_for(&err))
        }
    }
}

fn run_cmd(args: RunArgs) -> Result<ExitCode> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(drops) = args.drops {
        config.drops = drops;
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    }
    if let Some(n) = args.max_iter {
        config.solver_max_iter = n;
    }
    if let Some(x) = args.tol_kkt {
        config.solver_tol_kkt = x;
    }
    if let Some(x) = args.tol_gap {
        config.solver_tol_gap = x;
    }
    config.validate()?;
    let out_dir = args
        .out
        .or_else(|| std::env::var_os("NETMIMO_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&config.output_dir));

    let result = run_experiment(&config)?;
    emit_outputs(&result, &out_dir)?;

    println!(
        "wrote {} drops x {} schemes to {}",
        result.drops.len(),
        config.schemes.len(),
        out_dir.display()
    );
    let mut nonconverged = 0usize;
    for s in &result.summaries {
        nonconverged += s.nonconverged_drops;
        println!(
            "{:<20} mean {:>10.4} bits/s/Hz  std {:>9.4}  over {} drops",
            s.scheme.label(),
            s.mean_rate_bits,
            s.std_rate_bits,
            s.drops_used
        );
    }
    if nonconverged > 0 {
        eprintln!("{nonconverged} scheme-drop solves did not converge");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn solve_one_cmd(args: SolveOneArgs) -> Result<ExitCode> {
    if ![1, 3, 7].contains(&args.cluster_size) {
        return Err(Error::Config(format!(
            "cluster_size must be 1, 3 or 7, got {}",
            args.cluster_size
        )));
    }
    if args.n_t == 0 || args.n_r == 0 {
        return Err(Error::Config("n_t and n_r must be at least 1".into()));
    }
    let n_t_total = args.cluster_size * args.n_t;
    let k_max = n_t_total / args.n_r;
    if k_max == 0 {
        return Err(Error::Config(format!(
            "n_r = {} exceeds the {n_t_total} total transmit antennas",
            args.n_r
        )));
    }
    let users = args.users.unwrap_or(k_max);
    if users == 0 || users > k_max {
        return Err(Error::Config(format!(
            "users must lie in 1..={k_max} for these dimensions, got {users}"
        )));
    }
    if args.bs_power <= 0.0 {
        return Err(Error::Config("bs_power must be positive".into()));
    }

    let channels = rayleigh_channels(users, args.n_r, n_t_total, args.seed);
    let refs: Vec<&CMat> = channels.iter().collect();
    let decomp = effective_channels(&refs)?;
    let constraint = match args.constraint {
        ConstraintKind::PerAntenna => netmimo::power::PowerConstraint::uniform_per_antenna(
            args.cluster_size,
            args.n_t,
            args.bs_power,
        ),
        ConstraintKind::PerBs => {
            netmimo::power::PowerConstraint::per_bs(args.cluster_size, args.n_t, args.bs_power)
        }
        ConstraintKind::Sum => {
            netmimo::power::PowerConstraint::sum(args.cluster_size, args.bs_power)
        }
    };
    let options = SolveOptions {
        max_iter: args.max_iter,
        tol_kkt: args.tol_kkt,
        tol_gap: args.tol_gap,
        record_trace: args.trace,
    };
    let report = solve(&decomp, &constraint, &options)?;

    println!(
        "instance: B={} n_t={} n_r={} users={} constraint={} bs_power={}",
        args.cluster_size,
        args.n_t,
        args.n_r,
        users,
        kind_name(args.constraint),
        args.bs_power
    );
    if args.trace {
        println!("iteration  dual_bits      primal_bits    gap_bits      step       kkt_residual");
        for t in &report.trace {
            println!(
                "{:>9}  {:<13.8} {:<13.8} {:<12.4e} {:<10.3e} {:<12.4e}",
                t.iteration, t.dual_bits, t.primal_bits, t.gap_bits, t.step, t.kkt_residual
            );
        }
    }
    println!(
        "converged: {} after {} iterations",
        report.converged, report.iterations
    );
    println!("sum rate:   {:.6} bits/s/Hz", report.primal_bits());
    println!("dual value: {:.6} bits/s/Hz", report.dual_value_bits);
    println!(
        "duality gap: {:.4e} bits/s/Hz ({:.4e} relative)",
        report.gap_bits,
        report.relative_gap()
    );
    println!("kkt residual: {:.4e}", report.kkt_residual);
    let lambda: Vec<String> = report
        .multipliers
        .iter()
        .map(|l| format!("{l:.6}"))
        .collect();
    println!("multipliers: [{}]", lambda.join(", "));
    let usage = constraint.reduce(&report.precoders.antenna_powers);
    let budgets = constraint.reduced_budgets();
    let rows: Vec<String> = usage
        .iter()
        .zip(budgets.iter())
        .map(|(u, p)| format!("{u:.6}/{p:.6}"))
        .collect();
    println!("power usage: [{}]", rows.join(", "));

    if report.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(3))
    }
}

fn gradient_check_cmd(args: GradientCheckArgs) -> Result<ExitCode> {
    if args.points == 0 {
        return Err(Error::Config("points must be at least 1".into()));
    }
    let report = gradient_check(args.seed, args.points)?;
    println!(
        "max relative error {:.4e} over {} points (seed {})",
        report.max_rel_err, report.points, args.seed
    );
    if report.max_rel_err <= 1e-5 {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("gradient mismatch exceeds 1e-5");
        Ok(ExitCode::from(3))
    }
}

fn validate_config_cmd(args: ValidateConfigArgs) -> Result<ExitCode> {
    let config = ExperimentConfig::from_path(&args.config)?;
    println!("ok: {}", args.config.display());
    println!(
        "cluster_size={} n_t={} n_r={} users_per_cell={} -> at most {} users scheduled",
        config.cluster_size,
        config.n_t,
        config.n_r,
        config.users_per_cell,
        config.k_max()
    );
    let schemes: Vec<&str> = config.schemes.iter().map(|s| s.label()).collect();
    let scheduler = match config.scheduler {
        SchedulerKind::Msr => "msr",
        SchedulerKind::Pf => "pf",
    };
    println!(
        "schemes=[{}] scheduler={} drops={} seed={}",
        schemes.join(", "),
        scheduler,
        config.drops,
        config.master_seed
    );
    Ok(ExitCode::SUCCESS)
}
