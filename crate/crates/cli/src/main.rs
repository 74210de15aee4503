use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mvdlmc::exec::with_workers;
use mvdlmc_cli::commands::{
    adaptive_cmd, estimate_cmd, solve_control_cmd, table1_cmd, variance_reduction_cmd,
    verify_assumptions_cmd,
};
use mvdlmc_cli::config::{ControlMode, RunConfig};
use mvdlmc_cli::CliError;

/// Double loop Monte Carlo with importance sampling for McKean-Vlasov SDEs.
#[derive(Parser)]
#[command(name = "mvdlmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration, or a JSON result file with an embedded config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads, 0 for all cores (overrides the config).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Disable importance sampling.
    #[arg(long, global = true)]
    no_is: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the control offline and write it as an artifact.
    SolveControl,
    /// Fixed-parameter estimates over the configured inner sample sizes.
    Estimate,
    /// Adaptive estimate to a relative tolerance.
    Adaptive,
    /// Weak-error and variance studies over doubling discretizations.
    VerifyAssumptions,
    /// Crude against importance-sampled inner loop on one law.
    VarianceReduction,
    /// Adaptive runs over thresholds and tolerances.
    Table1,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if cli.no_is {
        cfg.control.mode = ControlMode::None;
    }
    cfg.validated()
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<(), CliError> {
    match cli.command {
        Command::SolveControl => {
            let r = solve_control_cmd(cfg)?;
            println!(
                "control {} ({} x {} grid), max |zeta| {:.4}, v(0, 0) {:.4e}, model {}",
                r.artifact.display(),
                r.n_space,
                r.n_time,
                r.max_abs_control,
                r.value_at_origin,
                &r.model_hash[..16]
            );
        }
        Command::Estimate => {
            let r = estimate_cmd(cfg)?;
            println!("{:>8} {:>12} {:>12} {:>12}", "M2", "estimate", "std error", "squared cv");
            for run in &r.runs {
                println!(
                    "{:>8} {:>12.5e} {:>12.5e} {:>12.5e}",
                    run.result.m2, run.result.estimate, run.result.standard_error, run.squared_cv
                );
            }
        }
        Command::Adaptive => {
            let r = adaptive_cmd(cfg)?;
            for l in &r.trace {
                println!(
                    "level {:>2}  P {:>5}  N {:>5}  M1 {:>6}  M2 {:>6}  bias {:.3e}  estimate {:.5e}",
                    l.level, l.particles, l.steps, l.m1, l.m2, l.bias, l.alpha_hat
                );
            }
            println!(
                "estimate {:.5e} +/- {:.2e}, work {:.3e} (total {:.3e})",
                r.result.estimate, r.result.standard_error, r.result.work_units, r.total_work_units
            );
        }
        Command::VerifyAssumptions => {
            let r = verify_assumptions_cmd(cfg)?;
            for s in &r.studies {
                println!("bias vs {:<3} slope {:+.3}", s.coupling.name(), s.slope);
            }
            println!("V1 vs P     slope {:+.3}", r.variance.slope_v1);
            println!("V2 vs P     slope {:+.3}", r.variance.slope_v2);
        }
        Command::VarianceReduction => {
            let r = variance_reduction_cmd(cfg)?;
            let c = &r.comparison;
            println!("crude mean {:.4e}, squared cv {:.4e}", c.crude_mean, c.crude_squared_cv);
            println!("IS    mean {:.4e}, squared cv {:.4e}", c.is_mean, c.is_squared_cv);
            println!("reduction factor {:.1}", r.reduction_factor);
        }
        Command::Table1 => {
            for r in table1_cmd(cfg)? {
                let method = if r.importance_sampling { "IS" } else { "crude" };
                match (&r.error, r.level, r.m1, r.m2, r.estimate) {
                    (None, Some(l), Some(m1), Some(m2), Some(e)) => println!(
                        "K {:<4} tol {:<5} {:<5} level {:>2}  M1 {:>6}  M2 {:>6}  estimate {:.4e}",
                        r.threshold, r.tol_r, method, l, m1, m2, e
                    ),
                    (err, ..) => println!(
                        "K {:<4} tol {:<5} {:<5} failed: {}",
                        r.threshold,
                        r.tol_r,
                        method,
                        err.as_deref().unwrap_or("unknown")
                    ),
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| with_workers(cfg.workers, || run(&cli, &cfg)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
