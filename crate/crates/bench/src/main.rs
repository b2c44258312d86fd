use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mqs_bench::audit::{run_audit, AUDIT_FILE};
use mqs_bench::compare::compare_files;
use mqs_bench::model::{build_system, Problem};
use mqs_bench::runner::run;
use mqs_bench::sweep::{run_sweep, SWEEP_FILE};
use mqs_bench::{BenchError, Result, RunConfig};
use mqs_core::problem::{export_system, SystemFiles};

#[derive(Parser)]
#[command(name = "mqs-bench", version, about = "Explicit Schur eddy-current solver benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the `seed` key of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver and write trajectory, step report and metadata.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the tolerance grid plus both baselines and write sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare two trajectory CSVs; exits 1 when the deviation exceeds --tol.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
    },
    /// Write the configured model as Matrix Market files.
    ExportModel {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run with CSPE cache checks and write audit.txt; exits 1 on a failed check.
    Audit {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
        cfg.stepper.seed = seed;
    }
    Ok(cfg)
}

fn create_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| BenchError::io(out, e))
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| BenchError::io(&path, e))
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config, cli.seed)?;
            run(&cfg, &cli.out)?;
        }
        Command::Sweep { config } => {
            let cfg = load(config, cli.seed)?;
            let problem = Problem::build(&cfg)?;
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(n) = cli.threads {
                pool = pool.num_threads(n);
            }
            let pool = pool
                .build()
                .map_err(|e| BenchError::Usage(format!("cannot build thread pool: {e}")))?;
            let report = pool.install(|| run_sweep(&cfg, &problem))?;
            create_out(&cli.out)?;
            report.write_csv(&cli.out.join(SWEEP_FILE))?;
            let failed = report.rows.iter().filter(|r| r.outcome.is_err()).count();
            if failed > 0 {
                return Err(BenchError::CheckFailed(format!(
                    "{failed} of {} sweep runs failed",
                    report.rows.len()
                )));
            }
        }
        Command::Compare { a, b, tol } => {
            let report = compare_files(a, b, *tol)?;
            print!("{}", report.render());
            if !report.passes() {
                return Err(BenchError::CheckFailed(format!(
                    "max deviation {:e} exceeds {tol:e}",
                    report.max_deviation()
                )));
            }
        }
        Command::ExportModel { config } => {
            let cfg = load(config, cli.seed)?;
            let sys = build_system(&cfg)?;
            create_out(&cli.out)?;
            export_system(&sys, &SystemFiles::in_dir(&cli.out))?;
        }
        Command::Audit { config } => {
            let cfg = load(config, cli.seed)?;
            let problem = Problem::build(&cfg)?;
            let report = run_audit(&cfg, &problem)?;
            create_out(&cli.out)?;
            let text = report.render();
            write(cli.out.join(AUDIT_FILE), &text)?;
            if !cli.quiet {
                print!("{text}");
            }
            if !report.passes() {
                return Err(BenchError::CheckFailed("CSPE cache audit failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
