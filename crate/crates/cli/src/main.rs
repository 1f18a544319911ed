use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tangent_point::verify::run_suite;
use tangent_point_cli::config::{ExperimentConfig, Overrides};
use tangent_point_cli::sweep::{sweep, termination_label};
use tangent_point_cli::{error_exit_code, run_experiment};

/// Tangent-point gradient-flow experiments.
///
/// Exit codes: 0 converged / all checks passed, 1 I/O or other failure, 2 configuration,
/// 3 stagnation, 4 self-intersection, 5 linear algebra, 6 step limit reached.
/// Set TPFLOW_THREADS to fix the worker thread count.
#[derive(Parser)]
#[command(name = "tpflow", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override outputs.snapshot_stride.
    #[arg(long, global = true)]
    snapshot_stride: Option<usize>,
    /// Do not write SVG renders.
    #[arg(long, global = true)]
    no_render: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Flow from the configured initial curve and write trace, snapshots and report.
    Run { config: PathBuf },
    /// Run the property and oracle checks at the configured (s, N) without flowing.
    Verify { config: PathBuf },
    /// Run every *.json config in a directory concurrently.
    Sweep { dir: PathBuf },
}

fn fail(code: i32, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("tpflow: {message}");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Ok(value) = std::env::var("TPFLOW_THREADS") {
        match value.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    return fail(1, format!("cannot configure {n} threads: {e}"));
                }
            }
            _ => return fail(2, format!("TPFLOW_THREADS must be a positive integer, got {value:?}")),
        }
    }
    let overrides = Overrides {
        snapshot_stride: cli.snapshot_stride,
        no_render: cli.no_render,
    };
    match cli.command {
        Command::Run { config } => {
            let mut config = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(error_exit_code(&e), e),
            };
            overrides.apply(&mut config);
            match run_experiment(&config) {
                Ok(report) => {
                    println!(
                        "{} after {} steps: E = {:.12}, |g| = {:.3e}, distortion = {:.8}",
                        termination_label(&report.termination),
                        report.steps,
                        report.final_state.energy,
                        report.final_state.grad_norm_hs,
                        report.final_state.distortion
                    );
                    match &report.fit {
                        Some(f) => println!("fit: theta = {:.4}, Z = {:.4e}, r2 = {:.6}", f.theta, f.z, f.r2),
                        None => println!("fit: {}", report.fit_error.as_deref().unwrap_or("unavailable")),
                    }
                    if report.exit_code != 0 {
                        return fail(report.exit_code, format!("run ended with {}", termination_label(&report.termination)));
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(error_exit_code(&e), e),
            }
        }
        Command::Verify { config } => {
            let config = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(error_exit_code(&e), e),
            };
            match run_suite(&config.verify_options()) {
                Ok(report) => {
                    print!("{}", report.table());
                    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                    if failed.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        fail(1, format!("{} check(s) failed: {}", failed.len(), failed.join(", ")))
                    }
                }
                Err(e) => fail(error_exit_code(&e), e),
            }
        }
        Command::Sweep { dir } => match sweep(&dir, &overrides) {
            Ok(entries) => {
                let mut worst = 0;
                for e in &entries {
                    println!("{:>2}  {}  {}", e.exit_code, e.config.display(), e.message);
                    worst = worst.max(e.exit_code);
                }
                if worst == 0 {
                    ExitCode::SUCCESS
                } else {
                    fail(worst, "at least one experiment did not converge")
                }
            }
            Err(e) => fail(error_exit_code(&e), e),
        },
    }
}
