use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use helmsweep::experiment::{
    export_slice, run, sweep_study, ExperimentConfig, ExperimentError, Plane, VaryGrid,
};
use helmsweep::media::hsw;

#[derive(Parser)]
#[command(name = "helmsweep", version, about = "Sweeping-preconditioned 3D Helmholtz solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configured problem.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Directory for the report row, solution and slices.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter study, one CSV row per grid point.
    Study {
        #[arg(long)]
        config: PathBuf,
        /// Grid such as `omega_over_2pi=2,4;preconditioner=recursive,nonrecursive`.
        #[arg(long, allow_hyphen_values = true)]
        vary: String,
        /// Report file; defaults to `study.csv` in the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cut a plane out of a stored 3D field.
    Slice {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        plane: String,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default configuration.
    Preset,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;

fn fail(err: &ExperimentError) -> ExitCode {
    eprintln!("error: {err}");
    if err.is_config_or_io() {
        ExitCode::from(EXIT_CONFIG)
    } else {
        ExitCode::from(EXIT_NOT_CONVERGED)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { config, out } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(cfg) => cfg,
                Err(e) => return fail(&e),
            };
            if out.is_some() {
                cfg.output_dir = out;
            }
            match run(&cfg) {
                Ok(outcome) => {
                    let r = &outcome.report;
                    println!(
                        "n={} N={} preconditioner={} T_setup={:.3}s N_iter={} T_solve={:.3}s residual={:.3e} memory={}B",
                        outcome.row.n,
                        outcome.row.unknowns,
                        cfg.preconditioner,
                        r.setup_seconds,
                        r.iterations,
                        r.solve_seconds,
                        r.final_residual,
                        r.peak_memory_bytes
                    );
                    if r.converged {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("GMRES did not reach tol {}", cfg.gmres.tol);
                        ExitCode::from(EXIT_NOT_CONVERGED)
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Study { config, vary, out } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(cfg) => cfg,
                Err(e) => return fail(&e),
            };
            let grid: VaryGrid = match vary.parse() {
                Ok(g) => g,
                Err(e) => return fail(&e),
            };
            let path = out.unwrap_or_else(|| {
                cfg.output_dir
                    .clone()
                    .unwrap_or_else(|| PathBuf::from("."))
                    .join("study.csv")
            });
            match sweep_study(&cfg, &grid, &path) {
                Ok(summary) => {
                    for row in &summary.rows {
                        println!(
                            "{}: N_iter={} T_setup={:.3}s T_solve={:.3}s {}",
                            row.key, row.iterations, row.setup_seconds, row.solve_seconds, row.status
                        );
                    }
                    println!(
                        "{} rows written, {} skipped, {} failed -> {}",
                        summary.rows.len(),
                        summary.skipped,
                        summary.failed,
                        path.display()
                    );
                    if summary.rows.iter().all(|r| r.converged) {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_NOT_CONVERGED)
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Slice {
            input,
            plane,
            index,
            out,
        } => {
            let result = (|| -> Result<(), ExperimentError> {
                let plane: Plane = plane.parse()?;
                let field = hsw::load(&input)?;
                export_slice(&field.to_complex(), field.dims(), plane, index, &out)
            })();
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&e),
            }
        }
        Command::Preset => {
            print!("{}", ExperimentConfig::paper_replica().to_text());
            ExitCode::SUCCESS
        }
    }
}
