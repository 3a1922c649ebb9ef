//! Command-line entry point: built-in convergence studies and user-defined
//! experiments from config files.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Config;

#[derive(Parser)]
#[command(
    name = "avoc",
    version,
    about = "Averaged optimal control: value-function convergence studies under dynamics mixtures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (overrides the config's [output] dir)
    #[arg(long, global = true)]
    out: Option<String>,

    /// Solver RNG seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Horizon length T - s
    #[arg(long, global = true)]
    horizon: Option<f64>,

    /// Largest schedule index N
    #[arg(long = "n-max", global = true)]
    n_max: Option<u32>,

    /// Value-grid points per state dimension
    #[arg(long, global = true)]
    grid: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Scalar-family study: five `lambda x + sin x + u` candidates
    Test1,
    /// Planar-family study: three affine candidates with periodic control
    Test2,
    /// Run a study described by a TOML config file
    Run {
        /// Path to the config file
        config: PathBuf,
    },
}

impl Cli {
    fn apply_overrides(&self, config: &mut Config) -> Result<(), String> {
        if let Some(out) = &self.out {
            config.output.dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.solver.seed = seed;
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(format!("--horizon must be a positive real, got {h}"));
            }
            config.problem.t_end = config.problem.t_start + h;
        }
        if let Some(n) = self.n_max {
            config.schedule.n_max = n;
            config.schedule.n_min = config.schedule.n_min.min(n);
        }
        if let Some(g) = self.grid {
            config.grid.counts = vec![g; config.grid.counts.len()];
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be >= 1");
            return ExitCode::from(run::EXIT_CONFIG as u8);
        }
        // Ignore the error if a pool already exists; it only happens in-process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }

    let mut config = match &cli.command {
        Command::Test1 => Config::test1(),
        Command::Test2 => Config::test2(),
        Command::Run { config: path } => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", path.display());
                    return ExitCode::from(run::EXIT_CONFIG as u8);
                }
            };
            match Config::from_toml(&text) {
                Ok(c) => c,
                Err(msg) => {
                    eprintln!("error: {}: {msg}", path.display());
                    return ExitCode::from(run::EXIT_CONFIG as u8);
                }
            }
        }
    };

    if let Err(msg) = cli.apply_overrides(&mut config) {
        eprintln!("error: {msg}");
        return ExitCode::from(run::EXIT_CONFIG as u8);
    }

    ExitCode::from(run::execute(&config) as u8)
}
