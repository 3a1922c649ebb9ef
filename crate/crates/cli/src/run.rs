//! Study orchestration: validate, run, write artifacts, print the report.

use std::fs;
use std::path::Path;

use avoc::analysis::{convergence_study, ConvergenceReport};
use avoc::fields::check_field;
use avoc::measures::Mixture;
use avoc::numfmt;
use avoc::sim::{check_problem, integrate_mixture, write_control_csv, write_trajectory_csv};
use avoc::solve::solve;
use avoc::Error;

use crate::config::Config;

/// Process exit codes, as documented in the README.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_BOUND_VIOLATION: i32 = 2;
pub const EXIT_SOLVER_FAILURE: i32 = 3;

fn classify_runtime_error(e: &Error) -> i32 {
    match e {
        Error::Diverged { .. } | Error::AllRestartsDiverged => EXIT_SOLVER_FAILURE,
        _ => EXIT_CONFIG,
    }
}

/// Runs one configured study end to end. Prints the report table to stdout,
/// diagnostics to stderr, and returns the process exit code.
pub fn execute(config: &Config) -> i32 {
    let spec = match config.to_spec() {
        Ok(s) => s,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };

    // Sampled validation of the atoms and costs against the distance box
    // before any heavy compute: finite values, declared Lipschitz constants
    // honored.
    for atom in &spec.atoms {
        if let Err(e) = check_field(atom, &spec.distance_box) {
            eprintln!("error: [dynamics] {e}");
            return EXIT_CONFIG;
        }
    }
    if let Err(e) = check_problem(&spec.problem, &spec.distance_box) {
        eprintln!("error: [problem] {e}");
        return EXIT_CONFIG;
    }

    eprintln!(
        "running '{}': {} atoms, N = {}..{}, {} grid points, {} restarts",
        spec.name,
        spec.atoms.len(),
        spec.n_min,
        spec.n_max,
        spec.grid.len(),
        spec.solve_options.restarts
    );
    let report = match convergence_study(&spec) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: study failed: {e}");
            return classify_runtime_error(&e);
        }
    };

    print_table(&report);

    let out_dir = Path::new(&config.output.dir);
    if let Err(e) = fs::create_dir_all(out_dir) {
        eprintln!("error: cannot create output directory {}: {e}", out_dir.display());
        return EXIT_CONFIG;
    }

    let report_path = out_dir.join("report.csv");
    let mut buf = Vec::new();
    if let Err(e) = report.write_csv(&mut buf) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    if let Err(e) = fs::write(&report_path, &buf) {
        eprintln!("error: cannot write {}: {e}", report_path.display());
        return EXIT_CONFIG;
    }
    eprintln!("wrote {}", report_path.display());

    let config_path = out_dir.join("config.toml");
    if let Err(e) = fs::write(&config_path, config.to_toml()) {
        eprintln!("error: cannot write {}: {e}", config_path.display());
        return EXIT_CONFIG;
    }
    eprintln!("wrote {}", config_path.display());

    if let (Some(x0), Some(weights)) = (&spec.trajectory_x0, &spec.trajectory_weights) {
        match write_trajectory_artifacts(&spec, x0, weights, out_dir) {
            Ok(value) => {
                eprintln!(
                    "wrote {} and {} (value {} from x0 {:?})",
                    out_dir.join("trajectory.csv").display(),
                    out_dir.join("control.csv").display(),
                    numfmt::sig(value, 6),
                    x0
                );
            }
            Err(e) => {
                eprintln!("error: trajectory artifact failed: {e}");
                return classify_runtime_error(&e);
            }
        }
    }

    if report.any_solver_failure() {
        eprintln!("solver failure: at least one study row diverged");
        return EXIT_SOLVER_FAILURE;
    }
    if let Some(c) = report.constant {
        if report.any_bound_violation() {
            eprintln!("bound check FAILED: some rows exceed C * W1 (C = {})", numfmt::sig(c, 6));
            return EXIT_BOUND_VIOLATION;
        }
        eprintln!(
            "bound check passed: every row satisfies error <= C * W1 + slack (C = {})",
            numfmt::sig(c, 6)
        );
    }
    EXIT_OK
}

/// Solves the artifact instance and writes the optimal multi-trajectory and
/// control as CSV; returns the optimal value.
fn write_trajectory_artifacts(
    spec: &avoc::analysis::ExperimentSpec,
    x0: &[f64],
    weights: &[f64],
    out_dir: &Path,
) -> avoc::Result<f64> {
    let mix = Mixture::new(spec.atoms.clone(), weights.to_vec())?;
    let result = solve(&spec.problem, &mix, x0, &spec.solve_options)?;
    let trajectories = integrate_mixture(&spec.problem, &mix, &result.control, x0)?;

    let mut traj_buf = Vec::new();
    write_trajectory_csv(&mut traj_buf, &trajectories)?;
    fs::write(out_dir.join("trajectory.csv"), &traj_buf)?;

    let mut ctrl_buf = Vec::new();
    write_control_csv(&mut ctrl_buf, &result.control)?;
    fs::write(out_dir.join("control.csv"), &ctrl_buf)?;
    Ok(result.value)
}

fn print_table(report: &ConvergenceReport) {
    let fmt_opt = |v: Option<f64>| v.map(|x| numfmt::sig(x, 6)).unwrap_or_else(|| "-".into());
    println!(
        "{:>3} {:>10} {:>12} {:>12} {:>9} {:>12} {:>9}",
        "N", "alpha1", "w1", "error", "order", "bound_rhs", "bound_ok"
    );
    for r in &report.rows {
        let bound_ok = match r.bound_ok {
            Some(true) => "ok",
            Some(false) => "VIOLATED",
            None => "-",
        };
        let error = if r.solver_ok {
            fmt_opt(r.error)
        } else {
            "failed".into()
        };
        println!(
            "{:>3} {:>10} {:>12} {:>12} {:>9} {:>12} {:>9}",
            r.n,
            numfmt::sig(r.alpha_true, 6),
            numfmt::sig(r.w1, 6),
            error,
            fmt_opt(r.order),
            fmt_opt(r.bound_rhs),
            bound_ok
        );
    }
}
