//! Sectioned key-value experiment configuration.
//!
//! The on-disk format is TOML with one table per concern: `[problem]`,
//! `[dynamics]`, `[schedule]`, `[grid]`, `[solver]`, `[box]`, `[bound]`,
//! optional `[trajectory]`, and `[output]`. Every run writes its effective
//! configuration back into the output directory, so any run can be
//! reproduced byte-for-byte with `avoc run <dir>/config.toml`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use avoc::analysis::{ExperimentSpec, StateGrid, WeightSchedule};
use avoc::experiments::{CostKind, DEFAULT_SEED};
use avoc::fields::{default_samples_per_dim, test1_family, test2_family, DomainBox, VectorField};
use avoc::sim::ControlProblem;
use avoc::solve::SolveOptions;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub name: String,
    pub problem: ProblemConfig,
    pub dynamics: DynamicsConfig,
    pub schedule: ScheduleConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(rename = "box")]
    pub sample_box: BoxConfig,
    #[serde(default)]
    pub bound: BoundConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectoryConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub state_dim: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub control_lo: Vec<f64>,
    pub control_hi: Vec<f64>,
    #[serde(default)]
    pub periodic: Option<Vec<bool>>,
    /// One of `quadratic_control`, `quadratic_state`.
    pub cost: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_h: Option<f64>,
    #[serde(default = "default_substeps")]
    pub rk_substeps: usize,
}

fn default_substeps() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    /// One of `affine`, `scalar_lambda_sin`, `builtin_test1`, `builtin_test2`.
    pub kind: String,
    /// 1-based index of the true dynamics in the atom list.
    #[serde(default = "default_true_atom")]
    pub true_atom: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<AffineAtomConfig>>,
}

fn default_true_atom() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineAtomConfig {
    /// State matrix, row-major nested rows.
    pub a: Vec<Vec<f64>>,
    /// Control input matrix (n rows, m columns).
    pub b: Vec<Vec<f64>>,
    /// Constant drift.
    pub c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// One of `halving_tail`, `dirac_true`.
    pub rule: String,
    pub n_min: u32,
    pub n_max: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub armijo_step: f64,
    pub armijo_shrink: f64,
    pub armijo_decrease: f64,
    pub seed: u64,
    pub intervals: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolveOptions::default();
        Self {
            restarts: o.restarts,
            max_iters: o.max_iters,
            grad_tol: o.grad_tol,
            armijo_step: o.armijo_step,
            armijo_shrink: o.armijo_shrink,
            armijo_decrease: o.armijo_decrease,
            seed: DEFAULT_SEED,
            intervals: o.intervals,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub state_lo: Vec<f64>,
    pub state_hi: Vec<f64>,
    pub control_lo: Vec<f64>,
    pub control_hi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_dim: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConfig {
    pub enabled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub x0: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl Config {
    /// Built-in scalar study.
    pub fn test1() -> Self {
        Self {
            name: "test1".into(),
            problem: ProblemConfig {
                state_dim: 1,
                t_start: 0.0,
                t_end: 1.0,
                control_lo: vec![-1.0],
                control_hi: vec![1.0],
                periodic: Some(vec![false]),
                cost: "quadratic_control".into(),
                lipschitz_l: None,
                lipschitz_h: None,
                rk_substeps: 1,
            },
            dynamics: DynamicsConfig {
                kind: "builtin_test1".into(),
                true_atom: 1,
                lambdas: None,
                atoms: None,
            },
            schedule: ScheduleConfig {
                rule: "halving_tail".into(),
                n_min: 1,
                n_max: 8,
            },
            grid: GridConfig {
                lo: vec![-1.0],
                hi: vec![1.0],
                counts: vec![21],
            },
            solver: SolverConfig {
                restarts: 5,
                ..SolverConfig::default()
            },
            sample_box: BoxConfig {
                state_lo: vec![-3.0],
                state_hi: vec![3.0],
                control_lo: vec![-1.0],
                control_hi: vec![1.0],
                samples_per_dim: Some(default_samples_per_dim(2)),
            },
            bound: BoundConfig { enabled: true },
            trajectory: Some(TrajectoryConfig {
                x0: vec![1.0],
                weights: vec![0.5, 0.125, 0.125, 0.125, 0.125],
            }),
            output: OutputConfig {
                dir: "out/test1".into(),
            },
        }
    }

    /// Built-in planar study.
    pub fn test2() -> Self {
        Self {
            name: "test2".into(),
            problem: ProblemConfig {
                state_dim: 2,
                t_start: 0.0,
                t_end: 1.0,
                control_lo: vec![0.0],
                control_hi: vec![TAU],
                periodic: Some(vec![true]),
                cost: "quadratic_state".into(),
                lipschitz_l: None,
                lipschitz_h: None,
                rk_substeps: 1,
            },
            dynamics: DynamicsConfig {
                kind: "builtin_test2".into(),
                true_atom: 1,
                lambdas: None,
                atoms: None,
            },
            schedule: ScheduleConfig {
                rule: "halving_tail".into(),
                n_min: 1,
                n_max: 6,
            },
            grid: GridConfig {
                lo: vec![-1.0, -1.0],
                hi: vec![1.0, 1.0],
                counts: vec![11, 11],
            },
            solver: SolverConfig {
                restarts: 9,
                ..SolverConfig::default()
            },
            sample_box: BoxConfig {
                state_lo: vec![-3.0, -3.0],
                state_hi: vec![3.0, 3.0],
                control_lo: vec![0.0],
                control_hi: vec![TAU],
                samples_per_dim: Some(default_samples_per_dim(3)),
            },
            bound: BoundConfig { enabled: false },
            trajectory: Some(TrajectoryConfig {
                x0: vec![-0.4, 0.3],
                weights: vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            }),
            output: OutputConfig {
                dir: "out/test2".into(),
            },
        }
    }

    /// Parses and semantically validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let config: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Cross-field validation with messages naming the offending section.
    pub fn validate(&self) -> Result<(), String> {
        let p = &self.problem;
        if !(p.t_start >= 0.0 && p.t_start < p.t_end) {
            return Err(format!(
                "[problem] horizon must satisfy 0 <= t_start < t_end, got t_start = {}, t_end = {}",
                p.t_start, p.t_end
            ));
        }
        if p.control_lo.len() != p.control_hi.len() || p.control_lo.is_empty() {
            return Err("[problem] control_lo and control_hi must be nonempty and of equal length".into());
        }
        if let Some(flags) = &p.periodic {
            if flags.len() != p.control_lo.len() {
                return Err("[problem] periodic flags must match the control dimension".into());
            }
        }
        match p.cost.as_str() {
            "quadratic_control" | "quadratic_state" => {}
            other => {
                return Err(format!(
                    "[problem] unknown cost '{other}' (expected quadratic_control or quadratic_state)"
                ))
            }
        }
        match self.dynamics.kind.as_str() {
            "builtin_test1" | "builtin_test2" => {}
            "scalar_lambda_sin" => {
                let lambdas = self
                    .dynamics
                    .lambdas
                    .as_ref()
                    .ok_or("[dynamics] scalar_lambda_sin needs a lambdas list")?;
                if lambdas.is_empty() {
                    return Err("[dynamics] lambdas must be nonempty".into());
                }
            }
            "affine" => {
                let atoms = self
                    .dynamics
                    .atoms
                    .as_ref()
                    .ok_or("[dynamics] affine needs an atoms list")?;
                if atoms.is_empty() {
                    return Err("[dynamics] atoms must be nonempty".into());
                }
            }
            other => {
                return Err(format!(
                    "[dynamics] unknown kind '{other}' (expected affine, scalar_lambda_sin, builtin_test1, builtin_test2)"
                ))
            }
        }
        if self.dynamics.true_atom == 0 {
            return Err("[dynamics] true_atom is 1-based and must be >= 1".into());
        }
        match self.schedule.rule.as_str() {
            "halving_tail" | "dirac_true" => {}
            other => {
                return Err(format!(
                    "[schedule] unknown rule '{other}' (expected halving_tail or dirac_true)"
                ))
            }
        }
        if self.schedule.n_min == 0 || self.schedule.n_min > self.schedule.n_max {
            return Err(format!(
                "[schedule] need 1 <= n_min <= n_max, got {}..{}",
                self.schedule.n_min, self.schedule.n_max
            ));
        }
        if let Some(t) = &self.trajectory {
            let sum: f64 = t.weights.iter().sum();
            if t.weights.iter().any(|&w| w < 0.0) {
                return Err("[trajectory] weights must be nonnegative".into());
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(format!(
                    "[trajectory] weights must sum to 1 (within 1e-6), got {sum}"
                ));
            }
        }
        Ok(())
    }

    fn build_atoms(&self) -> Result<Vec<VectorField>, String> {
        let n = self.problem.state_dim;
        let m = self.problem.control_lo.len();
        match self.dynamics.kind.as_str() {
            "builtin_test1" => Ok(test1_family()),
            "builtin_test2" => Ok(test2_family()),
            "scalar_lambda_sin" => Ok(self
                .dynamics
                .lambdas
                .as_ref()
                .expect("validated")
                .iter()
                .map(|&l| VectorField::scalar_lambda_sin(l))
                .collect()),
            "affine" => {
                let mut out = Vec::new();
                for (i, atom) in self.dynamics.atoms.as_ref().expect("validated").iter().enumerate() {
                    let a: Vec<f64> = atom.a.iter().flatten().copied().collect();
                    let b: Vec<f64> = atom.b.iter().flatten().copied().collect();
                    if atom.a.len() != n || a.len() != n * n {
                        return Err(format!("[dynamics] atom {} matrix a must be {n}x{n}", i + 1));
                    }
                    if atom.b.len() != n || b.len() != n * m {
                        return Err(format!("[dynamics] atom {} matrix b must be {n}x{m}", i + 1));
                    }
                    if atom.c.len() != n {
                        return Err(format!("[dynamics] atom {} offset c must have length {n}", i + 1));
                    }
                    let label = atom
                        .label
                        .clone()
                        .unwrap_or_else(|| format!("affine{}", i + 1));
                    out.push(
                        VectorField::linear(n, m, a, b, atom.c.clone(), label)
                            .map_err(|e| format!("[dynamics] atom {}: {e}", i + 1))?,
                    );
                }
                Ok(out)
            }
            _ => unreachable!("validated"),
        }
    }

    /// Builds the runnable experiment, revalidating every invariant.
    pub fn to_spec(&self) -> Result<ExperimentSpec, String> {
        self.validate()?;
        let p = &self.problem;
        let cost = match p.cost.as_str() {
            "quadratic_control" => CostKind::QuadraticControl,
            _ => CostKind::QuadraticState,
        };
        let mut problem = cost.attach(
            ControlProblem::new(
                p.state_dim,
                p.t_start,
                p.t_end,
                p.control_lo.clone(),
                p.control_hi.clone(),
            )
            .map_err(|e| format!("[problem] {e}"))?,
        );
        if let Some(flags) = &p.periodic {
            problem = problem
                .with_periodic(flags.clone())
                .map_err(|e| format!("[problem] {e}"))?;
        }
        problem = problem
            .with_rk_substeps(p.rk_substeps)
            .map_err(|e| format!("[problem] {e}"))?;
        if p.lipschitz_l.is_some() || p.lipschitz_h.is_some() {
            problem = override_lipschitz(problem, p.lipschitz_l, p.lipschitz_h);
        }

        let atoms = self.build_atoms()?;
        let true_atom = self.dynamics.true_atom - 1;
        if true_atom >= atoms.len() {
            return Err(format!(
                "[dynamics] true_atom {} out of range for {} atoms",
                self.dynamics.true_atom,
                atoms.len()
            ));
        }

        let schedule = match self.schedule.rule.as_str() {
            "halving_tail" => WeightSchedule::HalvingTail,
            _ => WeightSchedule::DiracTrue,
        };

        let grid = StateGrid::new(
            self.grid.lo.clone(),
            self.grid.hi.clone(),
            self.grid.counts.clone(),
        )
        .map_err(|e| format!("[grid] {e}"))?;

        let s = &self.solver;
        let solve_options = SolveOptions {
            restarts: s.restarts,
            max_iters: s.max_iters,
            grad_tol: s.grad_tol,
            armijo_step: s.armijo_step,
            armijo_shrink: s.armijo_shrink,
            armijo_decrease: s.armijo_decrease,
            rng_seed: s.seed,
            intervals: s.intervals,
        };
        solve_options.validate().map_err(|e| format!("[solver] {e}"))?;

        let b = &self.sample_box;
        let samples = b.samples_per_dim.unwrap_or_else(|| {
            default_samples_per_dim(b.state_lo.len() + b.control_lo.len())
        });
        let distance_box = DomainBox::with_samples(
            b.state_lo.clone(),
            b.state_hi.clone(),
            b.control_lo.clone(),
            b.control_hi.clone(),
            samples,
        )
        .map_err(|e| format!("[box] {e}"))?;

        let spec = ExperimentSpec {
            name: self.name.clone(),
            problem,
            atoms,
            true_atom,
            schedule,
            n_min: self.schedule.n_min,
            n_max: self.schedule.n_max,
            grid,
            solve_options,
            distance_box,
            bound_check: self.bound.enabled,
            trajectory_x0: self.trajectory.as_ref().map(|t| t.x0.clone()),
            trajectory_weights: self.trajectory.as_ref().map(|t| t.weights.clone()),
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

fn override_lipschitz(
    p: ControlProblem,
    l_l: Option<f64>,
    l_h: Option<f64>,
) -> ControlProblem {
    let running = {
        let p = p.clone();
        move |x: &[f64], u: &[f64]| p.running_cost(x, u)
    };
    let terminal = {
        let p = p.clone();
        move |x: &[f64]| p.terminal_cost(x)
    };
    let l_l = l_l.or(p.lipschitz_l());
    let l_h = l_h.or(p.lipschitz_h());
    p.with_running(running, l_l).with_terminal(terminal, l_h)
}
