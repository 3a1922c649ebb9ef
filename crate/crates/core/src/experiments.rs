//! Built-in experiment setups: the scalar sine family and the planar affine
//! family, each with its weight schedule, grids, and solver defaults.

use std::f64::consts::TAU;

use crate::analysis::{ExperimentSpec, StateGrid, WeightSchedule};
use crate::fields::{test1_family, test2_family, DomainBox};
use crate::sim::ControlProblem;
use crate::solve::SolveOptions;

/// Seed used by the built-in experiments unless overridden.
pub const DEFAULT_SEED: u64 = 42;

/// Built-in cost selections constructible from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    /// Running cost `|u|^2`, terminal cost `-sum_i x_i`.
    ///
    /// The running cost is state-independent (Lipschitz 0 in `x`) and the
    /// terminal cost has exact constant `sqrt(n)`.
    QuadraticControl,
    /// Running and terminal cost `|x|^2 / 2`; no global Lipschitz constants.
    QuadraticState,
}

impl CostKind {
    /// Attaches the cost pair (and its Lipschitz metadata) to a problem.
    pub fn attach(&self, p: ControlProblem) -> ControlProblem {
        match self {
            CostKind::QuadraticControl => {
                let n = p.state_dim();
                p.with_running(|_, u| u.iter().map(|v| v * v).sum(), Some(0.0))
                    .with_terminal(|x| -x.iter().sum::<f64>(), Some((n as f64).sqrt()))
            }
            CostKind::QuadraticState => p
                .with_running(|x, _| 0.5 * x.iter().map(|v| v * v).sum::<f64>(), None)
                .with_terminal(|x| 0.5 * x.iter().map(|v| v * v).sum::<f64>(), None),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CostKind::QuadraticControl => "quadratic_control",
            CostKind::QuadraticState => "quadratic_state",
        }
    }
}

/// Scalar study: five `lambda x + sin x + u` candidates, control in
/// `[-1, 1]`, control-energy running cost with `-x` terminal reward,
/// N = 1..8, 21-point value grid on `[-1, 1]`.
pub fn test1() -> ExperimentSpec {
    let problem = CostKind::QuadraticControl.attach(
        ControlProblem::new(1, 0.0, 1.0, vec![-1.0], vec![1.0]).expect("valid horizon"),
    );
    ExperimentSpec {
        name: "test1".into(),
        problem,
        atoms: test1_family(),
        true_atom: 0,
        schedule: WeightSchedule::HalvingTail,
        n_min: 1,
        n_max: 8,
        grid: StateGrid::new(vec![-1.0], vec![1.0], vec![21]).expect("valid grid"),
        solve_options: SolveOptions {
            restarts: 5,
            rng_seed: DEFAULT_SEED,
            ..SolveOptions::default()
        },
        distance_box: DomainBox::new(vec![-3.0], vec![3.0], vec![-1.0], vec![1.0])
            .expect("valid box"),
        bound_check: true,
        trajectory_x0: Some(vec![1.0]),
        trajectory_weights: Some(WeightSchedule::HalvingTail.weights(5, 1, 0)),
    }
}

/// Planar study: three affine candidates driven through `(cos u, sin u)`
/// with a periodic control in `[0, 2pi]`, quadratic state cost, N = 1..6,
/// 11 x 11 value grid on `[-1, 1]^2`.
///
/// The quadratic costs have no global Lipschitz constants, so the bound
/// check is off; only error ratios and orders are reported.
pub fn test2() -> ExperimentSpec {
    let problem = CostKind::QuadraticState.attach(
        ControlProblem::new(2, 0.0, 1.0, vec![0.0], vec![TAU])
            .expect("valid horizon")
            .with_periodic(vec![true])
            .expect("one periodic flag"),
    );
    ExperimentSpec {
        name: "test2".into(),
        problem,
        atoms: test2_family(),
        true_atom: 0,
        schedule: WeightSchedule::HalvingTail,
        n_min: 1,
        n_max: 6,
        grid: StateGrid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![11, 11]).expect("valid grid"),
        solve_options: SolveOptions {
            restarts: 9,
            rng_seed: DEFAULT_SEED,
            ..SolveOptions::default()
        },
        distance_box: DomainBox::new(vec![-3.0, -3.0], vec![3.0, 3.0], vec![0.0], vec![TAU])
            .expect("valid box"),
        bound_check: false,
        trajectory_x0: Some(vec![-0.4, 0.3]),
        trajectory_weights: Some(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
    }
}
