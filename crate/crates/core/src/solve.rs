//! Near-optimal controls and values by multistart projected gradient
//! descent, plus an exhaustive coarse oracle for cross-checking.
//!
//! Each restart runs a spectral projected-gradient iteration: the search
//! direction is the projection of a Barzilai-Borwein-scaled gradient step,
//! and an Armijo backtracking line search (initial trial `armijo_step`)
//! guarantees monotone descent. The first start is the control-box midpoint;
//! the remaining starts are uniform in the box, drawn from a counter-based
//! stream so that a run with more restarts extends (never reshuffles) the
//! starts of a run with fewer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::linspace;
use crate::measures::Mixture;
use crate::sim::{adjoint_gradient, cost_averaged, ControlProblem, ControlSignal};

/// Multistart and line-search settings.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub armijo_step: f64,
    pub armijo_shrink: f64,
    pub armijo_decrease: f64,
    pub rng_seed: u64,
    /// Control intervals `K` of the transcription.
    pub intervals: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iters: 5000,
            grad_tol: 1e-8,
            armijo_step: 1.0,
            armijo_shrink: 0.5,
            armijo_decrease: 1e-4,
            rng_seed: 42,
            intervals: 100,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iters == 0 || self.intervals == 0 {
            return Err(Error::InvalidDomain(
                "restarts, max_iters, and intervals must be >= 1".into(),
            ));
        }
        if !(self.grad_tol > 0.0 && self.armijo_step > 0.0) {
            return Err(Error::InvalidDomain(
                "grad_tol and armijo_step must be positive".into(),
            ));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(Error::InvalidDomain(
                "armijo_shrink must lie in (0, 1)".into(),
            ));
        }
        if !(self.armijo_decrease > 0.0 && self.armijo_decrease < 1.0) {
            return Err(Error::InvalidDomain(
                "armijo_decrease must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of [`solve`]: the best control found, its exact averaged cost,
/// and per-restart diagnostics.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub control: ControlSignal,
    pub value: f64,
    /// Projected-gradient norm at the returned control was within `grad_tol`.
    pub converged: bool,
    /// Outer iterations used by the winning restart.
    pub iterations: usize,
    /// Final value per restart; diverged restarts carry infinity.
    pub restart_values: Vec<f64>,
}

struct RestartRun {
    control: Vec<f64>,
    value: f64,
    converged: bool,
    iterations: usize,
}

const BB_SCALE_MIN: f64 = 1e-12;
const BB_SCALE_MAX: f64 = 1e8;
const MAX_BACKTRACKS: usize = 80;
// Nonmonotone (GLL) window: the Armijo reference is the maximum cost over
// this many recent iterates, which lets unshrunk Barzilai-Borwein steps
// through on ill-conditioned valleys. Window 1 recovers monotone descent.
const NONMONOTONE_WINDOW: usize = 10;
// Stagnation stop: when the value has improved by less than this relative
// amount over a full window of iterations, further iterations cannot move
// the reported value at the precision anything downstream consumes.
const STAGNATION_WINDOW: usize = 100;
const STAGNATION_RELATIVE: f64 = 1e-6;

/// Minimizes the averaged cost over piecewise-constant controls in the
/// problem's control box.
///
/// Deterministic given `opts.rng_seed`; ties across restarts break to the
/// lowest restart index. Returns an error only if every restart diverges.
pub fn solve(
    p: &ControlProblem,
    mix: &Mixture,
    x0: &[f64],
    opts: &SolveOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    if mix.state_dim() != p.state_dim() || mix.control_dim() != p.control_dim() {
        return Err(Error::DimensionMismatch(format!(
            "mixture ({}, {}) vs problem ({}, {})",
            mix.state_dim(),
            mix.control_dim(),
            p.state_dim(),
            p.control_dim()
        )));
    }
    let m = p.control_dim();
    let k = opts.intervals;
    let (lo, hi) = p.control_bounds();

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(opts.restarts);
    let midpoint = p.control_midpoint();
    let mut first = Vec::with_capacity(k * m);
    for _ in 0..k {
        first.extend_from_slice(&midpoint);
    }
    starts.push(first);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    for _ in 1..opts.restarts {
        let s: Vec<f64> = (0..k * m)
            .map(|i| rng.gen_range(lo[i % m]..hi[i % m]))
            .collect();
        starts.push(s);
    }

    let runs: Vec<Option<RestartRun>> = starts
        .par_iter()
        .map(|s| spg_restart(p, mix, x0, s, opts))
        .collect();

    let restart_values: Vec<f64> = runs
        .iter()
        .map(|r| r.as_ref().map_or(f64::INFINITY, |r| r.value))
        .collect();
    let mut best: Option<(usize, &RestartRun)> = None;
    for (idx, run) in runs.iter().enumerate() {
        if let Some(run) = run {
            let better = match best {
                None => true,
                Some((_, b)) => run.value < b.value,
            };
            if better {
                best = Some((idx, run));
            }
        }
    }
    let Some((_, winner)) = best else {
        return Err(Error::AllRestartsDiverged);
    };

    let control = ControlSignal::new(p.t_start(), p.t_end(), m, winner.control.clone())?;
    let value = cost_averaged(p, mix, &control, x0)?;
    Ok(SolveResult {
        control,
        value,
        converged: winner.converged,
        iterations: winner.iterations,
        restart_values,
    })
}

/// Euclidean norm of the unit-step projected-gradient residual
/// `u - P(u - g)`; periodic coordinates are unconstrained so their residual
/// is the raw gradient component.
fn residual_norm(p: &ControlProblem, u: &[f64], grad: &[f64]) -> f64 {
    let m = p.control_dim();
    let (lo, hi) = p.control_bounds();
    let periodic = p.periodic();
    let mut acc = 0.0;
    for (i, (&ui, &gi)) in u.iter().zip(grad).enumerate() {
        let d = i % m;
        let r = if periodic[d] {
            gi
        } else {
            ui - (ui - gi).clamp(lo[d], hi[d])
        };
        acc += r * r;
    }
    acc.sqrt()
}

fn spg_restart(
    p: &ControlProblem,
    mix: &Mixture,
    x0: &[f64],
    start: &[f64],
    opts: &SolveOptions,
) -> Option<RestartRun> {
    let m = p.control_dim();
    let (lo, hi) = p.control_bounds();
    let periodic = p.periodic();

    let mut u = start.to_vec();
    for chunk in u.chunks_mut(m) {
        p.project_control(chunk);
    }
    let signal = |values: &[f64]| {
        ControlSignal::new(p.t_start(), p.t_end(), m, values.to_vec()).expect("projected control")
    };
    let mut value = match cost_averaged(p, mix, &signal(&u), x0) {
        Ok(v) => v,
        Err(_) => return None,
    };

    let mut bb_scale = 1.0f64;
    let mut prev_grad: Option<Vec<f64>> = None;
    let mut prev_step: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut recent = std::collections::VecDeque::with_capacity(NONMONOTONE_WINDOW);
    recent.push_back(value);
    // Nonmonotone steps can end above the best iterate; remember it.
    let mut best_u = u.clone();
    let mut best_value = value;
    // Best value at the start of the current stagnation window.
    let mut window_anchor = value;

    for iter in 1..=opts.max_iters {
        iterations = iter;
        let grad = match adjoint_gradient(p, mix, &signal(&u), x0) {
            Ok(g) => g,
            Err(_) => return None,
        };
        if let Some(pg) = &prev_grad {
            let mut sy = 0.0;
            let mut ss = 0.0;
            for ((&s, &g1), &g0) in prev_step.iter().zip(&grad).zip(pg) {
                sy += s * (g1 - g0);
                ss += s * s;
            }
            if sy > 1e-300 {
                bb_scale = (ss / sy).clamp(BB_SCALE_MIN, BB_SCALE_MAX);
            }
        }
        if residual_norm(p, &u, &grad) <= opts.grad_tol {
            converged = true;
            break;
        }

        // Projection-arc direction for the scaled step.
        let mut dir = vec![0.0; u.len()];
        for i in 0..u.len() {
            let d = i % m;
            dir[i] = if periodic[d] {
                -bb_scale * grad[i]
            } else {
                (u[i] - bb_scale * grad[i]).clamp(lo[d], hi[d]) - u[i]
            };
        }
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        if slope >= -1e-300 {
            break;
        }

        let reference = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = opts.armijo_step;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial = u.clone();
            for i in 0..trial.len() {
                trial[i] += t * dir[i];
            }
            for chunk in trial.chunks_mut(m) {
                p.project_control(chunk);
            }
            if let Ok(trial_value) = cost_averaged(p, mix, &signal(&trial), x0) {
                if trial_value <= reference + opts.armijo_decrease * t * slope {
                    accepted = Some((trial, trial_value, t));
                    break;
                }
            }
            t *= opts.armijo_shrink;
        }
        let Some((next, next_value, step)) = accepted else {
            break;
        };
        prev_step = dir.iter().map(|d| step * d).collect();
        prev_grad = Some(grad);
        u = next;
        value = next_value;
        if value < best_value {
            best_value = value;
            best_u.copy_from_slice(&u);
        }
        recent.push_back(value);
        if recent.len() > NONMONOTONE_WINDOW {
            recent.pop_front();
        }
        if iter % STAGNATION_WINDOW == 0 {
            if window_anchor - best_value <= STAGNATION_RELATIVE * (1.0 + best_value.abs()) {
                break;
            }
            window_anchor = best_value;
        }
    }

    // A converged residual certifies the current iterate; otherwise fall
    // back to the best value seen.
    if converged {
        Some(RestartRun {
            control: u,
            value,
            converged,
            iterations,
        })
    } else {
        Some(RestartRun {
            control: best_u,
            value: best_value,
            converged,
            iterations,
        })
    }
}

/// Enumeration size above which [`brute_force_value`] refuses to run.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

/// Exact minimum of the averaged cost over the finite set of controls that
/// are piecewise constant on `k_coarse` intervals with every coordinate on a
/// `levels`-point uniform grid of the control box.
///
/// An independent oracle for [`solve`]: it searches a subset of the solver's
/// admissible set, so the solver's value must not exceed it (up to solver
/// tolerance).
pub fn brute_force_value(
    p: &ControlProblem,
    mix: &Mixture,
    x0: &[f64],
    levels: usize,
    k_coarse: usize,
) -> Result<f64> {
    if levels == 0 || k_coarse == 0 {
        return Err(Error::InvalidDomain(
            "levels and k_coarse must be >= 1".into(),
        ));
    }
    let m = p.control_dim();
    let slots = (k_coarse * m) as u32;
    let size = (levels as u128)
        .checked_pow(slots)
        .unwrap_or(u128::MAX);
    if size > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }

    let (lo, hi) = p.control_bounds();
    let axes: Vec<Vec<f64>> = (0..m)
        .map(|d| {
            if levels == 1 {
                vec![0.5 * (lo[d] + hi[d])]
            } else {
                linspace(lo[d], hi[d], levels)
            }
        })
        .collect();

    let total = size as usize;
    let best = (0..total)
        .into_par_iter()
        .map(|e| {
            let mut rem = e;
            let mut values = vec![0.0; k_coarse * m];
            for slot in 0..k_coarse * m {
                let digit = rem % levels;
                rem /= levels;
                values[slot] = axes[slot % m][digit];
            }
            let u = ControlSignal::new(p.t_start(), p.t_end(), m, values)
                .expect("grid control values are finite");
            cost_averaged(p, mix, &u, x0).unwrap_or(f64::INFINITY)
        })
        .reduce(|| f64::INFINITY, f64::min);

    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::AllRestartsDiverged)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{test1_family, VectorField};
    use approx::assert_abs_diff_eq;

    fn quadratic_control_problem() -> ControlProblem {
        ControlProblem::new(1, 0.0, 1.0, vec![-1.0], vec![1.0])
            .unwrap()
            .with_running(|_, u| u[0] * u[0], Some(0.0))
            .with_terminal(|x| -x[0], Some(1.0))
    }

    fn tiny_opts() -> SolveOptions {
        SolveOptions {
            restarts: 3,
            intervals: 5,
            max_iters: 2000,
            ..SolveOptions::default()
        }
    }

    #[test]
    fn options_validation() {
        let bad_shrink = SolveOptions {
            armijo_shrink: 1.0,
            ..SolveOptions::default()
        };
        assert!(bad_shrink.validate().is_err());
        let bad_decrease = SolveOptions {
            armijo_decrease: 0.0,
            ..SolveOptions::default()
        };
        assert!(bad_decrease.validate().is_err());
        let bad_restarts = SolveOptions {
            restarts: 0,
            ..SolveOptions::default()
        };
        assert!(bad_restarts.validate().is_err());
    }

    #[test]
    fn pure_control_cost_minimizes_to_zero() {
        let p = ControlProblem::new(1, 0.0, 1.0, vec![-1.0], vec![1.0])
            .unwrap()
            .with_running(|_, u| u[0] * u[0], Some(0.0));
        let g = VectorField::scalar("-x", |x, _| -x);
        let opts = SolveOptions {
            intervals: 20,
            restarts: 2,
            ..SolveOptions::default()
        };
        let r = solve(&p, &Mixture::dirac(g), &[0.5], &opts).unwrap();
        assert!(r.converged);
        assert!(r.value.abs() <= 1e-8, "value {}", r.value);
        for &u in r.control.values() {
            assert!(u.abs() <= 1e-4);
        }
    }

    #[test]
    fn oracle_closed_form_single_integrator() {
        // x' = u, terminal cost -x: best grid control is u = +1 throughout
        // and RK4 integrates constant slopes exactly.
        let p = ControlProblem::new(1, 0.0, 1.0, vec![-1.0], vec![1.0])
            .unwrap()
            .with_terminal(|x| -x[0], Some(1.0));
        let g = VectorField::linear(1, 1, vec![0.0], vec![1.0], vec![0.0], "integrator").unwrap();
        for x0 in [-0.5, 0.0, 1.0] {
            let v = brute_force_value(&p, &Mixture::dirac(g.clone()), &[x0], 5, 5).unwrap();
            assert_abs_diff_eq!(v, -(x0 + 1.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn oracle_finds_zero_when_levels_include_it() {
        let p = ControlProblem::new(1, 0.0, 1.0, vec![-1.0], vec![1.0])
            .unwrap()
            .with_running(|_, u| u[0] * u[0], Some(0.0));
        let g = VectorField::scalar("-x", |x, _| -x);
        let v = brute_force_value(&p, &Mixture::dirac(g), &[0.3], 5, 4).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn oracle_rejects_oversized_enumerations() {
        let p = quadratic_control_problem();
        let g = VectorField::scalar("-x", |x, _| -x);
        assert!(matches!(
            brute_force_value(&p, &Mixture::dirac(g), &[0.0], 100, 5),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn solver_beats_coarse_oracle_on_tiny_instance() {
        let p = quadratic_control_problem();
        let mix = Mixture::new(test1_family(), vec![0.5, 0.125, 0.125, 0.125, 0.125]).unwrap();
        let opts = tiny_opts();
        let oracle = brute_force_value(&p, &mix, &[1.0], 5, 5).unwrap();
        let r = solve(&p, &mix, &[1.0], &opts).unwrap();
        assert!(
            r.value <= oracle + 1e-6,
            "solver {} vs oracle {}",
            r.value,
            oracle
        );
    }

    #[test]
    fn solve_is_deterministic_given_seed() {
        let p = quadratic_control_problem();
        let mix = Mixture::new(test1_family(), vec![0.5, 0.125, 0.125, 0.125, 0.125]).unwrap();
        let opts = tiny_opts();
        let a = solve(&p, &mix, &[0.7], &opts).unwrap();
        let b = solve(&p, &mix, &[0.7], &opts).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.control, b.control);
        assert_eq!(a.restart_values, b.restart_values);
    }

    #[test]
    fn extra_restarts_never_hurt() {
        let p = quadratic_control_problem();
        let mix = Mixture::new(test1_family(), vec![0.5, 0.125, 0.125, 0.125, 0.125]).unwrap();
        let few = SolveOptions {
            restarts: 2,
            ..tiny_opts()
        };
        let many = SolveOptions {
            restarts: 5,
            ..tiny_opts()
        };
        let a = solve(&p, &mix, &[0.4], &few).unwrap();
        let b = solve(&p, &mix, &[0.4], &many).unwrap();
        assert!(b.value <= a.value + 1e-15);
        // Shared seed stream: the first restarts coincide.
        assert_eq!(a.restart_values[..2], b.restart_values[..2]);
    }

    #[test]
    fn value_never_exceeds_start_costs() {
        let p = quadratic_control_problem();
        let mix = Mixture::new(test1_family(), vec![0.5, 0.125, 0.125, 0.125, 0.125]).unwrap();
        let opts = tiny_opts();
        let r = solve(&p, &mix, &[1.0], &opts).unwrap();
        let midpoint = ControlSignal::constant(0.0, 1.0, opts.intervals, &[0.0]).unwrap();
        let start_cost = cost_averaged(&p, &mix, &midpoint, &[1.0]).unwrap();
        assert!(r.value <= start_cost + 1e-12);
    }

    #[test]
    fn interior_optimum_has_small_gradient() {
        let p = ControlProblem::new(1, 0.0, 1.0, vec![-1.0], vec![1.0])
            .unwrap()
            .with_running(|_, u| u[0] * u[0], Some(0.0));
        let g = VectorField::scalar("-x", |x, _| -x);
        let mix = Mixture::dirac(g);
        let opts = SolveOptions {
            intervals: 10,
            restarts: 1,
            ..SolveOptions::default()
        };
        let r = solve(&p, &mix, &[0.2], &opts).unwrap();
        let grad = adjoint_gradient(&p, &mix, &r.control, &[0.2]).unwrap();
        let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm <= opts.grad_tol * 10.0, "gradient norm {norm}");
    }
}
