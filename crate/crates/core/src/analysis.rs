//! Value functions on initial-state grids, sup-norm errors, the explicit
//! error-bound constant, and convergence studies.
//!
//! The central quantity is `sup |V_mix - V_true|` over a grid of initial
//! states, compared against `C(L_f, L_l, L_h, T) * W1(mix, dirac(true))`.
//! A [`convergence_study`] runs that comparison along a weight schedule that
//! concentrates the mixture on its true atom, reporting per-step errors and
//! empirical convergence orders.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{DomainBox, VectorField};
use crate::measures::{dirac_target_w1, Mixture};
use crate::numfmt;
use crate::sim::ControlProblem;
use crate::solve::{solve, SolveOptions};

/// Numerical slack added to the bound right-hand side before flagging a
/// violation, absorbing transcription and solver error.
pub const BOUND_SLACK: f64 = 1e-3;

/// Uniform rectangular grid of initial states, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    counts: Vec<usize>,
}

impl StateGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != counts.len() || lo.is_empty() {
            return Err(Error::InvalidDomain(
                "grid bounds and counts must be nonempty and of matching length".into(),
            ));
        }
        for (d, ((&a, &b), &c)) in lo.iter().zip(&hi).zip(&counts).enumerate() {
            if !a.is_finite() || !b.is_finite() || a >= b {
                return Err(Error::InvalidDomain(format!(
                    "grid bounds must satisfy lo < hi (coordinate {d}: [{a}, {b}])"
                )));
            }
            if c < 2 {
                return Err(Error::InvalidDomain(format!(
                    "grid counts must be >= 2 (coordinate {d}: {c})"
                )));
            }
        }
        Ok(Self { lo, hi, counts })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    /// Point at a flat index; the last coordinate varies fastest.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut rem = idx;
        let mut p = vec![0.0; self.dim()];
        for d in (0..self.dim()).rev() {
            let c = self.counts[d];
            let i = rem % c;
            rem /= c;
            let step = (self.hi[d] - self.lo[d]) / (c - 1) as f64;
            p[d] = if i == c - 1 {
                self.hi[d]
            } else {
                self.lo[d] + step * i as f64
            };
        }
        p
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }
}

/// Value estimates on a [`StateGrid`], with per-point convergence flags.
#[derive(Debug, Clone)]
pub struct ValueGrid {
    grid: StateGrid,
    values: Vec<f64>,
    converged: Vec<bool>,
}

impl ValueGrid {
    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn converged(&self) -> &[bool] {
        &self.converged
    }
}

/// Solves the averaged problem independently at every grid point.
///
/// Point `i` uses seed `opts.rng_seed + i`, so results are deterministic and
/// independent of evaluation order.
pub fn value_grid(
    p: &ControlProblem,
    mix: &Mixture,
    grid: &StateGrid,
    opts: &SolveOptions,
) -> Result<ValueGrid> {
    if grid.dim() != p.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "grid dimension {} vs problem state dimension {}",
            grid.dim(),
            p.state_dim()
        )));
    }
    let results: Vec<Result<(f64, bool)>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x0 = grid.point(i);
            let point_opts = SolveOptions {
                rng_seed: opts.rng_seed.wrapping_add(i as u64),
                ..opts.clone()
            };
            let r = solve(p, mix, &x0, &point_opts)?;
            Ok((r.value, r.converged))
        })
        .collect();
    let mut values = Vec::with_capacity(grid.len());
    let mut converged = Vec::with_capacity(grid.len());
    for r in results {
        let (v, c) = r?;
        values.push(v);
        converged.push(c);
    }
    Ok(ValueGrid {
        grid: grid.clone(),
        values,
        converged,
    })
}

/// Maximum absolute difference between two value grids over their shared
/// grid.
pub fn sup_norm_diff(a: &ValueGrid, b: &ValueGrid) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch(
            "value grids were computed on different state grids".into(),
        ));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// The explicit constant `C(L_f, L_l, L_h, T)` multiplying the Wasserstein
/// distance in the value-function error bound:
///
/// ```text
/// C = L_l * (e^{L_f T} (L_f T - 1) + 1) / L_f^2  +  L_h * e^{L_f T}
/// ```
///
/// Continuous at `L_f = 0` through the limit `L_l T^2 / 2 + L_h`; a series
/// branch covers `L_f T < 1e-6`.
pub fn theorem_constant(l_f: f64, l_l: f64, l_h: f64, t: f64) -> Result<f64> {
    if l_f < 0.0 || l_l < 0.0 || l_h < 0.0 {
        return Err(Error::InvalidDomain(format!(
            "Lipschitz constants must be nonnegative, got ({l_f}, {l_l}, {l_h})"
        )));
    }
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::InvalidDomain(format!("horizon must be positive, got {t}")));
    }
    let z = l_f * t;
    let integral = if z < 1e-6 {
        // (e^z (z - 1) + 1) / L_f^2  =  T^2 (1/2 + z/3 + z^2/8 + ...)
        t * t * (0.5 + z / 3.0 + z * z / 8.0)
    } else {
        (z.exp() * (z - 1.0) + 1.0) / (l_f * l_f)
    };
    Ok(l_l * integral + l_h * z.exp())
}

/// Gronwall trajectory-gap bound `(t - s) * dist * e^{L_f (t - s)}`.
pub fn gronwall_bound(l_f: f64, dist: f64, t: f64, s: f64) -> Result<f64> {
    if t < s {
        return Err(Error::InvalidDomain(format!("need s <= t, got s = {s}, t = {t}")));
    }
    if l_f < 0.0 || dist < 0.0 {
        return Err(Error::InvalidDomain(
            "Lipschitz constant and distance must be nonnegative".into(),
        ));
    }
    Ok((t - s) * dist * (l_f * (t - s)).exp())
}

/// Result of one bound check between two mixtures.
#[derive(Debug, Clone)]
pub struct TheoremCheck {
    /// Measured `sup |V_a - V_b|` over the grid.
    pub lhs: f64,
    /// Exact Wasserstein-1 distance between the mixtures.
    pub w1: f64,
    /// `C(L_f, L_l, L_h, T - s)`.
    pub constant: f64,
    /// `constant * w1`.
    pub rhs: f64,
    /// `rhs + slack - lhs`.
    pub margin: f64,
    pub violated: bool,
}

/// Compares the measured value-function gap between two mixtures against the
/// theoretical bound `C * W1`, with [`BOUND_SLACK`] of numerical slack.
pub fn check_theorem1(
    p: &ControlProblem,
    mix_a: &Mixture,
    mix_b: &Mixture,
    grid: &StateGrid,
    b: &DomainBox,
    opts: &SolveOptions,
) -> Result<TheoremCheck> {
    let l_f = mix_a.max_lipschitz()?.max(mix_b.max_lipschitz()?);
    let l_l = p
        .lipschitz_l()
        .ok_or_else(|| Error::MissingLipschitz("running cost".into()))?;
    let l_h = p
        .lipschitz_h()
        .ok_or_else(|| Error::MissingLipschitz("terminal cost".into()))?;
    let constant = theorem_constant(l_f, l_l, l_h, p.horizon())?;
    let (w1, _) = crate::measures::wasserstein1(mix_a, mix_b, b)?;
    let grid_a = value_grid(p, mix_a, grid, opts)?;
    let grid_b = value_grid(p, mix_b, grid, opts)?;
    let lhs = sup_norm_diff(&grid_a, &grid_b)?;
    let rhs = constant * w1;
    Ok(TheoremCheck {
        lhs,
        w1,
        constant,
        rhs,
        margin: rhs + BOUND_SLACK - lhs,
        violated: lhs > rhs + BOUND_SLACK,
    })
}

/// Rule assigning mixture weights per study index `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSchedule {
    /// True atom takes `1 - 2^-N`; the remaining mass splits equally over
    /// the other atoms, halving at every step.
    HalvingTail,
    /// All mass on the true atom at every `N`.
    DiracTrue,
}

impl WeightSchedule {
    pub fn weights(&self, atom_count: usize, n: u32, true_atom: usize) -> Vec<f64> {
        assert!(true_atom < atom_count);
        match self {
            WeightSchedule::HalvingTail => {
                if atom_count == 1 {
                    return vec![1.0];
                }
                let tail_total = 0.5f64.powi(n as i32);
                let share = tail_total / (atom_count - 1) as f64;
                let mut w = vec![share; atom_count];
                w[true_atom] = 1.0 - tail_total;
                w
            }
            WeightSchedule::DiracTrue => {
                let mut w = vec![0.0; atom_count];
                w[true_atom] = 1.0;
                w
            }
        }
    }
}

/// Everything a convergence study needs: the problem, the candidate atom
/// family, the schedule, grids and boxes, and solver settings.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub problem: ControlProblem,
    pub atoms: Vec<VectorField>,
    /// Index of the true dynamics within `atoms`.
    pub true_atom: usize,
    pub schedule: WeightSchedule,
    pub n_min: u32,
    pub n_max: u32,
    pub grid: StateGrid,
    pub solve_options: SolveOptions,
    /// Box on which the ground cost of `W1` is sampled.
    pub distance_box: DomainBox,
    /// Compare errors against `C * W1` per row (needs Lipschitz metadata).
    pub bound_check: bool,
    /// Optional multi-trajectory artifact: initial state and mixture weights.
    pub trajectory_x0: Option<Vec<f64>>,
    pub trajectory_weights: Option<Vec<f64>>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::InvalidDomain("experiment needs at least one atom".into()));
        }
        if self.true_atom >= self.atoms.len() {
            return Err(Error::InvalidDomain(format!(
                "true atom index {} out of range for {} atoms",
                self.true_atom,
                self.atoms.len()
            )));
        }
        for a in &self.atoms {
            if a.state_dim() != self.problem.state_dim()
                || a.control_dim() != self.problem.control_dim()
            {
                return Err(Error::DimensionMismatch(format!(
                    "atom '{}' ({}, {}) vs problem ({}, {})",
                    a.label(),
                    a.state_dim(),
                    a.control_dim(),
                    self.problem.state_dim(),
                    self.problem.control_dim()
                )));
            }
        }
        if self.grid.dim() != self.problem.state_dim() {
            return Err(Error::DimensionMismatch(format!(
                "grid dimension {} vs state dimension {}",
                self.grid.dim(),
                self.problem.state_dim()
            )));
        }
        if self.distance_box.state_dim() != self.problem.state_dim()
            || self.distance_box.control_dim() != self.problem.control_dim()
        {
            return Err(Error::DimensionMismatch(
                "distance box does not match problem dimensions".into(),
            ));
        }
        if self.n_min == 0 || self.n_min > self.n_max {
            return Err(Error::InvalidDomain(format!(
                "need 1 <= n_min <= n_max, got {}..{}",
                self.n_min, self.n_max
            )));
        }
        if let Some(x0) = &self.trajectory_x0 {
            if x0.len() != self.problem.state_dim() {
                return Err(Error::DimensionMismatch(
                    "trajectory x0 does not match state dimension".into(),
                ));
            }
        }
        if let Some(w) = &self.trajectory_weights {
            if w.len() != self.atoms.len() {
                return Err(Error::InvalidWeights(
                    "trajectory weights do not match atom count".into(),
                ));
            }
        }
        self.solve_options.validate()
    }
}

/// One row of a convergence report.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub n: u32,
    /// Weight of the true atom at this step.
    pub alpha_true: f64,
    /// `W1` between this step's mixture and the true Dirac.
    pub w1: f64,
    /// `sup |V_mix - V_true|`; absent when the solver failed on this row.
    pub error: Option<f64>,
    /// `log2(error_{N-1} / error_N)`, from the second usable row on.
    pub order: Option<f64>,
    pub bound_rhs: Option<f64>,
    pub bound_ok: Option<bool>,
    pub solver_ok: bool,
}

impl ReportRow {
    /// Slack-inclusive distance to the bound, `rhs + slack - error`;
    /// positive when the row satisfies the bound.
    pub fn bound_margin(&self) -> Option<f64> {
        match (self.bound_rhs, self.error) {
            (Some(rhs), Some(err)) => Some(rhs + BOUND_SLACK - err),
            _ => None,
        }
    }
}

/// Rows of a convergence study plus the bound constant used, if any.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<ReportRow>,
    pub constant: Option<f64>,
}

/// Runs the study: builds the mixture per `N`, solves both value grids,
/// and reports errors, orders, distances, and bound margins.
///
/// Rows whose value grid diverges are flagged and the study continues.
pub fn convergence_study(spec: &ExperimentSpec) -> Result<ConvergenceReport> {
    spec.validate()?;
    let true_field = spec.atoms[spec.true_atom].clone();
    let true_mix = Mixture::dirac(true_field.clone());
    let true_grid = value_grid(&spec.problem, &true_mix, &spec.grid, &spec.solve_options)?;

    let constant = if spec.bound_check {
        let mut l_f = 0.0f64;
        for a in &spec.atoms {
            l_f = l_f.max(a.lipschitz_x().ok_or_else(|| {
                Error::MissingLipschitz(format!("atom '{}'", a.label()))
            })?);
        }
        let l_l = spec
            .problem
            .lipschitz_l()
            .ok_or_else(|| Error::MissingLipschitz("running cost".into()))?;
        let l_h = spec
            .problem
            .lipschitz_h()
            .ok_or_else(|| Error::MissingLipschitz("terminal cost".into()))?;
        Some(theorem_constant(l_f, l_l, l_h, spec.problem.horizon())?)
    } else {
        None
    };

    let mut rows: Vec<ReportRow> = Vec::new();
    for n in spec.n_min..=spec.n_max {
        let weights = spec.schedule.weights(spec.atoms.len(), n, spec.true_atom);
        let alpha_true = weights[spec.true_atom];
        let mixture = Mixture::new(spec.atoms.clone(), weights)?;
        let w1 = dirac_target_w1(&mixture, &true_field, &spec.distance_box)?;

        let error = match value_grid(&spec.problem, &mixture, &spec.grid, &spec.solve_options) {
            Ok(g) => Some(sup_norm_diff(&g, &true_grid)?),
            Err(Error::Diverged { .. }) | Err(Error::AllRestartsDiverged) => None,
            Err(e) => return Err(e),
        };
        let order = match (rows.last(), error) {
            (Some(prev), Some(cur)) if prev.n + 1 == n && cur > 0.0 => prev
                .error
                .filter(|&e| e > 0.0)
                .map(|e| (e / cur).log2()),
            _ => None,
        };
        let bound_rhs = constant.map(|c| c * w1);
        let bound_ok = match (bound_rhs, error) {
            (Some(rhs), Some(err)) => Some(err <= rhs + BOUND_SLACK),
            _ => None,
        };
        rows.push(ReportRow {
            n,
            alpha_true,
            w1,
            error,
            order,
            bound_rhs,
            bound_ok,
            solver_ok: error.is_some(),
        });
    }
    Ok(ConvergenceReport { rows, constant })
}

impl ConvergenceReport {
    /// CSV with header `N,alpha1,w1,error,order,bound_rhs,bound_ok`;
    /// floats carry 6 significant digits, missing entries are empty.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "N,alpha1,w1,error,order,bound_rhs,bound_ok")?;
        for r in &self.rows {
            let fmt_opt = |v: Option<f64>| v.map(|x| numfmt::sig(x, 6)).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.n,
                numfmt::sig(r.alpha_true, 6),
                numfmt::sig(r.w1, 6),
                fmt_opt(r.error),
                fmt_opt(r.order),
                fmt_opt(r.bound_rhs),
                r.bound_ok.map(|b| b.to_string()).unwrap_or_default()
            )?;
        }
        Ok(())
    }

    pub fn any_bound_violation(&self) -> bool {
        self.rows.iter().any(|r| r.bound_ok == Some(false))
    }

    pub fn any_solver_failure(&self) -> bool {
        self.rows.iter().any(|r| !r.solver_ok)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{test1_family, VectorField};
    use crate::sim::{integrate, trajectory_hull_box, ControlSignal};
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_enumeration_and_validation() {
        assert!(StateGrid::new(vec![0.0], vec![1.0], vec![1]).is_err());
        assert!(StateGrid::new(vec![1.0], vec![0.0], vec![5]).is_err());
        let g = StateGrid::new(vec![-1.0, 0.0], vec![1.0, 2.0], vec![3, 2]).unwrap();
        assert_eq!(g.len(), 6);
        let pts: Vec<_> = g.points().collect();
        assert_eq!(pts[0], vec![-1.0, 0.0]);
        assert_eq!(pts[1], vec![-1.0, 2.0]);
        assert_eq!(pts[5], vec![1.0, 2.0]);
    }

    #[test]
    fn theorem_constant_closed_form_examples() {
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(theorem_constant(0.0, 1.0, 0.0, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(theorem_constant(1.0, 0.0, 1.0, 1.0).unwrap(), e, epsilon = 1e-14);
        let expected = (e * e + 1.0) / 4.0 + e * e;
        assert_abs_diff_eq!(
            theorem_constant(2.0, 1.0, 1.0, 1.0).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn theorem_constant_is_continuous_at_zero() {
        let limit = theorem_constant(0.0, 1.0, 1.0, 1.0).unwrap();
        let near = theorem_constant(1e-7, 1.0, 1.0, 1.0).unwrap();
        assert!((near - limit).abs() <= 1e-6 * limit);
    }

    #[test]
    fn theorem_constant_rejects_negatives() {
        assert!(theorem_constant(-1.0, 0.0, 0.0, 1.0).is_err());
        assert!(theorem_constant(1.0, 0.0, 0.0, 0.0).is_err());
    }

    fn simpson_integral(l_f: f64, t: f64, intervals: usize) -> f64 {
        // Quadrature of the pre-integration form: int_0^T tau e^{L tau} dtau.
        let h = t / intervals as f64;
        let f = |tau: f64| tau * (l_f * tau).exp();
        let mut acc = f(0.0) + f(t);
        for i in 1..intervals {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(h * i as f64);
        }
        acc * h / 3.0
    }

    #[test]
    fn theorem_constant_matches_quadrature() {
        for &(l_f, l_l, l_h, t) in &[
            (0.0, 1.0, 0.5, 1.0),
            (1e-9, 2.0, 0.0, 2.0),
            (0.5, 1.0, 1.0, 1.0),
            (2.0, 1.0, 1.0, 1.0),
            (3.0, 0.3, 2.0, 0.5),
        ] {
            let c = theorem_constant(l_f, l_l, l_h, t).unwrap();
            let q = l_l * simpson_integral(l_f, t, 20_000) + l_h * (l_f * t).exp();
            assert!(
                (c - q).abs() <= 1e-8 * q.abs().max(1e-12),
                "C({l_f}, {l_l}, {l_h}, {t}) = {c} vs quadrature {q}"
            );
        }
    }

    #[test]
    fn gronwall_bound_examples() {
        assert_eq!(gronwall_bound(2.0, 0.0, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(gronwall_bound(0.0, 1.0, 2.0, 0.0).unwrap(), 2.0);
        assert!(gronwall_bound(1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn gronwall_bound_dominates_linear_field_gap() {
        // x' = 0 versus x' = 0.1 x from x0 = 1: gap at T = 1 is e^0.1 - 1.
        let f = VectorField::scalar("still", |_, _| 0.0).with_lipschitz(0.0);
        let g = VectorField::scalar("drift", |x, _| 0.1 * x).with_lipschitz(0.1);
        let u = ControlSignal::constant(0.0, 1.0, 100, &[0.0]).unwrap();
        let tf = integrate(&f, &u, &[1.0]).unwrap();
        let tg = integrate(&g, &u, &[1.0]).unwrap();
        let gap = (tf.terminal_state()[0] - tg.terminal_state()[0]).abs();
        assert_abs_diff_eq!(gap, 0.1f64.exp() - 1.0, epsilon = 1e-9);
        let hull = trajectory_hull_box(&[tf, tg], &[-1.0], &[1.0], 0.1).unwrap();
        let dist = crate::fields::sup_distance(&f, &g, &hull).unwrap();
        let bound = gronwall_bound(0.0, dist, 1.0, 0.0).unwrap();
        assert!(gap <= bound + 1e-6, "gap {gap} vs bound {bound}");
    }

    #[test]
    fn sup_norm_diff_basics() {
        let grid = StateGrid::new(vec![0.0], vec![1.0], vec![3]).unwrap();
        let a = ValueGrid {
            grid: grid.clone(),
            values: vec![1.0, 2.0, 3.0],
            converged: vec![true; 3],
        };
        let mut b = a.clone();
        assert_eq!(sup_norm_diff(&a, &b).unwrap(), 0.0);
        b.values[1] += 0.3;
        assert_abs_diff_eq!(sup_norm_diff(&a, &b).unwrap(), 0.3, epsilon = 1e-15);
        let other = ValueGrid {
            grid: StateGrid::new(vec![0.0], vec![2.0], vec![3]).unwrap(),
            values: vec![0.0; 3],
            converged: vec![true; 3],
        };
        assert!(matches!(
            sup_norm_diff(&a, &other),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn halving_schedule_matches_published_weights() {
        let w1 = WeightSchedule::HalvingTail.weights(5, 1, 0);
        assert_eq!(w1, vec![0.5, 0.125, 0.125, 0.125, 0.125]);
        let w2 = WeightSchedule::HalvingTail.weights(5, 2, 0);
        assert_eq!(w2, vec![0.75, 0.0625, 0.0625, 0.0625, 0.0625]);
        let w2_3 = WeightSchedule::HalvingTail.weights(3, 2, 0);
        assert_eq!(w2_3, vec![0.75, 0.125, 0.125]);
        let d = WeightSchedule::DiracTrue.weights(5, 3, 0);
        assert_eq!(d, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    fn tiny_spec() -> ExperimentSpec {
        let problem = crate::experiments::CostKind::QuadraticControl
            .attach(ControlProblem::new(1, 0.0, 1.0, vec![-1.0], vec![1.0]).unwrap());
        ExperimentSpec {
            name: "tiny".into(),
            problem,
            atoms: test1_family(),
            true_atom: 0,
            schedule: WeightSchedule::HalvingTail,
            n_min: 1,
            n_max: 2,
            grid: StateGrid::new(vec![-1.0], vec![1.0], vec![3]).unwrap(),
            solve_options: SolveOptions {
                intervals: 10,
                restarts: 2,
                max_iters: 400,
                ..SolveOptions::default()
            },
            distance_box: DomainBox::with_samples(vec![-3.0], vec![3.0], vec![-1.0], vec![1.0], 61)
                .unwrap(),
            bound_check: true,
            trajectory_x0: None,
            trajectory_weights: None,
        }
    }

    #[test]
    fn zero_cost_grid_is_identically_zero() {
        let p = ControlProblem::new(1, 0.0, 1.0, vec![-1.0], vec![1.0])
            .unwrap()
            .with_running(|_, u| u[0] * u[0], Some(0.0));
        let g = VectorField::scalar("-x", |x, _| -x);
        let grid = StateGrid::new(vec![-1.0], vec![1.0], vec![5]).unwrap();
        let opts = SolveOptions {
            intervals: 10,
            restarts: 1,
            ..SolveOptions::default()
        };
        let vg = value_grid(&p, &Mixture::dirac(g), &grid, &opts).unwrap();
        for &v in vg.values() {
            assert!(v.abs() <= 1e-10, "value {v}");
        }
    }

    #[test]
    fn dirac_mixture_grid_is_bitwise_equal_to_single_atom_grid() {
        let spec = tiny_spec();
        let f = spec.atoms[0].clone();
        let via_mixture = Mixture::new(vec![f.clone(), spec.atoms[1].clone()], vec![1.0, 0.0]).unwrap();
        let a = value_grid(&spec.problem, &via_mixture, &spec.grid, &spec.solve_options).unwrap();
        let b = value_grid(&spec.problem, &Mixture::dirac(f), &spec.grid, &spec.solve_options).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn dirac_schedule_study_has_zero_errors() {
        let mut spec = tiny_spec();
        spec.schedule = WeightSchedule::DiracTrue;
        spec.bound_check = false;
        let report = convergence_study(&spec).unwrap();
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert_eq!(row.error, Some(0.0));
            assert_eq!(row.w1, 0.0);
            assert!(row.order.is_none());
        }
    }

    #[test]
    fn study_rows_carry_schedule_metadata() {
        let spec = tiny_spec();
        let report = convergence_study(&spec).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].alpha_true, 0.5);
        assert_eq!(report.rows[1].alpha_true, 0.75);
        // W1 halves exactly between consecutive schedule steps.
        let ratio = report.rows[0].w1 / report.rows[1].w1;
        assert_abs_diff_eq!(ratio, 2.0, epsilon = 1e-9);
        assert!(report.constant.is_some());
        for row in &report.rows {
            assert!(row.solver_ok);
            assert_eq!(row.bound_ok, Some(true));
            assert!(row.bound_margin().unwrap() > 0.0);
        }
    }

    #[test]
    fn check_theorem1_is_trivially_satisfied_for_equal_mixtures() {
        let spec = tiny_spec();
        let mix = Mixture::new(spec.atoms.clone(), WeightSchedule::HalvingTail.weights(5, 1, 0))
            .unwrap();
        let check = check_theorem1(
            &spec.problem,
            &mix,
            &mix,
            &spec.grid,
            &spec.distance_box,
            &spec.solve_options,
        )
        .unwrap();
        assert_eq!(check.lhs, 0.0);
        assert_eq!(check.w1, 0.0);
        assert!(!check.violated);
    }

    #[test]
    fn terminal_cost_scaling_scales_both_sides() {
        // With no running cost the value function is linear in the terminal
        // cost scale, and so is the bound right-hand side.
        let grid = StateGrid::new(vec![-1.0], vec![1.0], vec![3]).unwrap();
        let opts = SolveOptions {
            intervals: 10,
            restarts: 2,
            max_iters: 400,
            ..SolveOptions::default()
        };
        let b = DomainBox::with_samples(vec![-3.0], vec![3.0], vec![-1.0], vec![1.0], 61).unwrap();
        let atoms = test1_family();
        let mix = Mixture::new(atoms.clone(), WeightSchedule::HalvingTail.weights(5, 1, 0)).unwrap();
        let dirac = Mixture::dirac(atoms[0].clone());
        let mut results = Vec::new();
        for scale in [1.0, 3.0] {
            let p = ControlProblem::new(1, 0.0, 1.0, vec![-1.0], vec![1.0])
                .unwrap()
                .with_terminal(move |x| -scale * x[0], Some(scale));
            let check = check_theorem1(&p, &mix, &dirac, &grid, &b, &opts).unwrap();
            assert!(!check.violated);
            results.push(check);
        }
        assert_abs_diff_eq!(results[1].rhs, 3.0 * results[0].rhs, epsilon = 1e-9);
        assert_abs_diff_eq!(results[1].lhs, 3.0 * results[0].lhs, epsilon = 1e-5);
    }

    #[test]
    fn csv_layout_matches_interface() {
        let spec = tiny_spec();
        let report = convergence_study(&spec).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("N,alpha1,w1,error,order,bound_rhs,bound_ok"));
        let first = lines.next().unwrap();
        let fields: Vec<_> = first.split(',').collect();
        assert_eq!(fields.len(), 7);
        assert_eq!(fields[0], "1");
        assert_eq!(fields[1], "0.500000");
        assert_eq!(fields[4], "");
        assert_eq!(fields[6], "true");
        let second = lines.next().unwrap();
        assert!(second.starts_with("2,0.750000,"));
    }
}
