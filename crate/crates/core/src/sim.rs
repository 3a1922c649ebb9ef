//! Fixed-step trajectory integration, cost evaluation for single and
//! averaged dynamics, and adjoint gradients of the discretized cost.
//!
//! Controls are piecewise constant on a uniform grid of `K` intervals.
//! States advance with classic 4-stage Runge-Kutta (a configurable number of
//! substeps per control interval); the running cost uses the trapezoidal
//! rule on the knots, with the interval's control at both ends. The adjoint
//! sweep differentiates exactly that discretization, with central-difference
//! Jacobians of the per-interval step map, so it matches finite differences
//! of the discrete cost to quadrature-free accuracy.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{DomainBox, VectorField};
use crate::measures::Mixture;
use crate::numfmt;

/// Default blow-up guard on the state norm during integration.
pub const DEFAULT_BLOW_UP: f64 = 1e8;

/// Relative step used for all central-difference Jacobians.
const FD_STEP: f64 = 1e-6;

type RunningCost = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type TerminalCost = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A finite-horizon problem: horizon, control box (with optional periodic
/// coordinates), running and terminal costs with Lipschitz metadata, and the
/// transcription settings used by every cost evaluation.
#[derive(Clone)]
pub struct ControlProblem {
    state_dim: usize,
    t_start: f64,
    t_end: f64,
    control_lo: Vec<f64>,
    control_hi: Vec<f64>,
    periodic: Vec<bool>,
    running: Arc<RunningCost>,
    terminal: Arc<TerminalCost>,
    lipschitz_l: Option<f64>,
    lipschitz_h: Option<f64>,
    rk_substeps: usize,
    blow_up: f64,
}

impl std::fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlProblem")
            .field("state_dim", &self.state_dim)
            .field("t_start", &self.t_start)
            .field("t_end", &self.t_end)
            .field("control_lo", &self.control_lo)
            .field("control_hi", &self.control_hi)
            .field("periodic", &self.periodic)
            .field("lipschitz_l", &self.lipschitz_l)
            .field("lipschitz_h", &self.lipschitz_h)
            .field("rk_substeps", &self.rk_substeps)
            .finish()
    }
}

impl ControlProblem {
    /// Problem with zero costs; attach costs with the `with_*` builders.
    pub fn new(
        state_dim: usize,
        t_start: f64,
        t_end: f64,
        control_lo: Vec<f64>,
        control_hi: Vec<f64>,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::InvalidDomain("state_dim must be >= 1".into()));
        }
        if !t_start.is_finite() || !t_end.is_finite() || t_start < 0.0 || t_start >= t_end {
            return Err(Error::InvalidDomain(format!(
                "horizon must satisfy 0 <= s < T, got s = {t_start}, T = {t_end}"
            )));
        }
        if control_lo.len() != control_hi.len() || control_lo.is_empty() {
            return Err(Error::InvalidDomain(
                "control bounds must be nonempty and of matching length".into(),
            ));
        }
        for (d, (&lo, &hi)) in control_lo.iter().zip(&control_hi).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidDomain(format!(
                    "control bounds must be finite with lo <= hi (coordinate {d}: [{lo}, {hi}])"
                )));
            }
        }
        let m = control_lo.len();
        Ok(Self {
            state_dim,
            t_start,
            t_end,
            control_lo,
            control_hi,
            periodic: vec![false; m],
            running: Arc::new(|_, _| 0.0),
            terminal: Arc::new(|_| 0.0),
            lipschitz_l: Some(0.0),
            lipschitz_h: Some(0.0),
            rk_substeps: 1,
            blow_up: DEFAULT_BLOW_UP,
        })
    }

    pub fn with_running<F>(mut self, cost: F, lipschitz: Option<f64>) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.running = Arc::new(cost);
        self.lipschitz_l = lipschitz;
        self
    }

    pub fn with_terminal<F>(mut self, cost: F, lipschitz: Option<f64>) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.terminal = Arc::new(cost);
        self.lipschitz_h = lipschitz;
        self
    }

    pub fn with_periodic(mut self, periodic: Vec<bool>) -> Result<Self> {
        if periodic.len() != self.control_lo.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} periodic flags for {} control coordinates",
                periodic.len(),
                self.control_lo.len()
            )));
        }
        self.periodic = periodic;
        Ok(self)
    }

    pub fn with_rk_substeps(mut self, substeps: usize) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::InvalidDomain("rk_substeps must be >= 1".into()));
        }
        self.rk_substeps = substeps;
        Ok(self)
    }

    pub fn with_blow_up(mut self, guard: f64) -> Self {
        self.blow_up = guard;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_lo.len()
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn horizon(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn control_bounds(&self) -> (&[f64], &[f64]) {
        (&self.control_lo, &self.control_hi)
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn lipschitz_l(&self) -> Option<f64> {
        self.lipschitz_l
    }

    pub fn lipschitz_h(&self) -> Option<f64> {
        self.lipschitz_h
    }

    pub fn rk_substeps(&self) -> usize {
        self.rk_substeps
    }

    pub fn blow_up(&self) -> f64 {
        self.blow_up
    }

    pub fn running_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        (self.running)(x, u)
    }

    pub fn terminal_cost(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }

    /// Clamps box coordinates and wraps periodic ones into their range.
    pub fn project_control(&self, u: &mut [f64]) {
        debug_assert_eq!(u.len(), self.control_dim());
        for d in 0..u.len() {
            if self.periodic[d] {
                let period = self.control_hi[d] - self.control_lo[d];
                u[d] = self.control_lo[d] + (u[d] - self.control_lo[d]).rem_euclid(period);
            } else {
                u[d] = u[d].clamp(self.control_lo[d], self.control_hi[d]);
            }
        }
    }

    pub fn control_midpoint(&self) -> Vec<f64> {
        self.control_lo
            .iter()
            .zip(&self.control_hi)
            .map(|(&lo, &hi)| 0.5 * (lo + hi))
            .collect()
    }
}

/// Sampled validation of declared cost Lipschitz constants over the state
/// part of a box, mirroring the field-side validation. Costs with no
/// declared constant are skipped.
pub fn check_problem(p: &ControlProblem, b: &DomainBox) -> Result<()> {
    if p.state_dim != b.state_dim() || p.control_dim() != b.control_dim() {
        return Err(Error::DimensionMismatch(format!(
            "problem ({}, {}) vs box ({}, {})",
            p.state_dim,
            p.control_dim(),
            b.state_dim(),
            b.control_dim()
        )));
    }
    if let Some(declared) = p.lipschitz_l {
        let running = p.running.clone();
        let as_field = VectorField::from_fn(b.state_dim(), b.control_dim(), "running cost", {
            move |x, u, out| {
                out[0] = running(x, u);
                for o in out.iter_mut().skip(1) {
                    *o = 0.0;
                }
            }
        });
        let estimate = crate::fields::estimate_lipschitz(&as_field, b)?;
        if estimate > declared * (1.0 + crate::fields::LIPSCHITZ_SLACK) {
            return Err(Error::InvalidDomain(format!(
                "running cost declares Lipschitz constant {declared} but a sampled quotient reached {estimate}"
            )));
        }
    }
    if let Some(declared) = p.lipschitz_h {
        let terminal = p.terminal.clone();
        let as_field = VectorField::from_fn(b.state_dim(), b.control_dim(), "terminal cost", {
            move |x, _, out| {
                out[0] = terminal(x);
                for o in out.iter_mut().skip(1) {
                    *o = 0.0;
                }
            }
        });
        let estimate = crate::fields::estimate_lipschitz(&as_field, b)?;
        if estimate > declared * (1.0 + crate::fields::LIPSCHITZ_SLACK) {
            return Err(Error::InvalidDomain(format!(
                "terminal cost declares Lipschitz constant {declared} but a sampled quotient reached {estimate}"
            )));
        }
    }
    Ok(())
}

/// Piecewise-constant control on a uniform grid of `K` intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    t_start: f64,
    t_end: f64,
    control_dim: usize,
    values: Vec<f64>,
}

impl ControlSignal {
    pub fn new(t_start: f64, t_end: f64, control_dim: usize, values: Vec<f64>) -> Result<Self> {
        if control_dim == 0 {
            return Err(Error::InvalidDomain("control_dim must be >= 1".into()));
        }
        if !(t_start.is_finite() && t_end.is_finite() && t_start < t_end) {
            return Err(Error::InvalidDomain(format!(
                "control grid needs t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        if values.is_empty() || values.len() % control_dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} control values do not fill intervals of dimension {control_dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control values".into()));
        }
        Ok(Self {
            t_start,
            t_end,
            control_dim,
            values,
        })
    }

    pub fn constant(t_start: f64, t_end: f64, intervals: usize, u: &[f64]) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidDomain("need at least one interval".into()));
        }
        let mut values = Vec::with_capacity(intervals * u.len());
        for _ in 0..intervals {
            values.extend_from_slice(u);
        }
        Self::new(t_start, t_end, u.len(), values)
    }

    pub fn intervals(&self) -> usize {
        self.values.len() / self.control_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.intervals() as f64
    }

    pub fn knot_time(&self, k: usize) -> f64 {
        if k == self.intervals() {
            self.t_end
        } else {
            self.t_start + (self.t_end - self.t_start) * k as f64 / self.intervals() as f64
        }
    }

    /// Control vector on interval `k` (constant on `[t_k, t_{k+1})`).
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.control_dim..(k + 1) * self.control_dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// States on the knot grid of a [`ControlSignal`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    state_dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn terminal_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }
}

struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    xt: Vec<f64>,
}

impl Rk4Scratch {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            xt: vec![0.0; n],
        }
    }
}

/// Advances `x` over one control interval with `substeps` RK4 steps under a
/// frozen control vector.
fn rk4_interval(
    g: &VectorField,
    x: &mut [f64],
    u: &[f64],
    dt: f64,
    substeps: usize,
    s: &mut Rk4Scratch,
) {
    let h = dt / substeps as f64;
    let n = x.len();
    for _ in 0..substeps {
        g.eval_into(x, u, &mut s.k1);
        for i in 0..n {
            s.xt[i] = x[i] + 0.5 * h * s.k1[i];
        }
        g.eval_into(&s.xt, u, &mut s.k2);
        for i in 0..n {
            s.xt[i] = x[i] + 0.5 * h * s.k2[i];
        }
        g.eval_into(&s.xt, u, &mut s.k3);
        for i in 0..n {
            s.xt[i] = x[i] + h * s.k3[i];
        }
        g.eval_into(&s.xt, u, &mut s.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
        }
    }
}

/// Integrates the dynamics under a piecewise-constant control with one RK4
/// substep per control interval and the default blow-up guard.
pub fn integrate(g: &VectorField, u: &ControlSignal, x0: &[f64]) -> Result<Trajectory> {
    integrate_with(g, u, x0, 1, DEFAULT_BLOW_UP)
}

/// [`integrate`] with explicit substep count and blow-up guard.
pub fn integrate_with(
    g: &VectorField,
    u: &ControlSignal,
    x0: &[f64],
    substeps: usize,
    blow_up: f64,
) -> Result<Trajectory> {
    if x0.len() != g.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} coordinates, field '{}' expects {}",
            x0.len(),
            g.label(),
            g.state_dim()
        )));
    }
    if u.control_dim() != g.control_dim() {
        return Err(Error::DimensionMismatch(format!(
            "control has dimension {}, field '{}' expects {}",
            u.control_dim(),
            g.label(),
            g.control_dim()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }

    let n = g.state_dim();
    let k_count = u.intervals();
    let dt = u.dt();
    let mut scratch = Rk4Scratch::new(n);
    let mut x = x0.to_vec();
    let mut times = Vec::with_capacity(k_count + 1);
    let mut states = Vec::with_capacity((k_count + 1) * n);
    times.push(u.knot_time(0));
    states.extend_from_slice(&x);
    for k in 0..k_count {
        rk4_interval(g, &mut x, u.value(k), dt, substeps, &mut scratch);
        let t = u.knot_time(k + 1);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > blow_up {
            return Err(Error::Diverged {
                time: t,
                guard: blow_up,
            });
        }
        times.push(t);
        states.extend_from_slice(&x);
    }
    Ok(Trajectory {
        state_dim: n,
        times,
        states,
    })
}

/// One trajectory per mixture atom under a shared control.
pub fn integrate_mixture(
    p: &ControlProblem,
    mix: &Mixture,
    u: &ControlSignal,
    x0: &[f64],
) -> Result<Vec<Trajectory>> {
    mix.atoms()
        .iter()
        .map(|g| integrate_with(g, u, x0, p.rk_substeps, p.blow_up))
        .collect()
}

/// Trapezoidal running cost plus terminal cost along one trajectory.
fn cost_of_trajectory(p: &ControlProblem, traj: &Trajectory, u: &ControlSignal) -> Result<f64> {
    let dt = u.dt();
    let mut integral = 0.0;
    for k in 0..u.intervals() {
        let uk = u.value(k);
        let a = p.running_cost(traj.state(k), uk);
        let b = p.running_cost(traj.state(k + 1), uk);
        integral += 0.5 * dt * (a + b);
    }
    let total = integral + p.terminal_cost(traj.terminal_state());
    if !total.is_finite() {
        return Err(Error::NonFinite("cost".into()));
    }
    Ok(total)
}

fn check_problem_dims(p: &ControlProblem, g: &VectorField, u: &ControlSignal, x0: &[f64]) -> Result<()> {
    if p.state_dim != g.state_dim()
        || p.control_dim() != g.control_dim()
        || u.control_dim() != p.control_dim()
        || x0.len() != p.state_dim
    {
        return Err(Error::DimensionMismatch(format!(
            "problem ({}, {}), field '{}' ({}, {}), control dim {}, x0 len {}",
            p.state_dim,
            p.control_dim(),
            g.label(),
            g.state_dim(),
            g.control_dim(),
            u.control_dim(),
            x0.len()
        )));
    }
    Ok(())
}

/// Cost of one dynamics under a control from `x0`.
pub fn cost_single(
    p: &ControlProblem,
    g: &VectorField,
    u: &ControlSignal,
    x0: &[f64],
) -> Result<f64> {
    check_problem_dims(p, g, u, x0)?;
    let traj = integrate_with(g, u, x0, p.rk_substeps, p.blow_up)?;
    cost_of_trajectory(p, &traj, u)
}

/// Weighted average of per-atom costs under a shared control.
///
/// Exactly linear in the mixture weights; reduces to [`cost_single`] for a
/// Dirac mixture.
pub fn cost_averaged(
    p: &ControlProblem,
    mix: &Mixture,
    u: &ControlSignal,
    x0: &[f64],
) -> Result<f64> {
    let mut total = 0.0;
    for (g, &w) in mix.atoms().iter().zip(mix.weights()) {
        total += w * cost_single(p, g, u, x0)?;
    }
    Ok(total)
}

fn fd_step(scale: f64) -> f64 {
    FD_STEP * (1.0 + scale.abs())
}

/// Gradient of the running cost in its state argument, by central differences.
fn running_grad_x(p: &ControlProblem, x: &[f64], u: &[f64], buf: &mut [f64], out: &mut [f64]) {
    buf.copy_from_slice(x);
    for j in 0..x.len() {
        let h = fd_step(x[j]);
        buf[j] = x[j] + h;
        let fp = p.running_cost(buf, u);
        buf[j] = x[j] - h;
        let fm = p.running_cost(buf, u);
        buf[j] = x[j];
        out[j] = (fp - fm) / (2.0 * h);
    }
}

fn running_grad_u(p: &ControlProblem, x: &[f64], u: &[f64], buf: &mut [f64], out: &mut [f64]) {
    buf.copy_from_slice(u);
    for j in 0..u.len() {
        let h = fd_step(u[j]);
        buf[j] = u[j] + h;
        let fp = p.running_cost(x, buf);
        buf[j] = u[j] - h;
        let fm = p.running_cost(x, buf);
        buf[j] = u[j];
        out[j] = (fp - fm) / (2.0 * h);
    }
}

fn terminal_grad(p: &ControlProblem, x: &[f64], buf: &mut [f64], out: &mut [f64]) {
    buf.copy_from_slice(x);
    for j in 0..x.len() {
        let h = fd_step(x[j]);
        buf[j] = x[j] + h;
        let fp = p.terminal_cost(buf);
        buf[j] = x[j] - h;
        let fm = p.terminal_cost(buf);
        buf[j] = x[j];
        out[j] = (fp - fm) / (2.0 * h);
    }
}

/// Gradient of the discretized averaged cost with respect to the stacked
/// control values, shaped `K x m` row-major.
///
/// Reverse sweep over the transcribed dynamics: the Jacobians of each
/// per-interval RK4 map are formed by central differences, so the result
/// matches central finite differences of [`cost_averaged`] itself.
pub fn adjoint_gradient(
    p: &ControlProblem,
    mix: &Mixture,
    u: &ControlSignal,
    x0: &[f64],
) -> Result<Vec<f64>> {
    let n = p.state_dim;
    let m = p.control_dim();
    let k_count = u.intervals();
    let dt = u.dt();
    let mut grad = vec![0.0; k_count * m];

    let mut scratch = Rk4Scratch::new(n);
    let mut a = vec![0.0; n];
    let mut a_next = vec![0.0; n];
    let mut jac_x = vec![0.0; n * n];
    let mut jac_u = vec![0.0; n * m];
    let mut xp = vec![0.0; n];
    let mut xm = vec![0.0; n];
    let mut up = vec![0.0; m];
    let mut gx = vec![0.0; n];
    let mut gx_prev = vec![0.0; n];
    let mut gu = vec![0.0; m];
    let mut gu2 = vec![0.0; m];
    let mut buf_x = vec![0.0; n];
    let mut buf_u = vec![0.0; m];

    for (g, &w) in mix.atoms().iter().zip(mix.weights()) {
        check_problem_dims(p, g, u, x0)?;
        let traj = integrate_with(g, u, x0, p.rk_substeps, p.blow_up)?;

        // Seed at the final knot: terminal cost plus the trapezoid's right
        // endpoint of the last interval.
        let x_last = traj.state(k_count);
        terminal_grad(p, x_last, &mut buf_x, &mut a);
        running_grad_x(p, x_last, u.value(k_count - 1), &mut buf_x, &mut gx);
        for i in 0..n {
            a[i] = w * (a[i] + 0.5 * dt * gx[i]);
        }

        for k in (0..k_count).rev() {
            let xk = traj.state(k);
            let xk1 = traj.state(k + 1);
            let uk = u.value(k);

            // Jacobians of the interval map x_{k+1} = Phi(x_k, u_k).
            for j in 0..n {
                let h = fd_step(xk[j]);
                xp.copy_from_slice(xk);
                xp[j] += h;
                rk4_interval(g, &mut xp, uk, dt, p.rk_substeps, &mut scratch);
                xm.copy_from_slice(xk);
                xm[j] -= h;
                rk4_interval(g, &mut xm, uk, dt, p.rk_substeps, &mut scratch);
                for i in 0..n {
                    jac_x[i * n + j] = (xp[i] - xm[i]) / (2.0 * h);
                }
            }
            for j in 0..m {
                let h = fd_step(uk[j]);
                up.copy_from_slice(uk);
                up[j] += h;
                xp.copy_from_slice(xk);
                rk4_interval(g, &mut xp, &up, dt, p.rk_substeps, &mut scratch);
                up[j] = uk[j] - h;
                xm.copy_from_slice(xk);
                rk4_interval(g, &mut xm, &up, dt, p.rk_substeps, &mut scratch);
                up[j] = uk[j];
                for i in 0..n {
                    jac_u[i * m + j] = (xp[i] - xm[i]) / (2.0 * h);
                }
            }
            if jac_x.iter().chain(jac_u.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "step-map Jacobian at interval {k} for atom '{}'",
                    g.label()
                )));
            }

            // d/d u_k of the interval's trapezoid term, both endpoints.
            running_grad_u(p, xk, uk, &mut buf_u, &mut gu);
            running_grad_u(p, xk1, uk, &mut buf_u, &mut gu2);
            for j in 0..m {
                let mut acc = w * 0.5 * dt * (gu[j] + gu2[j]);
                for i in 0..n {
                    acc += jac_u[i * m + j] * a[i];
                }
                grad[k * m + j] += acc;
            }

            if k > 0 {
                // x_k feeds the step map, its own trapezoid term, and the
                // right endpoint of the previous interval's term.
                running_grad_x(p, xk, uk, &mut buf_x, &mut gx);
                running_grad_x(p, xk, u.value(k - 1), &mut buf_x, &mut gx_prev);
                for j in 0..n {
                    let mut acc = w * 0.5 * dt * (gx[j] + gx_prev[j]);
                    for i in 0..n {
                        acc += jac_x[i * n + j] * a[i];
                    }
                    a_next[j] = acc;
                }
                std::mem::swap(&mut a, &mut a_next);
            }
        }
    }
    Ok(grad)
}

/// Writes a multi-trajectory as CSV: `time` column, then per-atom state
/// coordinates `x{atom}_{coord}`, both 1-based.
pub fn write_trajectory_csv<W: Write>(out: &mut W, trajectories: &[Trajectory]) -> Result<()> {
    let Some(first) = trajectories.first() else {
        return Err(Error::InvalidDomain("no trajectories to write".into()));
    };
    for t in trajectories {
        if t.times() != first.times() {
            return Err(Error::GridMismatch(
                "trajectories do not share a time grid".into(),
            ));
        }
    }
    write!(out, "time")?;
    for (a, t) in trajectories.iter().enumerate() {
        for c in 0..t.state_dim() {
            write!(out, ",x{}_{}", a + 1, c + 1)?;
        }
    }
    writeln!(out)?;
    for k in 0..first.len() {
        write!(out, "{}", numfmt::sig(first.times()[k], 6))?;
        for t in trajectories {
            for v in t.state(k) {
                write!(out, ",{}", numfmt::sig(*v, 6))?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Axis-aligned box enclosing every state the given trajectories visit,
/// inflated by `inflate` absolutely (and 5% of each coordinate range), with
/// the supplied control bounds.
pub fn trajectory_hull_box(
    trajectories: &[Trajectory],
    control_lo: &[f64],
    control_hi: &[f64],
    inflate: f64,
) -> Result<DomainBox> {
    let Some(first) = trajectories.first() else {
        return Err(Error::InvalidDomain("no trajectories given".into()));
    };
    let n = first.state_dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for t in trajectories {
        for k in 0..t.len() {
            for (d, &v) in t.state(k).iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
    }
    for d in 0..n {
        let pad = inflate + 0.05 * (hi[d] - lo[d]);
        lo[d] -= pad;
        hi[d] += pad;
    }
    DomainBox::new(lo, hi, control_lo.to_vec(), control_hi.to_vec())
}

/// Writes the control signal as CSV with columns `time,u_1..u_m`; the final
/// knot repeats the last interval's value.
pub fn write_control_csv<W: Write>(out: &mut W, u: &ControlSignal) -> Result<()> {
    write!(out, "time")?;
    for c in 0..u.control_dim() {
        write!(out, ",u_{}", c + 1)?;
    }
    writeln!(out)?;
    for k in 0..=u.intervals() {
        let row = u.value(k.min(u.intervals() - 1));
        write!(out, "{}", numfmt::sig(u.knot_time(k), 6))?;
        for v in row {
            write!(out, ",{}", numfmt::sig(*v, 6))?;
        }
        writeln!(out)?;
    }
    Ok(())
}
