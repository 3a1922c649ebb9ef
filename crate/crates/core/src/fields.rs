//! Candidate dynamics as evaluable vector fields, plus sup-norm distances
//! between fields sampled on compact state/control boxes.
//!
//! A [`VectorField`] is a black-box map `(x, u) -> dx/dt` with optional
//! declared Lipschitz metadata in `x` (uniform in `u`). Distances between
//! fields are taken in the Euclidean norm, maximized over a uniform sample
//! grid of a [`DomainBox`]; the grid always contains the box corners, so the
//! maximum is exact for affine fields.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Compact state/control box on which sup norms are sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    state_lo: Vec<f64>,
    state_hi: Vec<f64>,
    control_lo: Vec<f64>,
    control_hi: Vec<f64>,
    samples_per_dim: usize,
}

/// Default per-dimension sample count, chosen by total sampled dimensions.
pub fn default_samples_per_dim(total_dims: usize) -> usize {
    match total_dims {
        0..=2 => 201,
        3 => 41,
        _ => 21,
    }
}

impl DomainBox {
    /// Box with the default sample resolution for its dimension count.
    pub fn new(
        state_lo: Vec<f64>,
        state_hi: Vec<f64>,
        control_lo: Vec<f64>,
        control_hi: Vec<f64>,
    ) -> Result<Self> {
        let samples = default_samples_per_dim(state_lo.len() + control_lo.len());
        Self::with_samples(state_lo, state_hi, control_lo, control_hi, samples)
    }

    pub fn with_samples(
        state_lo: Vec<f64>,
        state_hi: Vec<f64>,
        control_lo: Vec<f64>,
        control_hi: Vec<f64>,
        samples_per_dim: usize,
    ) -> Result<Self> {
        if state_lo.len() != state_hi.len() || control_lo.len() != control_hi.len() {
            return Err(Error::InvalidDomain(
                "bound vectors must have matching lengths".into(),
            ));
        }
        if state_lo.is_empty() {
            return Err(Error::InvalidDomain("state box must have dimension >= 1".into()));
        }
        if samples_per_dim < 2 {
            return Err(Error::InvalidDomain(format!(
                "samples_per_dim must be >= 2, got {samples_per_dim}"
            )));
        }
        for (which, (lo, hi)) in [
            ("state", (&state_lo, &state_hi)),
            ("control", (&control_lo, &control_hi)),
        ] {
            for (d, (&a, &b)) in lo.iter().zip(hi.iter()).enumerate() {
                if !a.is_finite() || !b.is_finite() || a >= b {
                    return Err(Error::InvalidDomain(format!(
                        "{which} bounds must satisfy lo < hi and be finite (coordinate {d}: [{a}, {b}])"
                    )));
                }
            }
        }
        Ok(Self {
            state_lo,
            state_hi,
            control_lo,
            control_hi,
            samples_per_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_lo.len()
    }

    pub fn control_dim(&self) -> usize {
        self.control_lo.len()
    }

    pub fn samples_per_dim(&self) -> usize {
        self.samples_per_dim
    }

    pub fn state_bounds(&self) -> (&[f64], &[f64]) {
        (&self.state_lo, &self.state_hi)
    }

    pub fn control_bounds(&self) -> (&[f64], &[f64]) {
        (&self.control_lo, &self.control_hi)
    }

    fn axes(&self) -> Vec<Vec<f64>> {
        self.state_lo
            .iter()
            .zip(&self.state_hi)
            .chain(self.control_lo.iter().zip(&self.control_hi))
            .map(|(&lo, &hi)| linspace(lo, hi, self.samples_per_dim))
            .collect()
    }
}

/// Uniformly spaced points including both endpoints.
pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    debug_assert!(n >= 2);
    let mut v = Vec::with_capacity(n);
    let step = (hi - lo) / (n - 1) as f64;
    for i in 0..n {
        v.push(lo + step * i as f64);
    }
    // Pin the last sample to the corner exactly.
    v[n - 1] = hi;
    v
}

type EvalFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

/// An evaluable dynamics `g(x, u)` with optional Lipschitz metadata in `x`.
#[derive(Clone)]
pub struct VectorField {
    state_dim: usize,
    control_dim: usize,
    label: String,
    lipschitz_x: Option<f64>,
    eval: Arc<EvalFn>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("label", &self.label)
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("lipschitz_x", &self.lipschitz_x)
            .finish()
    }
}

impl VectorField {
    /// Wraps an arbitrary evaluation closure writing `g(x, u)` into `out`.
    pub fn from_fn<F>(state_dim: usize, control_dim: usize, label: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            state_dim,
            control_dim,
            label: label.into(),
            lipschitz_x: None,
            eval: Arc::new(eval),
        }
    }

    /// One-dimensional state and control from a plain scalar map.
    pub fn scalar<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::from_fn(1, 1, label, move |x, u, out| out[0] = f(x[0], u[0]))
    }

    /// Declares an upper bound on the Lipschitz constant in `x`.
    pub fn with_lipschitz(mut self, lipschitz_x: f64) -> Self {
        self.lipschitz_x = Some(lipschitz_x);
        self
    }

    /// Affine-in-state field `x' = A x + b(u)` with `A` given row-major.
    ///
    /// The declared Lipschitz constant is the spectral norm of `A`, which is
    /// exact for this family.
    pub fn affine<F>(
        state_dim: usize,
        control_dim: usize,
        a: Vec<f64>,
        input: F,
        label: impl Into<String>,
    ) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if a.len() != state_dim * state_dim {
            return Err(Error::DimensionMismatch(format!(
                "affine matrix has {} entries, expected {}",
                a.len(),
                state_dim * state_dim
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("affine matrix entries".into()));
        }
        let norm = spectral_norm(&a, state_dim);
        let n = state_dim;
        let matrix = a;
        let field = Self::from_fn(state_dim, control_dim, label, move |x, u, out| {
            input(u, out);
            for i in 0..n {
                let mut acc = out[i];
                for j in 0..n {
                    acc += matrix[i * n + j] * x[j];
                }
                out[i] = acc;
            }
        });
        Ok(field.with_lipschitz(norm))
    }

    /// Fully linear field `x' = A x + B u + c` from numeric parameters.
    pub fn linear(
        state_dim: usize,
        control_dim: usize,
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if b.len() != state_dim * control_dim || c.len() != state_dim {
            return Err(Error::DimensionMismatch(format!(
                "input matrix/offset sizes {}x{} and {} do not match dims ({state_dim}, {control_dim})",
                b.len() / control_dim.max(1),
                control_dim,
                c.len()
            )));
        }
        let (n, m) = (state_dim, control_dim);
        Self::affine(
            state_dim,
            control_dim,
            a,
            move |u, out| {
                for i in 0..n {
                    let mut acc = c[i];
                    for j in 0..m {
                        acc += b[i * m + j] * u[j];
                    }
                    out[i] = acc;
                }
            },
            label,
        )
    }

    /// Scalar family `x' = lambda * x + sin(x) + u`.
    ///
    /// `d/dx = lambda + cos(x)`, so the Lipschitz constant is `|lambda| + 1`.
    pub fn scalar_lambda_sin(lambda: f64) -> Self {
        Self::scalar(format!("lambda={lambda}"), move |x, u| lambda * x + x.sin() + u)
            .with_lipschitz(lambda.abs() + 1.0)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn lipschitz_x(&self) -> Option<f64> {
        self.lipschitz_x
    }

    /// Evaluates the field into a caller-provided buffer of length `state_dim`.
    #[inline]
    pub fn eval_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.state_dim);
        debug_assert_eq!(u.len(), self.control_dim);
        debug_assert_eq!(out.len(), self.state_dim);
        (self.eval)(x, u, out);
    }

    /// Allocating convenience wrapper around [`eval_into`](Self::eval_into).
    pub fn eval(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        self.eval_into(x, u, &mut out);
        out
    }

    pub(crate) fn same_dims(&self, other: &VectorField) -> Result<()> {
        if self.state_dim != other.state_dim || self.control_dim != other.control_dim {
            return Err(Error::DimensionMismatch(format!(
                "fields '{}' ({}, {}) and '{}' ({}, {})",
                self.label,
                self.state_dim,
                self.control_dim,
                other.label,
                other.state_dim,
                other.control_dim
            )));
        }
        Ok(())
    }

    pub(crate) fn check_box(&self, b: &DomainBox) -> Result<()> {
        if self.state_dim != b.state_dim() || self.control_dim != b.control_dim() {
            return Err(Error::DimensionMismatch(format!(
                "field '{}' ({}, {}) vs box ({}, {})",
                self.label,
                self.state_dim,
                self.control_dim,
                b.state_dim(),
                b.control_dim()
            )));
        }
        Ok(())
    }
}

/// The five candidate dynamics of the scalar `lambda x + sin x + u` family,
/// true dynamics first.
pub fn test1_family() -> Vec<VectorField> {
    [0.0, 1.0, -1.0, 0.5, -0.5]
        .into_iter()
        .map(VectorField::scalar_lambda_sin)
        .collect()
}

/// Three planar affine candidates `x' = A_i x + (cos u, sin u)`, true dynamics
/// first.
pub fn test2_family() -> Vec<VectorField> {
    let matrices: [(&str, [f64; 4]); 3] = [
        ("A1", [1.0, 0.0, 0.0, 1.0]),
        ("A2", [0.5, 0.0, 0.0, 2.0]),
        ("A3", [0.5, -0.5, 0.5, 0.5]),
    ];
    matrices
        .into_iter()
        .map(|(label, a)| {
            VectorField::affine(
                2,
                1,
                a.to_vec(),
                |u, out| {
                    out[0] = u[0].cos();
                    out[1] = u[0].sin();
                },
                label,
            )
            .expect("fixed-size matrix")
        })
        .collect()
}

/// Spectral norm of a row-major `n x n` matrix.
///
/// Closed form for n <= 2, cyclic Jacobi on `A^T A` otherwise.
pub fn spectral_norm(a: &[f64], n: usize) -> f64 {
    assert_eq!(a.len(), n * n);
    match n {
        0 => 0.0,
        1 => a[0].abs(),
        2 => {
            // Eigenvalues of A^T A for the 2x2 case.
            let (a11, a12, a21, a22) = (a[0], a[1], a[2], a[3]);
            let p = a11 * a11 + a21 * a21;
            let q = a11 * a12 + a21 * a22;
            let r = a12 * a12 + a22 * a22;
            let mid = 0.5 * (p + r);
            let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
            (mid + rad).max(0.0).sqrt()
        }
        _ => {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += a[k * n + i] * a[k * n + j];
                    }
                    m[i * n + j] = acc;
                }
            }
            jacobi_max_eigenvalue(&mut m, n).max(0.0).sqrt()
        }
    }
}

fn jacobi_max_eigenvalue(m: &mut [f64], n: usize) -> f64 {
    for _sweep in 0..50 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (m[q * n + q] - m[p * n + p]) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).fold(f64::NEG_INFINITY, f64::max)
}

/// Maximum over the sampled box of the Euclidean distance `|g(x,u) - f(x,u)|`.
///
/// Monotone nondecreasing under nested grid refinement; exact for affine
/// fields because the sample grid contains the box corners.
pub fn sup_distance(g: &VectorField, f: &VectorField, b: &DomainBox) -> Result<f64> {
    g.same_dims(f)?;
    g.check_box(b)?;
    let axes = b.axes();
    let n = b.state_dim();
    let m = b.control_dim();
    let total: usize = axes.iter().map(Vec::len).product();

    let mut x = vec![0.0; n];
    let mut u = vec![0.0; m];
    let mut gv = vec![0.0; n];
    let mut fv = vec![0.0; n];
    let mut best = 0.0f64;
    for idx in 0..total {
        decode_point(&axes, idx, &mut x, &mut u);
        g.eval_into(&x, &u, &mut gv);
        f.eval_into(&x, &u, &mut fv);
        let mut d2 = 0.0;
        for i in 0..n {
            let diff = gv[i] - fv[i];
            d2 += diff * diff;
        }
        if !d2.is_finite() {
            return Err(Error::NonFinite(format!(
                "|{} - {}| at x = {:?}, u = {:?}",
                g.label, f.label, x, u
            )));
        }
        if d2 > best {
            best = d2;
        }
    }
    Ok(best.sqrt())
}

fn decode_point(axes: &[Vec<f64>], mut idx: usize, x: &mut [f64], u: &mut [f64]) {
    let n = x.len();
    for d in (0..axes.len()).rev() {
        let axis = &axes[d];
        let coord = axis[idx % axis.len()];
        idx /= axis.len();
        if d < n {
            x[d] = coord;
        } else {
            u[d - n] = coord;
        }
    }
}

// Pair scans are quadratic in the number of state samples; above this many
// state points the scan uses a deterministic stride subset.
const MAX_PAIR_POINTS: usize = 4096;

/// Largest sampled difference quotient `|g(x,u) - g(y,u)| / |x - y|`.
///
/// A lower bound on the true Lipschitz constant of `g` in `x` on the box.
pub fn estimate_lipschitz(g: &VectorField, b: &DomainBox) -> Result<f64> {
    g.check_box(b)?;
    let n = b.state_dim();
    let state_axes: Vec<Vec<f64>> = {
        let (lo, hi) = b.state_bounds();
        lo.iter()
            .zip(hi)
            .map(|(&a, &c)| linspace(a, c, b.samples_per_dim()))
            .collect()
    };
    let control_axes: Vec<Vec<f64>> = {
        let (lo, hi) = b.control_bounds();
        lo.iter()
            .zip(hi)
            .map(|(&a, &c)| linspace(a, c, b.samples_per_dim()))
            .collect()
    };

    let mut states = enumerate_points(&state_axes);
    if states.len() > MAX_PAIR_POINTS {
        let stride = states.len().div_ceil(MAX_PAIR_POINTS);
        states = states.into_iter().step_by(stride).collect();
    }
    let controls = enumerate_points(&control_axes);

    let per_control: Vec<Result<f64>> = controls
        .par_iter()
        .map(|u| {
            let mut values = vec![0.0; states.len() * n];
            let mut buf = vec![0.0; n];
            for (s, x) in states.iter().enumerate() {
                g.eval_into(x, u, &mut buf);
                if buf.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "{} at x = {:?}, u = {:?}",
                        g.label, x, u
                    )));
                }
                values[s * n..(s + 1) * n].copy_from_slice(&buf);
            }
            let mut best = 0.0f64;
            for i in 0..states.len() {
                for j in (i + 1)..states.len() {
                    let mut dx2 = 0.0;
                    for d in 0..n {
                        let diff = states[i][d] - states[j][d];
                        dx2 += diff * diff;
                    }
                    if dx2 == 0.0 {
                        continue;
                    }
                    let mut dg2 = 0.0;
                    for d in 0..n {
                        let diff = values[i * n + d] - values[j * n + d];
                        dg2 += diff * diff;
                    }
                    let ratio = dg2 / dx2;
                    if ratio > best {
                        best = ratio;
                    }
                }
            }
            Ok(best)
        })
        .collect();

    let mut best = 0.0f64;
    for r in per_control {
        best = best.max(r?);
    }
    Ok(best.sqrt())
}

fn enumerate_points(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut p = vec![0.0; axes.len()];
        for d in (0..axes.len()).rev() {
            p[d] = axes[d][rem % axes[d].len()];
            rem /= axes[d].len();
        }
        out.push(p);
    }
    out
}

/// Relative slack allowed when comparing sampled quotients against declared
/// Lipschitz constants.
pub const LIPSCHITZ_SLACK: f64 = 1e-9;

/// Samples the field over the box: every value must be finite, and if a
/// Lipschitz constant is declared the sampled quotients must not exceed it.
pub fn check_field(g: &VectorField, b: &DomainBox) -> Result<()> {
    let estimate = estimate_lipschitz(g, b)?;
    if let Some(declared) = g.lipschitz_x {
        if estimate > declared * (1.0 + LIPSCHITZ_SLACK) {
            return Err(Error::InvalidDomain(format!(
                "field '{}' declares Lipschitz constant {declared} but a sampled quotient reached {estimate}",
                g.label
            )));
        }
    }
    Ok(())
}
