//! Finite-horizon optimal control under dynamics uncertainty represented by
//! finite-support mixtures of vector fields.
//!
//! The crate computes averaged value functions over mixtures, exact
//! 1-Wasserstein distances between mixtures (ground cost: sup-norm distance
//! between fields on a compact box), the explicit constant bounding the
//! value-function gap by that distance, and convergence studies that track
//! the gap as a mixture concentrates on its true atom.
//!
//! Module layout:
//! - [`fields`]: vector fields, sample boxes, sup-norm distances.
//! - [`measures`]: mixtures and exact optimal transport between them.
//! - [`sim`]: RK4 integration, averaged costs, adjoint gradients.
//! - [`solve`]: projected-gradient multistart solver and a brute-force
//!   oracle.
//! - [`analysis`]: value grids, error bounds, convergence reports.
//! - [`experiments`]: built-in study setups used by the CLI and the
//!   acceptance suite.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod measures;
pub mod sim;
pub mod solve;

pub use error::{Error, Result};
pub use fields::{sup_distance, DomainBox, VectorField};
pub use measures::{dirac_target_w1, wasserstein1, Mixture, TransportPlan};
pub use sim::{adjoint_gradient, cost_averaged, cost_single, integrate, ControlProblem, ControlSignal, Trajectory};
pub use solve::{brute_force_value, solve, SolveOptions, SolveResult};

/// Compact significant-digit formatting shared by every CSV and table writer.
pub mod numfmt {
    /// Formats with `digits` significant digits, plain decimal notation for
    /// moderate magnitudes and exponential otherwise.
    pub fn sig(x: f64, digits: usize) -> String {
        assert!(digits >= 1);
        if x == 0.0 {
            return "0".to_string();
        }
        if !x.is_finite() {
            return x.to_string();
        }
        let exponential = format!("{:.*e}", digits - 1, x);
        let e_pos = exponential.find('e').expect("exponential format");
        let exp: i32 = exponential[e_pos + 1..].parse().expect("exponent");
        if !(-4..digits as i32).contains(&exp) {
            exponential
        } else {
            let decimals = (digits as i32 - 1 - exp).max(0) as usize;
            format!("{:.*}", decimals, x)
        }
    }

    #[cfg(test)]
    mod tests {
        use super::sig;

        #[test]
        fn formats_are_compact_and_stable() {
            assert_eq!(sig(0.0, 6), "0");
            assert_eq!(sig(1.0, 6), "1.00000");
            assert_eq!(sig(0.157, 6), "0.157000");
            assert_eq!(sig(0.75, 6), "0.750000");
            assert_eq!(sig(0.00123, 6), "0.00123000");
            assert_eq!(sig(1.23e-5, 6), "1.23000e-5");
            assert_eq!(sig(-2.5e7, 6), "-2.50000e7");
            assert_eq!(sig(999999.4, 6), "999999");
            assert_eq!(sig(1e3, 6), "1000.00");
        }
    }
}
