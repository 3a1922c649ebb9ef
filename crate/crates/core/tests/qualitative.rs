//! Qualitative behavior of the built-in instances: the shapes the optimal
//! solutions must have regardless of the horizon length.

use avoc::experiments;
use avoc::measures::Mixture;
use avoc::sim::integrate_mixture;
use avoc::solve::solve;

/// The scalar instance rewards pushing every candidate trajectory to the
/// right, but the quadratic control penalty keeps the optimizer strictly
/// inside the control box: the control is positive, never pinned at +1,
/// and not constant.
#[test]
fn test1_optimal_control_is_interior_and_nonconstant() {
    let spec = experiments::test1();
    let mix = Mixture::new(
        spec.atoms.clone(),
        spec.trajectory_weights.clone().unwrap(),
    )
    .unwrap();
    let result = solve(&spec.problem, &mix, &[1.0], &spec.solve_options).unwrap();
    let values = result.control.values();
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min > 0.0, "control dips to {min}, expected positive steering");
    assert!(max < 1.0, "control pinned at the +1 boundary");
    assert!(
        max - min > 1e-3,
        "control is essentially constant ({min}..{max})"
    );
}

/// With equal weights on the three planar candidates, one shared control
/// must steer all three trajectories toward the origin; since no control is
/// optimal for all three at once, none of them reaches it.
#[test]
fn test2_equal_weights_steers_all_trajectories_toward_origin() {
    let spec = experiments::test2();
    let x0 = [-0.4, 0.3];
    let mix = Mixture::new(
        spec.atoms.clone(),
        spec.trajectory_weights.clone().unwrap(),
    )
    .unwrap();
    let result = solve(&spec.problem, &mix, &x0, &spec.solve_options).unwrap();
    let trajectories = integrate_mixture(&spec.problem, &mix, &result.control, &x0).unwrap();
    let initial_norm = (x0[0] * x0[0] + x0[1] * x0[1]).sqrt();
    for (traj, atom) in trajectories.iter().zip(mix.atoms()) {
        let terminal: f64 = traj
            .terminal_state()
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!(
            terminal < initial_norm,
            "atom '{}' ends at distance {terminal}, no closer than start {initial_norm}",
            atom.label()
        );
        let closest = (0..traj.len())
            .map(|k| traj.state(k).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(
            closest > 1e-3,
            "atom '{}' passes through the origin (min distance {closest})",
            atom.label()
        );
    }
}
