use std::sync::Arc;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};

use super::*;
use crate::dynamics::{AffinePerturbation, Grid};
use crate::geometry::HalfSpace;

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

/// Planar point steered by `ẋ = u` below the line `x_1 <= 10`.
fn steering(k: usize) -> DiscreteProblem {
    let p = Polyhedron::new(vec![HalfSpace::new(dv(&[1.0, 0.0]), 10.0).unwrap()]).unwrap();
    let g = AffinePerturbation::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
    DiscreteProblem::new(
        p,
        Arc::new(g),
        ControlBox::uniform(2, -1.0, 1.0).unwrap(),
        Arc::new(HalfSquaredDistance::origin(2)),
        dv(&[3.0, -2.0]),
        k,
    )
    .unwrap()
}

/// Drift `ẋ = (1, 0)` that ignores the control.
fn drifting(k: usize) -> DiscreteProblem {
    let p = Polyhedron::new(vec![HalfSpace::new(dv(&[1.0, 0.0]), 10.0).unwrap()]).unwrap();
    let g = AffinePerturbation::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), dv(&[1.0, 0.0])).unwrap();
    DiscreteProblem::new(
        p,
        Arc::new(g),
        ControlBox::uniform(1, -1.0, 1.0).unwrap(),
        Arc::new(HalfSquaredDistance::origin(2)),
        dv(&[0.0, 0.0]),
        k,
    )
    .unwrap()
}

fn localized(prob: DiscreteProblem, u: &[f64], t: f64, eps: f64) -> (DiscreteProblem, DiscreteSolution) {
    let sol = prob.evaluate(ControlSignal::constant(dv(u), prob.k), t).unwrap();
    let reference = Reference::new(sol.trajectory.clone(), sol.controls.clone()).unwrap();
    let prob = prob.with_reference(reference, eps).unwrap();
    let sol = prob.evaluate(sol.controls.clone(), t).unwrap();
    (prob, sol)
}

#[test]
fn cost_of_reference_is_terminal_cost() {
    let (prob, sol) = localized(steering(8), &[-0.5, 0.25], 2.0, 1.0);
    let c = cost_jk(&sol.trajectory, &sol.controls, &prob);
    assert!(c.tracking_included);
    assert_eq!(c.tracking, 0.0);
    assert_eq!(c.time_penalty, 0.0);
    assert_eq!(c.total, prob.cost.value(sol.trajectory.terminal_state(), 2.0));
}

#[test]
fn control_offset_costs_t_bar_times_square() {
    let (prob, _) = localized(drifting(5), &[0.2], 3.0, 10.0);
    let shifted = prob.evaluate(ControlSignal::constant(dv(&[0.7]), 5), 3.0).unwrap();
    let c = cost_jk(&shifted.trajectory, &shifted.controls, &prob);
    let phi = 0.5 * 9.0;
    assert_relative_eq!(c.total, phi + 3.0 * 0.25, epsilon = 1e-12);
}

#[test]
fn cost_without_reference_is_flagged() {
    let prob = steering(4);
    let sol = prob.evaluate(ControlSignal::constant(dv(&[0.0, 0.0]), 4), 1.0).unwrap();
    let c = cost_jk(&sol.trajectory, &sol.controls, &prob);
    assert!(!c.tracking_included);
    assert_eq!(c.total, 6.5);
}

#[test]
fn feasibility_of_reference_and_violations() {
    let (prob, sol) = localized(steering(6), &[1.0, 0.0], 3.0, 1.0);
    let rep = feasibility_report(&sol.trajectory, &sol.controls, &prob, FEASIBILITY_REPORT_TOL);
    assert!(rep.pass, "{rep:?}");
    assert_eq!(rep.worst(), 0.0);

    let mut bad = sol.controls.values().to_vec();
    bad[3] = dv(&[1.25, 0.0]);
    let bad = ControlSignal::new(bad).unwrap();
    let rep = feasibility_report(&sol.trajectory, &bad, &prob, FEASIBILITY_REPORT_TOL);
    assert_relative_eq!(rep.get("control_box").unwrap().residual, 0.25);

    let grid = Grid::uniform(1.0, 1).unwrap();
    let over = Trajectory::from_velocities(grid, dv(&[9.0, 0.0]), vec![dv(&[1.5, 0.0])], vec![dv(&[0.0])]).unwrap();
    let ctrl = ControlSignal::constant(dv(&[1.0, 0.0]), 1);
    let free = steering(1);
    let rep = feasibility_report(&over, &ctrl, &free, FEASIBILITY_REPORT_TOL);
    assert_relative_eq!(rep.get("terminal_constraint").unwrap().residual, 0.5, epsilon = 1e-12);
}

#[test]
fn xi_and_rho_vanish_on_reference() {
    let (prob, sol) = localized(steering(7), &[0.3, -0.9], 1.5, 1.0);
    for xi in xi_terms(&sol.trajectory, &sol.controls, &prob).unwrap() {
        assert!(xi.u.amax() < 1e-15);
        assert!(xi.y.amax() < 1e-15);
    }
    assert_eq!(rho_term(&sol.trajectory, &sol.controls, &prob).unwrap(), 0.0);
    assert_eq!(xi_terms(&sol.trajectory, &sol.controls, &steering(7)).unwrap_err(), OcpError::NoReference);
}

#[test]
fn xi_of_velocity_offset_is_step_times_offset() {
    let (prob, sol) = localized(steering(4), &[0.5, 0.5], 2.0, 1.0);
    let mut vel = sol.trajectory.velocities.clone();
    vel[2] += dv(&[0.1, -0.2]);
    let t = Trajectory::from_velocities(sol.trajectory.grid.clone(), sol.trajectory.states[0].clone(), vel, sol.trajectory.cone_multipliers.clone())
        .unwrap();
    let xi = xi_terms(&t, &sol.controls, &prob).unwrap();
    assert_relative_eq!(xi[2].y[0], 0.5 * 0.1, epsilon = 1e-15);
    assert_relative_eq!(xi[2].y[1], -0.5 * 0.2, epsilon = 1e-15);
    assert!(xi[1].y.amax() < 1e-15);
}

#[test]
fn rho_for_single_step() {
    let (prob, _) = localized(steering(1), &[0.5, 0.0], 1.0, 1.0);
    let cand = prob.evaluate(ControlSignal::constant(dv(&[0.0, 0.5]), 1), 1.0).unwrap();
    // -|(V_1 - ẋ̄(t_1), u_0 - ū(t_1))|^2 with V = u
    let expected = -(0.25 + 0.25 + 0.25 + 0.25);
    assert_relative_eq!(rho_term(&cand.trajectory, &cand.controls, &prob).unwrap(), expected, epsilon = 1e-15);
}

#[test]
fn hbar_examples() {
    let prob = steering(3);
    let sol = prob.evaluate(ControlSignal::constant(dv(&[0.2, -0.4]), 3), 1.0).unwrap();
    assert_eq!(hbar(&sol.trajectory, &vec![DVector::zeros(2); 4]), 0.0);
    let p = dv(&[1.0, 2.0]);
    assert_relative_eq!(hbar(&sol.trajectory, &vec![p.clone(); 4]), 0.2 - 0.8, epsilon = 1e-15);
}

#[test]
fn solve_keeps_a_stationary_point() {
    // zero box: the only admissible control keeps the state fixed
    let mut prob = steering(4);
    prob.control_box = ControlBox::uniform(2, 0.0, 0.0).unwrap();
    let init = prob.evaluate(ControlSignal::constant(dv(&[0.0, 0.0]), 4), 2.0).unwrap();
    let out = solve(&prob, &init, &SolveOptions::default()).unwrap();
    assert_eq!(out.status, SolveStatus::Converged);
    assert_eq!(out.solution.trajectory.states, init.trajectory.states);
    assert_eq!(out.cost_trace, vec![init.cost_value]);
}

#[test]
fn solve_trace_is_monotone_and_descends() {
    let prob = steering(3);
    let init = prob.evaluate(ControlSignal::constant(dv(&[0.0, 0.0]), 3), 1.0).unwrap();
    let out = solve(&prob, &init, &SolveOptions::default()).unwrap();
    assert!(out.cost_trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.solution.cost_value < 1e-10, "{}", out.solution.cost_value);
    let rep = feasibility_report(&out.solution.trajectory, &out.solution.controls, &prob, FEASIBILITY_REPORT_TOL);
    assert!(rep.pass);
}

#[test]
fn solve_reports_budget() {
    let prob = steering(3);
    let init = prob.evaluate(ControlSignal::constant(dv(&[0.0, 0.0]), 3), 1.0).unwrap();
    let opts = SolveOptions {
        max_evaluations: 5,
        ..SolveOptions::default()
    };
    assert_eq!(solve(&prob, &init, &opts).unwrap().status, SolveStatus::BudgetExhausted);
}

#[test]
fn solve_rejects_infeasible_start() {
    let mut prob = steering(2);
    let init = prob.evaluate(ControlSignal::constant(dv(&[0.0, 0.0]), 2), 1.0).unwrap();
    prob.initial_state = dv(&[11.0, 0.0]);
    assert!(matches!(
        solve(&prob, &init, &SolveOptions::default()),
        Err(OcpError::NoFeasiblePoint(_))
    ));
}

#[test]
fn constant_search_reaches_unobstructed_target() {
    let prob = steering(20);
    let opts = ConstantSearchOptions {
        time_bounds: (0.1, 8.0),
        ..ConstantSearchOptions::default()
    };
    let out = solve_constant_control(&prob, &opts).unwrap();
    assert!(out.solution.trajectory.terminal_state().norm() < 1e-4);
    assert!(out.cost_trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn constant_search_is_monotone_in_resolution() {
    let prob = drifting(10);
    let mut last = f64::INFINITY;
    for r in [0.2, 0.1, 0.05] {
        let opts = ConstantSearchOptions {
            resolution: r,
            time_bounds: (0.1, 5.0),
            extra_levels: 2,
            ..ConstantSearchOptions::default()
        };
        let c = solve_constant_control(&prob, &opts).unwrap().solution.cost_value;
        assert!(c <= last);
        last = c;
    }
}
