mod common;

use common::dv;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sweep_ocp::dynamics::ControlSignal;
use sweep_ocp::geometry::DualIndexRule;
use sweep_ocp::marine::{analytic_two_phase, two_vehicle_scenario};
use sweep_ocp::ocp::{DiscreteProblem, DiscreteSolution};
use sweep_ocp::optimality::{
    recover_multipliers, verify_all, Multipliers, OptimalityError, RecoveryOptions, Status, VerifyOptions,
};

const U_BAR: [f64; 2] = [1.67547, 0.49999];

fn marine(k: usize) -> (DiscreteProblem, DiscreteSolution) {
    let s = two_vehicle_scenario();
    let t = analytic_two_phase(&s, &dv(&U_BAR)).unwrap().terminal_time;
    s.discretized(&dv(&U_BAR), t, k, 1.0).unwrap()
}

fn candidate(prob: &DiscreteProblem, u: [f64; 2], t: f64) -> DiscreteSolution {
    prob.evaluate(ControlSignal::constant(dv(&u), prob.k), t).unwrap()
}

/// Finite-difference `∂g/∂u`, independent of the library jacobians.
fn control_jacobian(prob: &DiscreteProblem, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let d = u.len();
    let mut j = DMatrix::zeros(n, d);
    for l in 0..d {
        let mut up = u.clone();
        let mut dn = u.clone();
        up[l] += 1e-6;
        dn[l] -= 1e-6;
        let col = (prob.perturbation.value(x, &up) - prob.perturbation.value(x, &dn)) / 2e-6;
        j.set_column(l, &col);
    }
    j
}

#[test]
fn certified_bundle_satisfies_hand_written_conditions() {
    let k = 130;
    let (prob, sol) = marine(k);
    let r = recover_multipliers(&sol.trajectory, &sol.controls, &prob, &RecoveryOptions::default()).unwrap();
    let m = &r.multipliers;
    let faces = prob.polyhedron.faces();
    let xk = sol.trajectory.terminal_state();

    // terminal inclusion: -p_k = μ0 (x_k - 0) + Σ η_kj x*_j
    let mut t = -&m.p[k] - xk * m.mu0;
    for (j, f) in faces.iter().enumerate() {
        t -= f.normal() * m.eta[k][j];
        assert!(m.eta[k][j] >= 0.0);
    }
    assert!(t.norm() < 1e-6, "{}", t.norm());

    // the velocities are constant in x, so p_i - p_{i+1} = -h Σ γ_ij x*_j
    for i in 0..k {
        let h = sol.trajectory.grid.steps()[i];
        let mut r = &m.p[i] - &m.p[i + 1];
        for (j, f) in faces.iter().enumerate() {
            r += f.normal() * (h * m.gamma[i][j]);
        }
        assert!(r.norm() < 1e-6, "step {i}: {}", r.norm());

        // q_i = h ∇_u gᵀ p_{i+1} with the tracking terms switched off
        let b = control_jacobian(&prob, &sol.trajectory.states[i], &sol.controls.values()[i]);
        let q = b.transpose() * &m.p[i + 1] * h;
        assert!((&q - &m.q[i]).norm() < 1e-6);
    }
}

#[test]
fn terminal_multiplier_matches_the_projection_offset() {
    // at the projection of the origin onto the face, η_k = |x_k| / |x*|
    let (prob, sol) = marine(260);
    let r = recover_multipliers(&sol.trajectory, &sol.controls, &prob, &RecoveryOptions::default()).unwrap();
    let xk = sol.trajectory.terminal_state();
    let normal = prob.polyhedron.faces()[0].normal();
    assert!((r.multipliers.eta[260][0] - xk.norm() / normal.norm()).abs() < 1e-6);
}

fn homogeneous() -> RecoveryOptions {
    RecoveryOptions {
        verify: VerifyOptions {
            rule: DualIndexRule::HomogeneousZero,
            ..VerifyOptions::default()
        },
        ..RecoveryOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn zero_bundle_never_passes(u1 in -2.0f64..2.0, u2 in -2.0f64..2.0, t in 1.0f64..40.0) {
        let (prob, _) = marine(30);
        let c = candidate(&prob, [u1, u2], t);
        let m = Multipliers::zeros(30, 4, 2, 1);
        let rep = verify_all(&c.trajectory, &c.controls, &m, &prob, &VerifyOptions::default()).unwrap();
        prop_assert_eq!(rep.condition("nontriviality").unwrap().status, Status::Fail);
        prop_assert!(!rep.verdict);
    }

    #[test]
    fn scaling_keeps_statuses(u1 in -2.0f64..2.0, u2 in -2.0f64..2.0, t in 5.0f64..40.0, lambda in 0.1f64..20.0) {
        let (prob, _) = marine(40);
        let c = candidate(&prob, [u1, u2], t);
        let opts = homogeneous();
        let m = match recover_multipliers(&c.trajectory, &c.controls, &prob, &opts) {
            Ok(r) => r.multipliers,
            Err(OptimalityError::NoCertificate { best, .. }) => match *best {
                Some((m, _)) => m,
                None => return Ok(()),
            },
            Err(e) => panic!("{e}"),
        };
        let base = verify_all(&c.trajectory, &c.controls, &m, &prob, &opts.verify).unwrap();
        let scaled = verify_all(&c.trajectory, &c.controls, &m.scaled(lambda), &prob, &opts.verify.scaled(lambda)).unwrap();
        prop_assert_eq!(base.statuses(), scaled.statuses());
    }

    #[test]
    fn verdict_is_the_conjunction(u1 in -2.0f64..2.0, u2 in -2.0f64..2.0, t in 5.0f64..40.0) {
        let (prob, _) = marine(30);
        let c = candidate(&prob, [u1, u2], t);
        let best = match recover_multipliers(&c.trajectory, &c.controls, &prob, &RecoveryOptions::default()) {
            Ok(r) => Some(r.report),
            Err(OptimalityError::NoCertificate { best, .. }) => best.map(|b| b.1),
            Err(e) => panic!("{e}"),
        };
        if let Some(rep) = best {
            let all = rep
                .conditions
                .iter()
                .filter(|c| c.status != Status::NotApplicable)
                .all(|c| c.status == Status::Pass);
            prop_assert_eq!(rep.verdict, all);
        }
    }
}
