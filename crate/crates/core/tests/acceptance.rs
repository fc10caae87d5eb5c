//! Acceptance gate. Prints one line per criterion and exits nonzero if any
//! criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{dv, feasible_point, random_marine, random_polyhedron, random_vector};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sweep_ocp::cli::reproduce::{reproduce, ReproduceOptions};
use sweep_ocp::dynamics::{simulate, ControlSignal, Grid, PerturbationMap, StepMode};
use sweep_ocp::geometry::{DualIndexRule, HalfSpace, Polyhedron, ACTIVE_TOL};
use sweep_ocp::marine::{analytic_two_phase, brute_force_oracle, two_vehicle_scenario};
use sweep_ocp::ocp::{solve_constant_control, ConstantSearchOptions, DiscreteProblem, DiscreteSolution};
use sweep_ocp::optimality::{
    recover_multipliers, verify_all, OptimalityError, RecoveryOptions, VerifyOptions, XiMode,
};

const U_BAR: [f64; 2] = [1.67547, 0.49999];
const OPTIMAL_COST: f64 = 6.125;

const C1_RUNTIME: f64 = 30.0;
const C2_K: usize = 2600;
const C2_TOL: f64 = 1e-6;
const C2_RUNTIME: f64 = 60.0;
const C3_RESOLUTION: f64 = 0.01;
const C3_ORACLE_TOL: f64 = 1e-6;
const C3_AGREEMENT_TOL: f64 = 1e-2;
const C3_RUNTIME: f64 = 300.0;
const C4_CASES: usize = 1000;
const C4_IDEMPOTENCE_TOL: f64 = 1e-12;
const C4_VI_TOL: f64 = 1e-9;
const C4_HALF_SPACE_TOL: f64 = 1e-12;
const C5_CASES: usize = 100;
const C5_FEASIBILITY_TOL: f64 = 1e-9;
const C5_AGREEMENT_TOL: f64 = 1e-9;
const C6_KS: [usize; 5] = [100, 200, 400, 800, 1600];
const C6_C: f64 = 5.0;
const C7_BUNDLES: usize = 50;
const C7_LAMBDAS: [f64; 3] = [0.5, 2.0, 10.0];

type Outcome = Result<String, String>;

fn c1() -> Outcome {
    let start = Instant::now();
    let report = reproduce(&ReproduceOptions::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let failing: Vec<String> = report
        .comparison
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} = {} (expected {} ± {})", r.quantity, r.computed, r.expected, r.tolerance))
        .collect();
    if !failing.is_empty() {
        return Err(failing.join("; "));
    }
    if secs >= C1_RUNTIME {
        return Err(format!("runtime {secs:.1} s"));
    }
    Ok(format!("{} quantities in tolerance, {secs:.1} s", report.comparison.len()))
}

fn pushing_discretized(k: usize) -> (DiscreteProblem, DiscreteSolution) {
    let s = two_vehicle_scenario();
    let t = analytic_two_phase(&s, &dv(&U_BAR)).unwrap().terminal_time;
    s.discretized(&dv(&U_BAR), t, k, 1.0).unwrap()
}

fn c2() -> Outcome {
    let start = Instant::now();
    let (prob, sol) = pushing_discretized(C2_K);
    let opts = RecoveryOptions::default();
    let r = recover_multipliers(&sol.trajectory, &sol.controls, &prob, &opts).map_err(|e| e.to_string())?;
    if r.multipliers.mu0 != 1.0 {
        return Err(format!("mu0 = {}", r.multipliers.mu0));
    }
    let mut worst = 0.0f64;
    for c in &r.report.conditions {
        if c.id.contains("nontriviality") {
            continue;
        }
        if !(c.max_residual <= C2_TOL) {
            return Err(format!("{} residual {:e}", c.id, c.max_residual));
        }
        worst = worst.max(c.max_residual);
    }
    if !r.report.verdict {
        return Err("verdict false".into());
    }

    let shifted = [U_BAR[0] + 0.2, U_BAR[1] - 0.2];
    let c = prob
        .evaluate(ControlSignal::constant(dv(&shifted), C2_K), sol.final_time())
        .map_err(|e| e.to_string())?;
    let exact = RecoveryOptions {
        verify: VerifyOptions {
            xi_mode: XiMode::Exact,
            tol: C2_TOL,
            ..VerifyOptions::default()
        },
        ..RecoveryOptions::default()
    };
    let refuted = match recover_multipliers(&c.trajectory, &c.controls, &prob, &exact) {
        Err(OptimalityError::NoCertificate { worst, .. }) => worst,
        Ok(_) => return Err("perturbed process was certified".into()),
        Err(e) => return Err(e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    if secs >= C2_RUNTIME {
        return Err(format!("runtime {secs:.1} s"));
    }
    Ok(format!(
        "mu0 = 1, worst residual {worst:.1e}; shifted control refuted (best residual {refuted:.1e}); {secs:.1} s"
    ))
}

fn c3() -> Outcome {
    let start = Instant::now();
    let s = two_vehicle_scenario();
    let oracle = brute_force_oracle(&s, C3_RESOLUTION).map_err(|e| e.to_string())?;
    if (oracle.terminal_cost - OPTIMAL_COST).abs() > C3_ORACLE_TOL {
        return Err(format!("oracle cost {}", oracle.terminal_cost));
    }
    let prob = s.problem(C2_K).map_err(|e| e.to_string())?;
    let opts = ConstantSearchOptions {
        resolution: C3_RESOLUTION,
        ..ConstantSearchOptions::default()
    };
    let out = solve_constant_control(&prob, &opts).map_err(|e| e.to_string())?;
    let gap = out.solution.cost_value - oracle.terminal_cost;
    if gap.abs() > C3_AGREEMENT_TOL {
        return Err(format!("solver cost {} vs oracle {}", out.solution.cost_value, oracle.terminal_cost));
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= C3_RUNTIME {
        return Err(format!("runtime {secs:.1} s"));
    }
    Ok(format!(
        "oracle {:.9} over {} points, solver gap {gap:.1e}, {secs:.1} s",
        oracle.terminal_cost, oracle.candidates
    ))
}

fn c4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut idem, mut vi, mut half) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..C4_CASES {
        let n = rng.gen_range(1..6);
        let faces = rng.gen_range(1..8);
        let (p, center) = random_polyhedron(&mut rng, n, faces);
        let v = random_vector(&mut rng, n, 10.0);
        let z = p.project(&v).map_err(|e| format!("case {case}: {e}"))?.point;
        let zz = p.project(&z).map_err(|e| format!("case {case}: {e}"))?.point;
        idem = idem.max((&zz - &z).amax());
        for _ in 0..5 {
            let y = feasible_point(&mut rng, &p, &center);
            vi = vi.max((&v - &z).dot(&(&y - &z)) / (1.0 + v.norm() * y.norm()));
        }

        let a = random_vector(&mut rng, n, 2.0) + DVector::from_element(n, 0.01);
        let c = rng.gen_range(-3.0..3.0);
        let single = Polyhedron::new(vec![HalfSpace::new(a.clone(), c).unwrap()]).unwrap();
        let excess = a.dot(&v) - c;
        let closed = if excess <= 0.0 { v.clone() } else { &v - &a * (excess / a.norm_squared()) };
        let got = single.project(&v).map_err(|e| e.to_string())?.point;
        half = half.max((&got - &closed).amax() / (1.0 + v.amax()));
    }
    let line = format!("idempotence {idem:.1e}, VI {vi:.1e}, half-space {half:.1e}");
    if idem <= C4_IDEMPOTENCE_TOL && vi <= C4_VI_TOL && half <= C4_HALF_SPACE_TOL {
        Ok(line)
    } else {
        Err(line)
    }
}

fn c5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut infeasible, mut agreement) = (0.0f64, 0.0f64);
    let mut interior_steps = 0usize;
    for case in 0..C5_CASES {
        let vehicles = rng.gen_range(2..4);
        let s = random_marine(&mut rng, vehicles);
        let p = s.polyhedron().unwrap();
        let g = s.perturbation();
        let k = 120;
        let ctrl = ControlSignal::new(
            (0..k).map(|_| DVector::from_fn(vehicles, |_, _| rng.gen_range(-2.0..2.0))).collect(),
        )
        .unwrap();
        let grid = Grid::uniform(rng.gen_range(5.0..40.0), k).unwrap();
        let x0 = s.config.initial_state();
        let traj = simulate(&p, &g, &x0, &ctrl, &grid, StepMode::FixedSet).map_err(|e| format!("case {case}: {e}"))?;
        for x in &traj.states {
            infeasible = infeasible.max(p.max_violation(x));
        }
        for i in 0..k {
            let h = traj.grid.steps()[i];
            let gv = g.value(&traj.states[i], &ctrl.values()[i]);
            let eta = &traj.cone_multipliers[i];
            if p.max_violation(&(&traj.states[i] + &gv * h)) <= 0.0 {
                interior_steps += 1;
                if traj.velocities[i] != gv || eta.iter().any(|&e| e != 0.0) {
                    return Err(format!("case {case} step {i}: interior step altered"));
                }
            }
            for (j, f) in p.faces().iter().enumerate() {
                if eta[j] < 0.0 || (eta[j] > 0.0 && f.slack(&traj.states[i + 1]) < -ACTIVE_TOL) {
                    return Err(format!("case {case} step {i}: eta on inactive face {j}"));
                }
            }
        }
        if vehicles == 2 {
            let lin = simulate(&p, &g, &x0, &ctrl, &grid, StepMode::LinearizedMovingSet)
                .map_err(|e| format!("case {case}: {e}"))?;
            for (a, b) in traj.states.iter().zip(&lin.states) {
                agreement = agreement.max((a - b).amax());
            }
        }
    }
    let line = format!("max violation {infeasible:.1e}, {interior_steps} interior steps exact, step-mode gap {agreement:.1e}");
    if infeasible <= C5_FEASIBILITY_TOL && agreement <= C5_AGREEMENT_TOL {
        Ok(line)
    } else {
        Err(line)
    }
}

fn c6() -> Outcome {
    let s = two_vehicle_scenario();
    let tp = analytic_two_phase(&s, &dv(&U_BAR)).map_err(|e| e.to_string())?;
    let mut values = Vec::new();
    for &k in &C6_KS {
        let reference = tp.as_reference(tp.terminal_time, &dv(&U_BAR)).map_err(|e| e.to_string())?;
        let prob = s.problem(k).unwrap().with_reference(reference, 1.0).map_err(|e| e.to_string())?;
        let out = solve_constant_control(&prob, &ConstantSearchOptions::default()).map_err(|e| e.to_string())?;
        values.push(out.solution.cost_value);
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    let monotone = diffs.windows(2).all(|w| w[1] < w[0]);
    let bound = C6_KS[..4].iter().zip(&values).all(|(&k, &j)| j - OPTIMAL_COST <= C6_C / k as f64);
    let line = format!(
        "J_k = [{}], |J_k - J_2k| = [{}], C = {C6_C}",
        values.iter().map(|v| format!("{v:.9}")).collect::<Vec<_>>().join(", "),
        diffs.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(", ")
    );
    match (monotone, bound) {
        (true, true) => Ok(line),
        (false, _) => Err(format!("differences not decreasing: {line}")),
        (true, false) => Err(format!("bound violated: {line}")),
    }
}

fn c7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (prob, _) = pushing_discretized(40);
    let opts = RecoveryOptions {
        verify: VerifyOptions {
            rule: DualIndexRule::HomogeneousZero,
            ..VerifyOptions::default()
        },
        ..RecoveryOptions::default()
    };
    let (mut bundles, mut certified, mut attempts) = (0usize, 0usize, 0usize);
    while bundles < C7_BUNDLES {
        attempts += 1;
        if attempts > 20 * C7_BUNDLES {
            return Err(format!("only {bundles} bundles recovered"));
        }
        let u = dv(&[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
        let t = rng.gen_range(5.0..40.0);
        let c = prob.evaluate(ControlSignal::constant(u, prob.k), t).map_err(|e| e.to_string())?;
        let m = match recover_multipliers(&c.trajectory, &c.controls, &prob, &opts) {
            Ok(r) => {
                certified += 1;
                r.multipliers
            }
            Err(OptimalityError::NoCertificate { best, .. }) => match *best {
                Some((m, _)) => m,
                None => continue,
            },
            Err(e) => return Err(e.to_string()),
        };
        bundles += 1;
        let base = verify_all(&c.trajectory, &c.controls, &m, &prob, &opts.verify).map_err(|e| e.to_string())?;
        for &lambda in &C7_LAMBDAS {
            let scaled = verify_all(&c.trajectory, &c.controls, &m.scaled(lambda), &prob, &opts.verify.scaled(lambda))
                .map_err(|e| e.to_string())?;
            if scaled.statuses() != base.statuses() {
                return Err(format!("bundle {bundles}, lambda {lambda}: {:?} vs {:?}", base.statuses(), scaled.statuses()));
            }
        }
    }
    Ok(format!("{bundles} bundles ({certified} certified), {} scalings each", C7_LAMBDAS.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("C1 reproduction", c1),
        ("C2 certificate", c2),
        ("C3 oracle", c3),
        ("C4 projection", c4),
        ("C5 simulator", c5),
        ("C6 convergence", c6),
        ("C7 homogeneity", c7),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(msg) => println!("[PASS] {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] {name}: {msg}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
