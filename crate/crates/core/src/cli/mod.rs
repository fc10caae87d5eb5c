//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 invalid scenario,
//! 3 simulation failure, 4 no feasible point, 5 solver budget exhausted,
//! 6 no certificate found, 7 a check or comparison failed.

pub mod report;
pub mod reproduce;
pub mod scenario;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

pub use report::{
    ComparisonRow, Controls, Exit, Inputs, MultipliersFile, OracleSummary, Outcome, RunReport, SolutionSummary,
    SolverSummary, Timing, REPORT_VERSION,
};
pub use reproduce::{reproduce, table, ReproduceError, ReproduceOptions};
pub use scenario::{
    BoxSpec, Built, ConstantSearchSpec, CostSpec, DriftSpec, HorizonSpec, MarineSpec, ModeSpec, PolyhedronSpec,
    ReferenceSpec, ScenarioError, ScenarioFile, SolverSpec, StepModeSpec, SystemSpec, ToleranceSpec, XiModeSpec,
};

use crate::dynamics::{first_contact_time, read_csv, write_csv, ControlSignal, DynamicsError, Trajectory};
use crate::geometry::DualIndexRule;
use crate::marine::brute_force_oracle;
use crate::ocp::{cost_jk, feasibility_report, solve, solve_constant_control, OcpError, SolveStatus};
use crate::optimality::{recover_multipliers, verify_all, Multipliers, OptimalityError, RecoveryOptions, VerifyOptions};

#[derive(Debug, Parser)]
#[command(name = "sweep-ocp", version, about = "Controlled polyhedral sweeping processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario under given controls.
    Simulate(SimulateArgs),
    /// Solve the free-time discrete problem.
    Solve(SolveArgs),
    /// Check the optimality conditions on a trajectory.
    Verify(VerifyArgs),
    /// Run the built-in two-vehicle scenario end to end.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Offset,
    Zero,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum XiArg {
    Zero,
    Exact,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the number of steps.
    #[arg(long)]
    k: Option<usize>,
    /// Override the verification residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    dual_index_rule: Option<RuleArg>,
    #[arg(long, value_enum)]
    xi_mode: Option<XiArg>,
    /// Leave wall-clock timing out of the report.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated constant control, or a JSON file holding a vector or
    /// a list of per-step vectors.
    #[arg(long, allow_hyphen_values = true)]
    controls: String,
    /// Final time; defaults to the scenario's initial time.
    #[arg(long)]
    final_time: Option<f64>,
    /// Trajectory CSV path; defaults to the report path with a .csv extension.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Search constant controls only.
    #[arg(long)]
    constant_control: bool,
    /// Also run the closed-form oracle (two-vehicle scenarios).
    #[arg(long)]
    oracle: bool,
    /// Trajectory CSV path; defaults to the report path with a .csv extension.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Trajectory CSV.
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    controls: String,
    /// Multiplier bundle (JSON).
    #[arg(long, conflicts_with = "recover", required_unless_present = "recover")]
    multipliers: Option<PathBuf>,
    /// Search for a bundle instead of reading one.
    #[arg(long)]
    recover: bool,
    /// Where to write a recovered bundle.
    #[arg(long)]
    save_multipliers: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 2600)]
    k: usize,
    #[arg(long)]
    no_timing: bool,
}

/// Failure carrying its exit code.
struct Failure(Exit, String);

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure(Exit::InvalidScenario, e.to_string())
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure(Exit::Usage, format!("{}: {e}", path.display()))
}

fn ocp_failure(e: OcpError) -> Failure {
    match e {
        OcpError::NoFeasiblePoint(_) => Failure(Exit::NoFeasiblePoint, e.to_string()),
        OcpError::Dynamics(_) => Failure(Exit::Simulation, e.to_string()),
        _ => Failure(Exit::InvalidScenario, e.to_string()),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Exit::Usage.code() } else { 0 };
        }
    };
    let started = Instant::now();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Reproduce(a) => cmd_reproduce(a),
    };
    match result {
        Ok((mut report, out, no_timing)) => {
            if !no_timing {
                report.timing = Some(Timing {
                    seconds: started.elapsed().as_secs_f64(),
                });
            }
            let code = report.outcome.exit_code;
            if !report.outcome.message.is_empty() {
                eprintln!("{}", report.outcome.message);
            }
            match out {
                Some(path) => {
                    if let Err(e) = fs::write(&path, report.to_json()) {
                        eprintln!("{}: {e}", path.display());
                        return Exit::Usage.code();
                    }
                }
                None => print!("{}", report.to_json()),
            }
            code
        }
        Err(Failure(exit, msg)) => {
            eprintln!("error: {msg}");
            exit.code()
        }
    }
}

type CmdResult = Result<(RunReport, Option<PathBuf>, bool), Failure>;

fn load_scenario(path: &Path) -> Result<ScenarioFile, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure(Exit::InvalidScenario, format!("{}: {e}", path.display())))?;
    Ok(ScenarioFile::parse(&text)?)
}

fn apply_overrides(s: &mut ScenarioFile, c: &Common) -> Result<(), Failure> {
    if let Some(k) = c.k {
        s.horizon.k = k;
    }
    if let Some(t) = c.tol {
        s.tolerances.verify = t;
    }
    if let Some(r) = c.dual_index_rule {
        s.modes.dual_index_rule = match r {
            RuleArg::Offset => DualIndexRule::OffsetThreshold,
            RuleArg::Zero => DualIndexRule::HomogeneousZero,
        };
    }
    if let Some(x) = c.xi_mode {
        s.modes.xi_mode = match x {
            XiArg::Zero => XiModeSpec::Zero,
            XiArg::Exact => XiModeSpec::Exact,
        };
    }
    s.validate()?;
    Ok(())
}

fn parse_controls(spec: &str) -> Result<Controls, Failure> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        return serde_json::from_str(&text).map_err(|e| Failure(Exit::Usage, format!("{}: {e}", path.display())));
    }
    spec.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map(Controls::Constant)
        .map_err(|_| Failure(Exit::Usage, format!("cannot read controls from '{spec}'")))
}

fn csv_path(explicit: &Option<PathBuf>, out: &Option<PathBuf>) -> Option<PathBuf> {
    explicit.clone().or_else(|| out.as_ref().map(|p| p.with_extension("csv")))
}

fn write_trajectory(path: &Option<PathBuf>, traj: &Trajectory) -> Result<(), Failure> {
    if let Some(p) = path {
        let file = fs::File::create(p).map_err(|e| io_error(p, e))?;
        write_csv(traj, file).map_err(|e| io_error(p, e))?;
    }
    Ok(())
}

fn verify_options(s: &ScenarioFile) -> VerifyOptions {
    VerifyOptions {
        rule: s.modes.dual_index_rule,
        xi_mode: s.modes.xi_mode.into(),
        tol: s.tolerances.verify,
        ..VerifyOptions::default()
    }
}

fn cmd_simulate(a: &SimulateArgs) -> CmdResult {
    let mut s = load_scenario(&a.common.scenario)?;
    apply_overrides(&mut s, &a.common)?;
    let built = s.build(None)?;
    let prob = &built.problem;
    let t = a.final_time.unwrap_or(s.horizon.initial_time);
    if !(t > 0.0 && t.is_finite()) {
        return Err(Failure(Exit::Usage, "final time must be positive".into()));
    }
    let controls = parse_controls(&a.controls)?;
    let signal = controls
        .to_signal(prob.k, prob.control_box.dim())
        .map_err(|m| Failure(Exit::Usage, m))?;
    let mut report = RunReport::new(
        "simulate",
        Inputs {
            scenario: Some(s.clone()),
            k: prob.k,
            controls: Some(controls),
            final_time: Some(t),
            options: serde_json::json!({}),
        },
    );
    let sol = match prob.evaluate(signal, t) {
        Ok(sol) => sol,
        Err(OcpError::Dynamics(e)) => {
            let msg = match &e {
                DynamicsError::Step { index, .. } => format!("simulation failed at step {index}: {e}"),
                _ => format!("simulation failed: {e}"),
            };
            report.finish(Exit::Simulation, msg);
            return Ok((report, a.common.out.clone(), a.common.no_timing));
        }
        Err(e) => return Err(ocp_failure(e)),
    };
    write_trajectory(&csv_path(&a.csv, &a.common.out), &sol.trajectory)?;
    let breakdown = cost_jk(&sol.trajectory, &sol.controls, prob);
    report.feasibility = Some(feasibility_report(&sol.trajectory, &sol.controls, prob, s.tolerances.feasibility));
    report.solution = Some(SolutionSummary::new(
        &sol.trajectory,
        &sol.controls,
        breakdown,
        first_contact_time(&sol.trajectory, &prob.polyhedron),
        built.marine.as_ref(),
    ));
    report.finish(Exit::Success, "");
    Ok((report, a.common.out.clone(), a.common.no_timing))
}

fn cmd_solve(a: &SolveArgs) -> CmdResult {
    let mut s = load_scenario(&a.common.scenario)?;
    apply_overrides(&mut s, &a.common)?;
    let built = s.build(None)?;
    let prob = &built.problem;
    let options = if a.constant_control {
        serde_json::to_value(s.constant_search.options()).expect("options serialize")
    } else {
        serde_json::to_value(s.solver.options()).expect("options serialize")
    };
    let mut report = RunReport::new(
        "solve",
        Inputs {
            scenario: Some(s.clone()),
            k: prob.k,
            controls: None,
            final_time: None,
            options,
        },
    );
    let out = if a.constant_control {
        solve_constant_control(prob, &s.constant_search.options()).map_err(ocp_failure)?
    } else {
        let u0 = match &prob.reference {
            Some(r) => r.initial_control().clone(),
            None => prob.control_box.clamp(&DVector::zeros(prob.control_box.dim())),
        };
        let init = prob
            .evaluate(ControlSignal::constant(u0, prob.k), s.horizon.initial_time)
            .map_err(|e| match e {
                OcpError::Dynamics(_) => Failure(Exit::NoFeasiblePoint, format!("initial guess: {e}")),
                e => ocp_failure(e),
            })?;
        solve(prob, &init, &s.solver.options()).map_err(ocp_failure)?
    };
    let sol = &out.solution;
    write_trajectory(&csv_path(&a.csv, &a.common.out), &sol.trajectory)?;
    let breakdown = cost_jk(&sol.trajectory, &sol.controls, prob);
    report.feasibility = Some(feasibility_report(&sol.trajectory, &sol.controls, prob, s.tolerances.feasibility));
    report.solution = Some(SolutionSummary::new(
        &sol.trajectory,
        &sol.controls,
        breakdown,
        first_contact_time(&sol.trajectory, &prob.polyhedron),
        built.marine.as_ref(),
    ));
    report.solver = Some(SolverSummary::new(
        if a.constant_control { "constant_control" } else { "pattern_search" },
        &out,
    ));
    if a.oracle {
        let Some(m) = &built.marine else {
            return Err(Failure(Exit::Usage, "the oracle needs a two-vehicle marine scenario".into()));
        };
        let res = s.constant_search.resolution;
        let o = brute_force_oracle(m, res).map_err(|e| Failure(Exit::Usage, e.to_string()))?;
        report.oracle = Some(OracleSummary {
            resolution: res,
            controls: o.controls.iter().copied().collect(),
            final_time: o.final_time,
            terminal_cost: o.terminal_cost,
            candidates: o.candidates,
            solver_gap: breakdown.terminal - o.terminal_cost,
        });
    }
    match out.status {
        SolveStatus::Converged => report.finish(Exit::Success, ""),
        SolveStatus::BudgetExhausted => report.finish(
            Exit::BudgetExhausted,
            format!("evaluation budget exhausted after {}; best point written", out.evaluations),
        ),
    }
    Ok((report, a.common.out.clone(), a.common.no_timing))
}

fn cmd_verify(a: &VerifyArgs) -> CmdResult {
    let mut s = load_scenario(&a.common.scenario)?;
    apply_overrides(&mut s, &a.common)?;
    let file = fs::File::open(&a.trajectory).map_err(|e| io_error(&a.trajectory, e))?;
    let traj = read_csv(file).map_err(|e| io_error(&a.trajectory, e))?;
    let built = s.build(None)?;
    let mut prob = built.problem;
    prob.k = traj.k();
    let controls = parse_controls(&a.controls)?;
    let signal = controls
        .to_signal(traj.k(), prob.control_box.dim())
        .map_err(|m| Failure(Exit::Usage, m))?;
    let opts = verify_options(&s);
    if opts.xi_mode == crate::optimality::XiMode::Exact && prob.reference.is_none() {
        return Err(Failure(Exit::InvalidScenario, "exact mode needs a reference section".into()));
    }
    let mut report = RunReport::new(
        "verify",
        Inputs {
            scenario: Some(s.clone()),
            k: traj.k(),
            controls: Some(controls),
            final_time: Some(traj.final_time()),
            options: serde_json::to_value(opts).expect("options serialize"),
        },
    );
    let feas = feasibility_report(&traj, &signal, &prob, s.tolerances.feasibility);
    let feasible = feas.pass;
    report.feasibility = Some(feas);
    report.solution = Some(SolutionSummary::new(
        &traj,
        &signal,
        cost_jk(&traj, &signal, &prob),
        first_contact_time(&traj, &prob.polyhedron),
        built.marine.as_ref(),
    ));

    let shape_failure = |e: OptimalityError| Failure(Exit::Usage, e.to_string());
    let (verdict, exit_on_fail) = if a.recover {
        let ropts = RecoveryOptions {
            verify: opts,
            ..RecoveryOptions::default()
        };
        match recover_multipliers(&traj, &signal, &prob, &ropts) {
            Ok(r) => {
                save_bundle(&a.save_multipliers, &r.multipliers)?;
                report.verification = Some(r.report);
                (true, Exit::NoCertificate)
            }
            Err(OptimalityError::NoCertificate { best, .. }) => {
                if let Some((m, rep)) = *best {
                    save_bundle(&a.save_multipliers, &m)?;
                    report.verification = Some(rep);
                }
                (false, Exit::NoCertificate)
            }
            Err(e) => return Err(shape_failure(e)),
        }
    } else {
        let path = a.multipliers.as_ref().expect("clap requires one source");
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let file: MultipliersFile = serde_json::from_str(&text).map_err(|e| io_error(path, e))?;
        let rep = verify_all(&traj, &signal, &Multipliers::from(&file), &prob, &opts).map_err(shape_failure)?;
        let v = rep.verdict;
        report.verification = Some(rep);
        (v, Exit::Failed)
    };
    if !feasible {
        report.finish(Exit::Failed, "trajectory is not feasible for the scenario");
    } else if verdict {
        report.finish(Exit::Success, "");
    } else if exit_on_fail == Exit::NoCertificate {
        report.finish(Exit::NoCertificate, "no multiplier bundle satisfies the conditions");
    } else {
        report.finish(Exit::Failed, "the supplied multipliers violate the conditions");
    }
    Ok((report, a.common.out.clone(), a.common.no_timing))
}

fn save_bundle(path: &Option<PathBuf>, m: &Multipliers) -> Result<(), Failure> {
    if let Some(p) = path {
        let text = serde_json::to_string(&MultipliersFile::from(m)).expect("bundle serializes");
        fs::write(p, text).map_err(|e| io_error(p, e))?;
    }
    Ok(())
}

fn cmd_reproduce(a: &ReproduceArgs) -> CmdResult {
    if a.k < 2 {
        return Err(Failure(Exit::Usage, "k must be at least 2".into()));
    }
    let opts = ReproduceOptions {
        k: a.k,
        ..ReproduceOptions::default()
    };
    let report = reproduce(&opts).map_err(|e| Failure(Exit::Failed, e.to_string()))?;
    eprint!("{}", table(&report.comparison));
    Ok((report, a.out.clone(), a.no_timing))
}
