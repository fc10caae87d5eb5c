//! Checks of the discrete necessary optimality conditions and recovery of
//! a dual bundle `(μ₀, p, q, η, γ)` certifying them.

mod recover;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{ControlSignal, Trajectory};
use crate::geometry::{DualIndexRule, DualIndexSets, Polyhedron, ACTIVE_TOL};
use crate::ocp::{hbar, rho_term, step_representation, xi_terms, DiscreteProblem, Endpoint, OcpError, Xi};

pub use recover::{recover_multipliers, RecoveryOptions, Recovery};

const MAX_DETAILS: usize = 8;

#[derive(Debug, Error)]
pub enum OptimalityError {
    #[error("bundle shape does not match the trajectory: {0}")]
    Shape(String),
    #[error("exact mode needs a reference process")]
    NeedsReference,
    #[error("no certificate found (worst residual {worst:e})")]
    NoCertificate {
        worst: f64,
        best: Box<Option<(Multipliers, VerificationReport)>>,
    },
    #[error(transparent)]
    Ocp(#[from] OcpError),
}

/// Dual bundle: `p` and `η` have `k + 1` entries, `q` and `γ` have `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub mu0: f64,
    pub p: Vec<DVector<f64>>,
    pub q: Vec<DVector<f64>>,
    pub eta: Vec<DVector<f64>>,
    pub gamma: Vec<DVector<f64>>,
}

impl Multipliers {
    pub fn zeros(k: usize, n: usize, d: usize, s: usize) -> Self {
        Self {
            mu0: 0.0,
            p: vec![DVector::zeros(n); k + 1],
            q: vec![DVector::zeros(d); k],
            eta: vec![DVector::zeros(s); k + 1],
            gamma: vec![DVector::zeros(s); k],
        }
    }

    /// Multiplies the dual part `(μ₀, p, q, η_k, γ)` by `lambda`. The
    /// contact multipliers `η_0..η_{k-1}` are pinned by the primal arc and
    /// left unchanged.
    pub fn scaled(&self, lambda: f64) -> Self {
        let k = self.q.len();
        let mut eta = self.eta.clone();
        eta[k] *= lambda;
        Self {
            mu0: self.mu0 * lambda,
            p: self.p.iter().map(|v| v * lambda).collect(),
            q: self.q.iter().map(|v| v * lambda).collect(),
            eta,
            gamma: self.gamma.iter().map(|v| v * lambda).collect(),
        }
    }

    fn check_shape(&self, k: usize, n: usize, d: usize, s: usize) -> Result<(), OptimalityError> {
        let ok = self.p.len() == k + 1
            && self.q.len() == k
            && self.eta.len() == k + 1
            && self.gamma.len() == k
            && self.p.iter().all(|v| v.len() == n)
            && self.q.iter().all(|v| v.len() == d)
            && self.eta.iter().all(|v| v.len() == s)
            && self.gamma.iter().all(|v| v.len() == s);
        if ok {
            Ok(())
        } else {
            Err(OptimalityError::Shape(format!("expected k = {k}, n = {n}, d = {d}, s = {s}")))
        }
    }
}

/// How the tracking quantities `ξ` and `ϱ` enter the conditions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum XiMode {
    /// `ξ = 0`, `ϱ = 0`.
    #[default]
    Convergence,
    /// `ξ` and `ϱ` evaluated against the problem's reference.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub rule: DualIndexRule,
    pub xi_mode: XiMode,
    /// Residual tolerance for every equality.
    pub tol: f64,
    /// Lower bound on the nontriviality sums.
    pub nontrivial_tol: f64,
    /// Threshold for treating a contact multiplier as positive.
    pub positivity_tol: f64,
    /// Tolerance used when classifying faces against the adjoint argument.
    pub dual_tol: f64,
    /// Factor applied to every tolerance that measures dual quantities.
    pub dual_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            rule: DualIndexRule::OffsetThreshold,
            xi_mode: XiMode::Convergence,
            tol: 1e-6,
            nontrivial_tol: 1e-8,
            positivity_tol: 1e-9,
            dual_tol: 1e-7,
            dual_scale: 1.0,
        }
    }
}

impl VerifyOptions {
    /// Tolerances matched to a bundle scaled by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            dual_scale: self.dual_scale * lambda,
            ..*self
        }
    }

    fn dtol(&self) -> f64 {
        self.tol * self.dual_scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotChecked,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionRecord {
    pub id: &'static str,
    pub max_residual: f64,
    pub tolerance: f64,
    pub status: Status,
    /// First few offending indices or notes.
    pub details: Vec<String>,
}

impl ConditionRecord {
    fn from_residuals(id: &'static str, tolerance: f64, residuals: impl IntoIterator<Item = (String, f64)>) -> Self {
        let mut max_residual: f64 = 0.0;
        let mut details = Vec::new();
        for (label, r) in residuals {
            let r = if r.is_nan() { f64::INFINITY } else { r };
            max_residual = max_residual.max(r);
            if r > tolerance && details.len() < MAX_DETAILS {
                details.push(format!("{label}: {r:.3e}"));
            }
        }
        Self {
            id,
            max_residual,
            tolerance,
            status: if max_residual <= tolerance { Status::Pass } else { Status::Fail },
            details,
        }
    }

    fn passes(&self) -> bool {
        matches!(self.status, Status::Pass | Status::NotApplicable)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub conditions: Vec<ConditionRecord>,
    pub rule: DualIndexRule,
    pub xi_mode: XiMode,
    pub mu0: f64,
    /// Steps whose normal-cone sum used the left / right endpoint.
    pub endpoints: EndpointCounts,
    /// `T̄` used in the time condition and where it came from.
    pub t_bar: f64,
    pub t_bar_from_reference: bool,
    pub verdict: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EndpointCounts {
    pub left: usize,
    pub right: usize,
}

impl VerificationReport {
    pub fn condition(&self, id: &str) -> Option<&ConditionRecord> {
        self.conditions.iter().find(|c| c.id == id)
    }

    pub fn statuses(&self) -> Vec<(&'static str, Status)> {
        self.conditions.iter().map(|c| (c.id, c.status)).collect()
    }

    /// Largest residual among failing conditions.
    pub fn worst_failure(&self) -> f64 {
        self.conditions
            .iter()
            .filter(|c| c.status == Status::Fail)
            .map(|c| if c.id.contains("nontriviality") { c.tolerance } else { c.max_residual })
            .fold(0.0, f64::max)
    }
}

/// Per-step data shared by all checks.
pub(crate) struct Context<'a> {
    pub traj: &'a Trajectory,
    pub controls: &'a ControlSignal,
    pub prob: &'a DiscreteProblem,
    pub xi: Vec<Xi>,
    pub rho: f64,
    pub t_bar: f64,
    pub t_bar_from_reference: bool,
    /// Endpoint chosen for each step and the state at it.
    pub endpoints: Vec<Endpoint>,
    pub primal_eta: Vec<DVector<f64>>,
}

impl<'a> Context<'a> {
    pub fn new(
        traj: &'a Trajectory,
        controls: &'a ControlSignal,
        prob: &'a DiscreteProblem,
        xi_mode: XiMode,
    ) -> Result<Self, OptimalityError> {
        let k = traj.k();
        if controls.len() != k {
            return Err(OptimalityError::Shape(format!("{} controls for {k} steps", controls.len())));
        }
        let (xi, rho) = match xi_mode {
            XiMode::Convergence => (
                vec![Xi::zero(controls.dim(), traj.states[0].len()); k],
                0.0,
            ),
            XiMode::Exact => {
                if prob.reference.is_none() {
                    return Err(OptimalityError::NeedsReference);
                }
                (xi_terms(traj, controls, prob)?, rho_term(traj, controls, prob)?)
            }
        };
        let (t_bar, from_ref) = match prob.t_bar() {
            Some(t) => (t, true),
            None => (traj.final_time(), false),
        };
        let mut endpoints = Vec::with_capacity(k);
        let mut primal_eta = Vec::with_capacity(k);
        for i in 0..k {
            let rep = step_representation(prob, traj, controls, i);
            endpoints.push(rep.endpoint);
            primal_eta.push(rep.eta);
        }
        Ok(Self {
            traj,
            controls,
            prob,
            xi,
            rho,
            t_bar,
            t_bar_from_reference: from_ref,
            endpoints,
            primal_eta,
        })
    }

    pub fn polyhedron(&self) -> &Polyhedron {
        &self.prob.polyhedron
    }

    pub fn h(&self, i: usize) -> f64 {
        self.traj.grid.steps()[i]
    }

    pub fn endpoint_state(&self, i: usize) -> &DVector<f64> {
        match self.endpoints[i] {
            Endpoint::Left => &self.traj.states[i],
            Endpoint::Right => &self.traj.states[i + 1],
        }
    }

    /// Faces not strictly inactive at the step's endpoint.
    pub fn active_faces(&self, i: usize) -> Vec<usize> {
        let x = self.endpoint_state(i);
        self.polyhedron()
            .faces()
            .iter()
            .enumerate()
            .filter(|(_, f)| f.slack(x) >= -ACTIVE_TOL)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn jacobians(&self, i: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let g = self.prob.perturbation.as_ref();
        let (x, u) = (&self.traj.states[i], &self.controls.values()[i]);
        (g.jacobian_x(x, u), g.jacobian_u(x, u))
    }

    /// `w_i = -μ₀ ξ_iy / h_i + p_{i+1}`.
    pub fn adjoint_argument(&self, i: usize, mu0: f64, p_next: &DVector<f64>) -> DVector<f64> {
        p_next - &self.xi[i].y * (mu0 / self.h(i))
    }

    /// Control coordinates pinned at a bound: `(at_lower, at_upper)`.
    pub fn control_bounds(&self, i: usize) -> Vec<(bool, bool)> {
        let b = &self.prob.control_box;
        self.controls.values()[i]
            .iter()
            .enumerate()
            .map(|(l, &v)| {
                let (lo, hi) = (b.lower()[l], b.upper()[l]);
                (v <= lo + 1e-12 * (1.0 + lo.abs()), v >= hi - 1e-12 * (1.0 + hi.abs()))
            })
            .collect()
    }

    pub fn linearly_independent(&self, faces: &[usize]) -> bool {
        if faces.is_empty() {
            return true;
        }
        let p = self.polyhedron();
        let m = DMatrix::from_fn(p.dim(), faces.len(), |r, c| p.faces()[faces[c]].normal()[r]);
        if faces.len() > p.dim() {
            return false;
        }
        let sv = m.singular_values();
        sv.min() > 1e-10 * sv.max()
    }
}

fn nontriviality(m: &Multipliers, opts: &VerifyOptions, enhanced: bool) -> (f64, bool) {
    let k = m.q.len();
    let q_norm = m.q.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
    let p_part = if enhanced {
        m.p[0].norm()
    } else {
        m.p[..k].iter().map(|v| v.norm()).sum()
    };
    let value = m.mu0 + m.eta[k].norm() + p_part + q_norm;
    (value, value >= opts.nontrivial_tol * opts.dual_scale)
}

/// Nontriviality sum and whether it clears the threshold.
pub fn check_nontriviality(m: &Multipliers, enhanced: bool, opts: &VerifyOptions) -> ConditionRecord {
    let (value, ok) = nontriviality(m, opts, enhanced);
    ConditionRecord {
        id: if enhanced { "enhanced_nontriviality" } else { "nontriviality" },
        max_residual: value,
        tolerance: opts.nontrivial_tol * opts.dual_scale,
        status: if ok { Status::Pass } else { Status::Fail },
        details: if ok { vec![] } else { vec![format!("sum {value:.3e} below threshold")] },
    }
}

fn sum_over(p: &Polyhedron, faces: &[usize], coeffs: &DVector<f64>) -> DVector<f64> {
    let mut acc = DVector::zeros(p.dim());
    for &j in faces {
        acc += p.faces()[j].normal() * coeffs[j];
    }
    acc
}

fn check_primal(ctx: &Context, m: &Multipliers, opts: &VerifyOptions) -> (ConditionRecord, EndpointCounts) {
    let p = ctx.polyhedron();
    let g = ctx.prob.perturbation.as_ref();
    let mut counts = EndpointCounts::default();
    let mut residuals = Vec::with_capacity(ctx.traj.k());
    for i in 0..ctx.traj.k() {
        let lhs = g.value(&ctx.traj.states[i], &ctx.controls.values()[i]) - &ctx.traj.velocities[i];
        let mut best = (f64::INFINITY, Endpoint::Left);
        for (e, x) in [(Endpoint::Left, &ctx.traj.states[i]), (Endpoint::Right, &ctx.traj.states[i + 1])] {
            let active = p.near_faces(x, ACTIVE_TOL);
            let r = (&lhs - sum_over(p, active.indices(), &m.eta[i])).norm();
            if r < best.0 {
                best = (r, e);
            }
        }
        match best.1 {
            Endpoint::Left => counts.left += 1,
            Endpoint::Right => counts.right += 1,
        }
        residuals.push((format!("step {i}"), best.0));
    }
    (ConditionRecord::from_residuals("primal_representation", opts.tol, residuals), counts)
}

fn index_sets(ctx: &Context, w: &DVector<f64>, opts: &VerifyOptions) -> DualIndexSets {
    ctx.polyhedron().dual_index_sets(w, opts.dual_tol * opts.dual_scale, opts.rule)
}

fn check_adjoint(ctx: &Context, m: &Multipliers, opts: &VerifyOptions) -> ConditionRecord {
    let p = ctx.polyhedron();
    let residuals = (0..ctx.traj.k()).map(|i| {
        let h = ctx.h(i);
        let (jx, _) = ctx.jacobians(i);
        let w = ctx.adjoint_argument(i, m.mu0, &m.p[i + 1]);
        let sets = index_sets(ctx, &w, opts);
        let mut r = (&m.p[i + 1] - &m.p[i]) / h + jx.transpose() * &w;
        for j in 0..p.face_count() {
            if sets.contains(j) {
                r -= p.faces()[j].normal() * m.gamma[i][j];
            }
        }
        (format!("step {i}"), r.norm())
    });
    ConditionRecord::from_residuals("adjoint_dynamics", opts.dtol(), residuals.collect::<Vec<_>>())
}

fn check_transversality(ctx: &Context, m: &Multipliers, opts: &VerifyOptions) -> (ConditionRecord, ConditionRecord) {
    let k = ctx.traj.k();
    let p = ctx.polyhedron();
    let xk = ctx.traj.terminal_state();
    let tk = ctx.traj.final_time();
    let Some((gx, gt)) = ctx.prob.cost.gradient(xk, tk) else {
        let note = |id| ConditionRecord {
            id,
            max_residual: f64::NAN,
            tolerance: opts.dtol(),
            status: Status::NotChecked,
            details: vec!["cost is not differentiable; inclusion not checked".into()],
        };
        return (note("transversality_state"), note("transversality_time"));
    };
    let all: Vec<usize> = (0..p.face_count()).collect();
    let active = p.near_faces(xk, ACTIVE_TOL);
    let full = (-&m.p[k] - sum_over(p, &all, &m.eta[k]) - &gx * m.mu0).norm();
    let restricted = (-&m.p[k] - sum_over(p, active.indices(), &m.eta[k]) - &gx * m.mu0).norm();
    let mut state = ConditionRecord::from_residuals("transversality_state", opts.dtol(), [("terminal".to_string(), full)]);
    state
        .details
        .push(format!("full sum {full:.3e}, active-face sum {restricted:.3e}"));
    let h_bar = hbar(ctx.traj, &m.p);
    let time = h_bar + 2.0 * m.mu0 * (ctx.t_bar - tk) + m.mu0 * ctx.rho - m.mu0 * gt;
    let time = ConditionRecord::from_residuals("transversality_time", opts.dtol(), [("time".to_string(), time.abs())]);
    (state, time)
}

fn check_maximum_principle(ctx: &Context, m: &Multipliers, opts: &VerifyOptions) -> (ConditionRecord, ConditionRecord) {
    let mut eq = Vec::with_capacity(ctx.traj.k());
    let mut cone = Vec::with_capacity(ctx.traj.k());
    for i in 0..ctx.traj.k() {
        let h = ctx.h(i);
        let (_, ju) = ctx.jacobians(i);
        let w = ctx.adjoint_argument(i, m.mu0, &m.p[i + 1]);
        let r = -&ctx.xi[i].u * (m.mu0 / h) - &m.q[i] / h + ju.transpose() * w;
        eq.push((format!("step {i}"), r.norm()));
        let dist: f64 = ctx
            .control_bounds(i)
            .iter()
            .zip(m.q[i].iter())
            .map(|(&(lo, hi), &q)| match (lo, hi) {
                (true, true) => 0.0,
                (true, false) => q.max(0.0),
                (false, true) => (-q).max(0.0),
                (false, false) => q.abs(),
            })
            .fold(0.0, f64::max);
        cone.push((format!("step {i}"), dist));
    }
    (
        ConditionRecord::from_residuals("maximum_principle", opts.dtol(), eq),
        ConditionRecord::from_residuals("control_normal_cone", opts.dtol(), cone),
    )
}

fn check_complementarity(ctx: &Context, m: &Multipliers, opts: &VerifyOptions) -> ConditionRecord {
    let p = ctx.polyhedron();
    let k = ctx.traj.k();
    let mut res: Vec<(String, f64)> = Vec::new();
    for i in 0..k {
        let x = ctx.endpoint_state(i);
        let w = ctx.adjoint_argument(i, m.mu0, &m.p[i + 1]);
        let sets = index_sets(ctx, &w, opts);
        let active = ctx.active_faces(i);
        let independent = ctx.linearly_independent(&active);
        for j in 0..p.face_count() {
            let inactive = p.faces()[j].slack(x) < -ACTIVE_TOL;
            let eta = m.eta[i][j];
            let gamma = m.gamma[i][j];
            if eta < 0.0 {
                res.push((format!("eta[{i}][{j}] negative"), -eta));
            }
            if inactive {
                res.push((format!("eta[{i}][{j}] on inactive face"), eta.abs()));
                res.push((format!("gamma[{i}][{j}] on inactive face"), gamma.abs() / opts.dual_scale));
            }
            if sets.positive.contains(&j) {
                res.push((format!("gamma[{i}][{j}] negative on I_>"), (-gamma).max(0.0) / opts.dual_scale));
            }
            if !sets.contains(j) {
                res.push((format!("gamma[{i}][{j}] outside I_0 and I_>"), gamma.abs() / opts.dual_scale));
            }
            if independent && eta > opts.positivity_tol {
                let ortho = p.faces()[j].normal().dot(&w);
                res.push((format!("<x*_{j}, w_{i}> with eta > 0"), ortho.abs() / opts.dual_scale));
            }
        }
    }
    let xk = ctx.traj.terminal_state();
    for j in 0..p.face_count() {
        let eta = m.eta[k][j];
        if eta < 0.0 {
            res.push((format!("eta[{k}][{j}] negative"), -eta / opts.dual_scale));
        }
        if p.faces()[j].slack(xk) < -ACTIVE_TOL {
            res.push((format!("eta[{k}][{j}] on inactive face"), eta.abs() / opts.dual_scale));
        }
    }
    // residuals above are normalized to the unscaled tolerance
    ConditionRecord::from_residuals("complementarity", opts.tol, res)
}

/// Runs every condition on the given bundle.
pub fn verify_all(
    traj: &Trajectory,
    controls: &ControlSignal,
    m: &Multipliers,
    prob: &DiscreteProblem,
    opts: &VerifyOptions,
) -> Result<VerificationReport, OptimalityError> {
    let ctx = Context::new(traj, controls, prob, opts.xi_mode)?;
    verify_in_context(&ctx, m, opts)
}

pub(crate) fn verify_in_context(
    ctx: &Context,
    m: &Multipliers,
    opts: &VerifyOptions,
) -> Result<VerificationReport, OptimalityError> {
    let k = ctx.traj.k();
    let n = ctx.prob.polyhedron.dim();
    let d = ctx.prob.control_box.dim();
    let s = ctx.prob.polyhedron.face_count();
    m.check_shape(k, n, d, s)?;

    let mut conditions = vec![check_nontriviality(m, false, opts)];
    let full_rank = (0..k).all(|i| {
        let (_, ju) = ctx.jacobians(i);
        ju.rank(1e-10 * ju.amax().max(1e-300)) == d
    });
    let mut enhanced = check_nontriviality(m, true, opts);
    if !full_rank {
        enhanced.status = Status::NotApplicable;
        enhanced.details = vec!["control Jacobian is rank deficient".into()];
    }
    conditions.push(enhanced);
    let (primal, endpoints) = check_primal(ctx, m, opts);
    conditions.push(primal);
    conditions.push(check_adjoint(ctx, m, opts));
    let (ts, tt) = check_transversality(ctx, m, opts);
    conditions.push(ts);
    conditions.push(tt);
    let (mp, cone) = check_maximum_principle(ctx, m, opts);
    conditions.push(mp);
    conditions.push(cone);
    conditions.push(check_complementarity(ctx, m, opts));

    let verdict = conditions.iter().all(ConditionRecord::passes);
    Ok(VerificationReport {
        conditions,
        rule: opts.rule,
        xi_mode: opts.xi_mode,
        mu0: m.mu0,
        endpoints,
        t_bar: ctx.t_bar,
        t_bar_from_reference: ctx.t_bar_from_reference,
        verdict,
    })
}

/// Primal arc representation residuals alone.
pub fn check_primal_representation(
    traj: &Trajectory,
    controls: &ControlSignal,
    m: &Multipliers,
    prob: &DiscreteProblem,
    opts: &VerifyOptions,
) -> Result<ConditionRecord, OptimalityError> {
    let ctx = Context::new(traj, controls, prob, XiMode::Convergence)?;
    Ok(check_primal(&ctx, m, opts).0)
}

/// Adjoint recurrence residuals alone.
pub fn check_adjoint_dynamics(
    traj: &Trajectory,
    controls: &ControlSignal,
    m: &Multipliers,
    prob: &DiscreteProblem,
    opts: &VerifyOptions,
) -> Result<ConditionRecord, OptimalityError> {
    let ctx = Context::new(traj, controls, prob, opts.xi_mode)?;
    Ok(check_adjoint(&ctx, m, opts))
}

/// Both adjoint-inclusion components `(state, time)`.
pub fn check_transversality_conditions(
    traj: &Trajectory,
    controls: &ControlSignal,
    m: &Multipliers,
    prob: &DiscreteProblem,
    opts: &VerifyOptions,
) -> Result<(ConditionRecord, ConditionRecord), OptimalityError> {
    let ctx = Context::new(traj, controls, prob, opts.xi_mode)?;
    Ok(check_transversality(&ctx, m, opts))
}

/// Maximum principle equality and control normal-cone membership.
pub fn check_maximum_principle_conditions(
    traj: &Trajectory,
    controls: &ControlSignal,
    m: &Multipliers,
    prob: &DiscreteProblem,
    opts: &VerifyOptions,
) -> Result<(ConditionRecord, ConditionRecord), OptimalityError> {
    let ctx = Context::new(traj, controls, prob, opts.xi_mode)?;
    Ok(check_maximum_principle(&ctx, m, opts))
}

/// All complementarity implications.
pub fn check_complementarity_conditions(
    traj: &Trajectory,
    controls: &ControlSignal,
    m: &Multipliers,
    prob: &DiscreteProblem,
    opts: &VerifyOptions,
) -> Result<ConditionRecord, OptimalityError> {
    let ctx = Context::new(traj, controls, prob, opts.xi_mode)?;
    Ok(check_complementarity(&ctx, m, opts))
}
