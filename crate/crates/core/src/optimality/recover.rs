//! Least-squares recovery of a dual bundle.
//!
//! For fixed `μ₀` and fixed index classification the conditions are affine in
//! `(η_k, γ_0, …, γ_{k-1})` once `p` is generated by the backward adjoint
//! recursion from `p_k = -Σ η_kj x*_j - μ₀ ∇φ`. The stage equations (zero
//! `q` on free control coordinates, orthogonality on contact faces) and the
//! time equation are minimized in the least-squares sense by a backward
//! Riccati sweep over the augmented state `z_i = (p_i, H_i)`, where `H_i`
//! accumulates the tail of `H̄`. Sign and support rules are enforced by
//! reclassifying and re-solving.

use nalgebra::{DMatrix, DVector};

use super::{verify_in_context, Context, Multipliers, OptimalityError, VerificationReport, VerifyOptions};
use crate::dynamics::{ControlSignal, Trajectory};
use crate::geometry::{qp, QuadraticProgram, ACTIVE_TOL};
use crate::ocp::DiscreteProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryOptions {
    pub verify: VerifyOptions,
    /// Tikhonov weight on `γ`.
    pub ridge: f64,
    pub max_rounds: usize,
    /// Also search for a certificate with `μ₀ = 0`.
    pub try_abnormal: bool,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            verify: VerifyOptions::default(),
            ridge: 1e-10,
            max_rounds: 50,
            try_abnormal: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Recovery {
    pub multipliers: Multipliers,
    pub report: VerificationReport,
    /// Reclassification rounds used.
    pub rounds: usize,
}

struct Stage {
    f: DMatrix<f64>,
    fv: DVector<f64>,
    g: DMatrix<f64>,
    faces: Vec<usize>,
    /// `K P_i` and `K s_i` with `K = M⁻¹ Gᵀ`, so `γ = -(KP y + Ks)`.
    kp: DMatrix<f64>,
    ks: DVector<f64>,
}

struct Classification {
    /// `γ_ij` forced to zero.
    dropped: Vec<Vec<bool>>,
    /// Bound control coordinates whose `q` is forced to zero.
    pinned: Vec<Vec<bool>>,
}

fn build_stage(
    ctx: &Context,
    cls: &Classification,
    i: usize,
    mu0: f64,
    opts: &RecoveryOptions,
) -> (Stage, DMatrix<f64>, DVector<f64>) {
    let n = ctx.prob.polyhedron.dim();
    let m = n + 1;
    let k = ctx.traj.k() as f64;
    let h = ctx.h(i);
    let (jx, ju) = ctx.jacobians(i);
    let xi = &ctx.xi[i];
    let poly = ctx.polyhedron();

    let mut f = DMatrix::zeros(m, m);
    let a = DMatrix::identity(n, n) + jx.transpose() * h;
    f.view_mut((0, 0), (n, n)).copy_from(&a);
    for c in 0..n {
        f[(n, c)] = ctx.traj.velocities[i][c] / k;
    }
    f[(n, n)] = 1.0;
    let mut fv = DVector::zeros(m);
    fv.rows_mut(0, n).copy_from(&(-(jx.transpose() * &xi.y) * mu0));

    let active = ctx.active_faces(i);
    let faces: Vec<usize> = active.iter().copied().filter(|&j| !cls.dropped[i][j]).collect();
    let mut g = DMatrix::zeros(m, faces.len());
    for (c, &j) in faces.iter().enumerate() {
        g.view_mut((0, c), (n, 1)).copy_from(&(poly.faces()[j].normal() * -h));
    }

    // stage rows act on z_{i+1}
    let y_shift = &xi.y * (mu0 / h);
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for (l, &(lo, hi)) in ctx.control_bounds(i).iter().enumerate() {
        let free = !lo && !hi;
        if free || ((lo ^ hi) && cls.pinned[i][l]) {
            let col = ju.column(l).into_owned();
            rows.push((col.clone(), -col.dot(&y_shift) - mu0 * xi.u[l] / h));
        }
    }
    if ctx.linearly_independent(&active) {
        for &j in &active {
            if ctx.primal_eta[i][j] > opts.verify.positivity_tol {
                let nj = poly.faces()[j].normal();
                rows.push((nj.clone(), -nj.dot(&y_shift)));
            }
        }
    }
    let mut c = DMatrix::zeros(rows.len(), m);
    let mut e = DVector::zeros(rows.len());
    for (r, (coef, off)) in rows.into_iter().enumerate() {
        c.view_mut((r, 0), (1, n)).copy_from(&coef.transpose());
        e[r] = off;
    }
    (
        Stage {
            f,
            fv,
            g,
            faces,
            kp: DMatrix::zeros(0, m),
            ks: DVector::zeros(0),
        },
        c,
        e,
    )
}

/// Runs the sweep for fixed `μ₀` and classification. Returns the bundle.
fn sweep(
    ctx: &Context,
    cls: &Classification,
    mu0: f64,
    opts: &RecoveryOptions,
) -> Result<Option<Multipliers>, OptimalityError> {
    let k = ctx.traj.k();
    let n = ctx.prob.polyhedron.dim();
    let d = ctx.prob.control_box.dim();
    let s = ctx.prob.polyhedron.face_count();
    let m = n + 1;
    let poly = ctx.polyhedron();
    let xk = ctx.traj.terminal_state();
    let tk = ctx.traj.final_time();
    let Some((grad_x, grad_t)) = ctx.prob.cost.gradient(xk, tk) else {
        return Ok(None);
    };

    // cost-to-go at z_0: (H_0 + τ)^2
    let tau = mu0 * (2.0 * (ctx.t_bar - tk) + ctx.rho - grad_t);
    let mut p_mat = DMatrix::zeros(m, m);
    p_mat[(n, n)] = 1.0;
    let mut s_vec = DVector::zeros(m);
    s_vec[n] = tau;

    let mut stages = Vec::with_capacity(k);
    for i in 0..k {
        let (mut st, c, e) = build_stage(ctx, cls, i, mu0, opts);
        let (p_t, s_t) = if st.faces.is_empty() {
            (p_mat.clone(), s_vec.clone())
        } else {
            let gtp = st.g.transpose() * &p_mat;
            let mut mm = &gtp * &st.g;
            for r in 0..mm.nrows() {
                mm[(r, r)] += opts.ridge;
            }
            let chol = mm.cholesky().ok_or_else(|| OptimalityError::Shape("singular stage system".into()))?;
            st.kp = chol.solve(&gtp);
            st.ks = chol.solve(&(st.g.transpose() * &s_vec));
            let pg = &p_mat * &st.g;
            (&p_mat - &pg * &st.kp, &s_vec - &pg * &st.ks)
        };
        let ft = st.f.transpose();
        let next_p = c.transpose() * &c + &ft * &p_t * &st.f;
        s_vec = c.transpose() * &e + &ft * (&p_t * &st.fv + &s_t);
        p_mat = (&next_p + next_p.transpose()) * 0.5;
        stages.push((st, p_t, s_t));
    }

    // terminal contact multipliers
    let active = poly.near_faces(xk, ACTIVE_TOL);
    let idx = active.indices();
    if mu0 == 0.0 && idx.is_empty() {
        return Ok(None);
    }
    let l_mat = DMatrix::from_fn(n, idx.len(), |r, c| -poly.faces()[idx[c]].normal()[r]);
    let l_off = -&grad_x * mu0;
    let ppp = p_mat.view((0, 0), (n, n)).into_owned();
    let sp = s_vec.rows(0, n).into_owned();
    let eta_active = if idx.is_empty() {
        DVector::zeros(0)
    } else {
        let mut hess = l_mat.transpose() * &ppp * &l_mat;
        let scale = hess.diagonal().amax().max(1.0);
        for r in 0..idx.len() {
            hess[(r, r)] += opts.ridge * scale;
        }
        let lin = l_mat.transpose() * (&ppp * &l_off + &sp);
        let (eq_m, eq_r) = if mu0 == 0.0 {
            (DMatrix::from_element(1, idx.len(), 1.0), DVector::from_element(1, 1.0))
        } else {
            (DMatrix::zeros(0, idx.len()), DVector::zeros(0))
        };
        let ineq_m = -DMatrix::identity(idx.len(), idx.len());
        let ineq_r = DVector::zeros(idx.len());
        let sol = qp::solve(&QuadraticProgram {
            hessian: &hess,
            linear: &lin,
            eq_matrix: &eq_m,
            eq_rhs: &eq_r,
            ineq_matrix: &ineq_m,
            ineq_rhs: &ineq_r,
        })
        .map_err(|e| OptimalityError::Shape(format!("terminal multiplier program: {e}")))?;
        sol.x.map(|v| v.max(0.0))
    };

    let mut bundle = Multipliers::zeros(k, n, d, s);
    bundle.mu0 = mu0;
    for (c, &j) in idx.iter().enumerate() {
        bundle.eta[k][j] = eta_active[c];
    }
    let mut z = DVector::zeros(m);
    z.rows_mut(0, n).copy_from(&(&l_mat * &eta_active + &l_off));
    bundle.p[k] = z.rows(0, n).into_owned();
    for i in (0..k).rev() {
        let (st, _, _) = &stages[i];
        let y = &st.f * &z + &st.fv;
        let mut next = y.clone();
        if !st.faces.is_empty() {
            let gamma = -(&st.kp * &y + &st.ks);
            next += &st.g * &gamma;
            for (c, &j) in st.faces.iter().enumerate() {
                bundle.gamma[i][j] = gamma[c];
            }
        }
        z = next;
        bundle.p[i] = z.rows(0, n).into_owned();
    }
    for i in 0..k {
        let (_, ju) = ctx.jacobians(i);
        let w = ctx.adjoint_argument(i, mu0, &bundle.p[i + 1]);
        bundle.q[i] = ju.transpose() * w * ctx.h(i) - &ctx.xi[i].u * mu0;
        bundle.eta[i] = ctx.primal_eta[i].clone();
    }
    Ok(Some(bundle))
}

/// Updates the classification from a bundle. Returns true when anything changed.
fn reclassify(ctx: &Context, cls: &mut Classification, b: &Multipliers, opts: &RecoveryOptions) -> bool {
    let v = &opts.verify;
    let tol = v.tol * v.dual_scale;
    let mut changed = false;
    for i in 0..ctx.traj.k() {
        let w = ctx.adjoint_argument(i, b.mu0, &b.p[i + 1]);
        let sets = ctx.polyhedron().dual_index_sets(&w, v.dual_tol * v.dual_scale, v.rule);
        for j in 0..ctx.polyhedron().face_count() {
            let gamma = b.gamma[i][j];
            if cls.dropped[i][j] || gamma.abs() <= tol {
                continue;
            }
            if !sets.contains(j) || (sets.positive.contains(&j) && gamma < 0.0) {
                cls.dropped[i][j] = true;
                changed = true;
            }
        }
        for (l, &(lo, hi)) in ctx.control_bounds(i).iter().enumerate() {
            if cls.pinned[i][l] || lo == hi {
                continue;
            }
            let q = b.q[i][l];
            if (lo && q > tol) || (hi && q < -tol) {
                cls.pinned[i][l] = true;
                changed = true;
            }
        }
    }
    changed
}

fn attempt(ctx: &Context, mu0: f64, opts: &RecoveryOptions) -> Result<Option<Recovery>, OptimalityError> {
    let k = ctx.traj.k();
    let mut cls = Classification {
        dropped: vec![vec![false; ctx.prob.polyhedron.face_count()]; k],
        pinned: vec![vec![false; ctx.prob.control_box.dim()]; k],
    };
    let mut rounds = 0;
    loop {
        rounds += 1;
        let Some(bundle) = sweep(ctx, &cls, mu0, opts)? else {
            return Ok(None);
        };
        if rounds >= opts.max_rounds || !reclassify(ctx, &mut cls, &bundle, opts) {
            let report = verify_in_context(ctx, &bundle, &opts.verify)?;
            return Ok(Some(Recovery {
                multipliers: bundle,
                report,
                rounds,
            }));
        }
    }
}

/// Searches for a bundle satisfying every condition, first with `μ₀ = 1`
/// and then with `μ₀ = 0` normalized by `Σ η_kj = 1`.
pub fn recover_multipliers(
    traj: &Trajectory,
    controls: &ControlSignal,
    prob: &DiscreteProblem,
    opts: &RecoveryOptions,
) -> Result<Recovery, OptimalityError> {
    let ctx = Context::new(traj, controls, prob, opts.verify.xi_mode)?;
    let mut best: Option<Recovery> = None;
    let mu0s: &[f64] = if opts.try_abnormal { &[1.0, 0.0] } else { &[1.0] };
    for &mu0 in mu0s {
        if let Some(r) = attempt(&ctx, mu0, opts)? {
            if r.report.verdict {
                return Ok(r);
            }
            if best.as_ref().map_or(true, |b| r.report.worst_failure() < b.report.worst_failure()) {
                best = Some(r);
            }
        }
    }
    let worst = best.as_ref().map_or(f64::INFINITY, |b| b.report.worst_failure());
    Err(OptimalityError::NoCertificate {
        worst,
        best: Box::new(best.map(|b| (b.multipliers, b.report))),
    })
}
