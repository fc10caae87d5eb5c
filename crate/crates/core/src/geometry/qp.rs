//! Dense strictly convex quadratic programs.
//!
//! Implements the Goldfarb–Idnani dual active-set method for
//!
//! ```text
//!     minimize     1/2 x' G x + a' x
//!     subject to   E x  = e
//!                  A x <= b
//! ```
//!
//! with `G` symmetric positive definite. The method starts from the
//! unconstrained minimizer and adds violated constraints one at a time while
//! keeping the iterate dual feasible, so every intermediate point is optimal
//! for the constraints currently in the working set.
//!
//! The factorization `G = L L'` is carried as `J = L^{-T} Q` where `Q` comes
//! from the QR factorization of `L^{-1} N` for the active normals `N`; adding
//! and dropping constraints updates `J` and the triangular factor `R` with
//! Givens rotations.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("equality constraints are linearly dependent or inconsistent")]
    DependentEqualities,
    #[error("iteration limit reached after {0} iterations")]
    IterationLimit(usize),
}

/// Problem data. Equality and inequality blocks may have zero rows.
#[derive(Debug, Clone)]
pub struct QuadraticProgram<'a> {
    pub hessian: &'a DMatrix<f64>,
    pub linear: &'a DVector<f64>,
    pub eq_matrix: &'a DMatrix<f64>,
    pub eq_rhs: &'a DVector<f64>,
    pub ineq_matrix: &'a DMatrix<f64>,
    pub ineq_rhs: &'a DVector<f64>,
}

/// Optimal point and multipliers.
///
/// Multipliers satisfy `G x + a + E' eq_multipliers + A' ineq_multipliers = 0`
/// with `ineq_multipliers >= 0` and zero on inactive rows.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    /// Inequality rows in the final working set, ascending.
    pub active: Vec<usize>,
    pub iterations: usize,
}

struct Factorization {
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    q: usize,
}

impl Factorization {
    fn directions(&self, normal: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let n = self.j.nrows();
        let d = self.j.tr_mul(normal);
        let mut z = DVector::zeros(n);
        for col in self.q..n {
            z.axpy(d[col], &self.j.column(col), 1.0);
        }
        let mut r = DVector::zeros(self.q);
        for row in (0..self.q).rev() {
            let mut acc = d[row];
            for col in row + 1..self.q {
                acc -= self.r[(row, col)] * r[col];
            }
            r[row] = acc / self.r[(row, row)];
        }
        (d, z, r)
    }

    fn rotate_j(&mut self, a: usize, b: usize, c: f64, s: f64) {
        for row in 0..self.j.nrows() {
            let ja = self.j[(row, a)];
            let jb = self.j[(row, b)];
            self.j[(row, a)] = c * ja + s * jb;
            self.j[(row, b)] = -s * ja + c * jb;
        }
    }

    /// Appends a column given `d = J' n`. Returns false when the new normal is
    /// numerically dependent on the active ones.
    fn add(&mut self, mut d: DVector<f64>) -> bool {
        let n = self.j.nrows();
        for i in (self.q + 1..n).rev() {
            if d[i] == 0.0 {
                continue;
            }
            let h = d[i - 1].hypot(d[i]);
            let c = d[i - 1] / h;
            let s = d[i] / h;
            d[i - 1] = h;
            d[i] = 0.0;
            self.rotate_j(i - 1, i, c, s);
        }
        let scale = d.amax().max(1.0);
        if d[self.q].abs() <= f64::EPSILON * scale * n as f64 {
            return false;
        }
        for row in 0..=self.q {
            self.r[(row, self.q)] = d[row];
        }
        self.q += 1;
        true
    }

    /// Removes the active column at position `pos` and restores triangularity.
    fn drop(&mut self, pos: usize) {
        let q = self.q;
        for col in pos..q - 1 {
            for row in 0..q {
                self.r[(row, col)] = self.r[(row, col + 1)];
            }
        }
        for row in 0..q {
            self.r[(row, q - 1)] = 0.0;
        }
        for j in pos..q - 1 {
            let a = self.r[(j, j)];
            let b = self.r[(j + 1, j)];
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let c = a / h;
            let s = b / h;
            for col in j..q - 1 {
                let ra = self.r[(j, col)];
                let rb = self.r[(j + 1, col)];
                self.r[(j, col)] = c * ra + s * rb;
                self.r[(j + 1, col)] = -s * ra + c * rb;
            }
            self.r[(j + 1, j)] = 0.0;
            self.rotate_j(j, j + 1, c, s);
        }
        self.q -= 1;
    }
}

fn check_dims(qp: &QuadraticProgram<'_>) -> Result<usize, QpError> {
    let n = qp.linear.len();
    if qp.hessian.nrows() != n || qp.hessian.ncols() != n {
        return Err(QpError::Dimension(format!(
            "hessian is {}x{}, expected {n}x{n}",
            qp.hessian.nrows(),
            qp.hessian.ncols()
        )));
    }
    if qp.eq_matrix.nrows() != qp.eq_rhs.len() || (qp.eq_matrix.nrows() > 0 && qp.eq_matrix.ncols() != n) {
        return Err(QpError::Dimension("equality block".into()));
    }
    if qp.ineq_matrix.nrows() != qp.ineq_rhs.len()
        || (qp.ineq_matrix.nrows() > 0 && qp.ineq_matrix.ncols() != n)
    {
        return Err(QpError::Dimension("inequality block".into()));
    }
    Ok(n)
}

/// Solves the program. Entering constraints are the most violated ones
/// (violation scaled by the row norm); ties go to the lowest row index.
pub fn solve(qp: &QuadraticProgram<'_>) -> Result<QpSolution, QpError> {
    let n = check_dims(qp)?;
    let me = qp.eq_rhs.len();
    let mi = qp.ineq_rhs.len();

    let chol = qp
        .hessian
        .clone()
        .cholesky()
        .ok_or(QpError::NotPositiveDefinite)?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(QpError::NotPositiveDefinite)?;
    let mut fac = Factorization {
        j: l_inv.transpose(),
        r: DMatrix::zeros(n, n),
        q: 0,
    };

    // Normals in ">=" orientation: equalities as given, inequalities negated.
    let normal = |id: usize| -> DVector<f64> {
        if id < me {
            qp.eq_matrix.row(id).transpose()
        } else {
            -qp.ineq_matrix.row(id - me).transpose()
        }
    };
    let rhs = |id: usize| -> f64 {
        if id < me {
            qp.eq_rhs[id]
        } else {
            -qp.ineq_rhs[id - me]
        }
    };
    let norms: Vec<f64> = (0..me + mi).map(|id| normal(id).norm()).collect();

    let mut x = -(&fac.j * fac.j.tr_mul(qp.linear));
    let mut active: Vec<usize> = Vec::with_capacity(n);
    let mut u: Vec<f64> = Vec::with_capacity(n);
    let mut iterations = 0usize;

    for id in 0..me {
        let np = normal(id);
        let (d, z, r) = fac.directions(&np);
        let zn = z.dot(&np);
        if z.norm() <= f64::EPSILON * (1.0 + norms[id]) || zn.abs() <= f64::EPSILON {
            return Err(QpError::DependentEqualities);
        }
        let slack = np.dot(&x) - rhs(id);
        let t = -slack / zn;
        x.axpy(t, &z, 1.0);
        for (uj, rj) in u.iter_mut().zip(r.iter()) {
            *uj -= t * rj;
        }
        if !fac.add(d) {
            return Err(QpError::DependentEqualities);
        }
        active.push(id);
        u.push(t);
        iterations += 1;
    }

    let limit = 20 * (n + me + mi) + 100;
    loop {
        // Select the entering constraint.
        let mut entering = None;
        let mut worst = 0.0;
        let x_scale = x.amax();
        for id in me..me + mi {
            if active.contains(&id) || norms[id] == 0.0 {
                continue;
            }
            let slack = normal(id).dot(&x) - rhs(id);
            let tol = 1e-13 * (1.0 + rhs(id).abs() + norms[id] * x_scale);
            if slack < -tol {
                let scaled = -slack / norms[id];
                if scaled > worst {
                    worst = scaled;
                    entering = Some(id);
                }
            }
        }
        let Some(p) = entering else { break };
        let np = normal(p);
        let mut up = 0.0;

        loop {
            iterations += 1;
            if iterations > limit {
                return Err(QpError::IterationLimit(iterations));
            }
            let (d, z, r) = fac.directions(&np);

            // Partial (dual) step: leave the working set.
            let mut t1 = f64::INFINITY;
            let mut leaving = None;
            for (pos, (&id, &rj)) in active.iter().zip(r.iter()).enumerate() {
                if id >= me && rj > 0.0 {
                    let ratio = u[pos] / rj;
                    if ratio < t1 {
                        t1 = ratio;
                        leaving = Some(pos);
                    }
                }
            }
            // Full (primal) step: satisfy p.
            let zn = z.dot(&np);
            let slack = np.dot(&x) - rhs(p);
            let degenerate = z.norm() <= 1e-14 * (1.0 + norms[p]) || zn <= 0.0;
            let t2 = if degenerate { f64::INFINITY } else { -slack / zn };

            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpError::Infeasible);
            }
            if !t2.is_finite() {
                for (uj, rj) in u.iter_mut().zip(r.iter()) {
                    *uj -= t * rj;
                }
                up += t;
                let pos = leaving.expect("finite partial step has a leaving constraint");
                fac.drop(pos);
                active.remove(pos);
                u.remove(pos);
                continue;
            }

            x.axpy(t, &z, 1.0);
            for (uj, rj) in u.iter_mut().zip(r.iter()) {
                *uj -= t * rj;
            }
            up += t;
            if t2 <= t1 {
                if fac.add(d) {
                    active.push(p);
                    u.push(up);
                }
                break;
            }
            let pos = leaving.expect("partial step has a leaving constraint");
            fac.drop(pos);
            active.remove(pos);
            u.remove(pos);
        }
    }

    let mut eq_multipliers = DVector::zeros(me);
    let mut ineq_multipliers = DVector::zeros(mi);
    let mut active_ineq = Vec::new();
    for (&id, &uj) in active.iter().zip(u.iter()) {
        if id < me {
            eq_multipliers[id] = -uj;
        } else {
            ineq_multipliers[id - me] = uj.max(0.0);
            active_ineq.push(id - me);
        }
    }
    active_ineq.sort_unstable();
    let objective = 0.5 * x.dot(&(qp.hessian * &x)) + qp.linear.dot(&x);
    Ok(QpSolution {
        x,
        objective,
        eq_multipliers,
        ineq_multipliers,
        active: active_ineq,
        iterations,
    })
}
