//! Lawson–Hanson nonnegative least squares.

use nalgebra::{DMatrix, DVector};

/// Result of `min ||A x - b||` over `x >= 0`.
#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub residual: f64,
}

fn least_squares(a: &DMatrix<f64>, cols: &[usize], b: &DVector<f64>) -> DVector<f64> {
    let sub = DMatrix::from_fn(a.nrows(), cols.len(), |r, c| a[(r, cols[c])]);
    let svd = sub.svd(true, true);
    let eps = 1e-13 * svd.singular_values.max().max(1.0);
    svd.solve(b, eps)
        .unwrap_or_else(|_| DVector::zeros(cols.len()))
}

/// Solves `min ||A x - b||_2` subject to `x >= 0`.
///
/// Columns enter the passive set by largest dual gradient (lowest index on
/// ties). Zero columns never enter.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> NnlsSolution {
    let m = a.ncols();
    let mut x = DVector::zeros(m);
    if m == 0 {
        return NnlsSolution {
            x,
            residual: b.norm(),
        };
    }
    let col_norms: Vec<f64> = (0..m).map(|j| a.column(j).norm()).collect();
    let scale = col_norms.iter().cloned().fold(0.0, f64::max) * b.norm().max(1.0);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);

    let mut passive = vec![false; m];
    let max_outer = 3 * m + 10;
    for _ in 0..max_outer {
        let resid = b - a * &x;
        let w = a.tr_mul(&resid);
        let mut entering = None;
        let mut best = tol;
        for j in 0..m {
            if !passive[j] && col_norms[j] > 0.0 && w[j] > best {
                best = w[j];
                entering = Some(j);
            }
        }
        let Some(j) = entering else { break };
        passive[j] = true;

        for _ in 0..(3 * m + 10) {
            let cols: Vec<usize> = (0..m).filter(|&c| passive[c]).collect();
            let s_p = least_squares(a, &cols, b);
            if s_p.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (&c, &v) in cols.iter().zip(s_p.iter()) {
                    x[c] = v;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&c, &v) in cols.iter().zip(s_p.iter()) {
                if v <= 0.0 {
                    let denom = x[c] - v;
                    if denom > 0.0 {
                        alpha = alpha.min(x[c] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (&c, &v) in cols.iter().zip(s_p.iter()) {
                x[c] += alpha * (v - x[c]);
            }
            let mut dropped = false;
            for &c in &cols {
                if x[c] <= 1e-15 * (1.0 + x.amax()) {
                    x[c] = 0.0;
                    passive[c] = false;
                    dropped = true;
                }
            }
            if !dropped {
                break;
            }
        }
    }
    let residual = (b - a * &x).norm();
    NnlsSolution { x, residual }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_nonnegative_combination() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 3.0]);
        let sol = nnls(&a, &b);
        assert_relative_eq!(sol.x[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(sol.x[1], 3.0, epsilon = 1e-14);
        assert!(sol.residual < 1e-14);
    }

    #[test]
    fn clamps_negative_direction() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let b = DVector::from_vec(vec![-2.0, 1.0]);
        let sol = nnls(&a, &b);
        assert_eq!(sol.x[0], 0.0);
        assert_relative_eq!(sol.residual, 5f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn matches_enumeration_on_small_problem() {
        // Three generators in the plane; brute force over supports.
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.5, 0.2, 0.3, -1.0]);
        let b = DVector::from_vec(vec![0.3, -0.9]);
        let sol = nnls(&a, &b);
        let mut best = b.norm();
        for mask in 1u32..8 {
            let cols: Vec<usize> = (0..3).filter(|c| mask & (1 << c) != 0).collect();
            let s = least_squares(&a, &cols, &b);
            if s.iter().all(|&v| v >= 0.0) {
                let mut x = DVector::zeros(3);
                for (&c, &v) in cols.iter().zip(s.iter()) {
                    x[c] = v;
                }
                best = best.min((&a * x - &b).norm());
            }
        }
        assert_relative_eq!(sol.residual, best, epsilon = 1e-12);
        assert!(sol.x.iter().all(|&v| v >= 0.0));
    }
}
