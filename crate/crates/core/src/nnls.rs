//! Lawson–Hanson active-set least squares with an optional block of free
//! (unconstrained) coefficients:
//!
//! ```text
//! minimize ‖C·w − b‖  subject to  w_j ≥ 0 for j ≥ n_free
//! ```
//!
//! The systems here are small and dense (a few dozen columns), so the passive
//! subproblems are solved through the Gram matrix `CᵀC` with a symmetric
//! pseudo-inverse and one step of iterative refinement against the true
//! residual.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct NnlsSolution {
    pub coeffs: DVector<f64>,
    /// `b − C·w`
    pub residual: DVector<f64>,
    pub iterations: usize,
}

/// Default pivot cap `10·q²` for `q` columns.
pub fn default_iteration_cap(columns: usize) -> usize {
    10 * columns.max(1).pow(2)
}

/// Plain NNLS: every coefficient constrained to be nonnegative.
pub fn nnls(c: &DMatrix<f64>, b: &DVector<f64>, max_iter: usize) -> Result<NnlsSolution> {
    nnls_with_free(c, b, 0, max_iter)
}

/// Least squares with the first `n_free` coefficients free and the rest
/// nonnegative.
pub fn nnls_with_free(
    c: &DMatrix<f64>,
    b: &DVector<f64>,
    n_free: usize,
    max_iter: usize,
) -> Result<NnlsSolution> {
    let q = c.ncols();
    assert_eq!(c.nrows(), b.len(), "row count of C must match b");
    assert!(n_free <= q, "more free columns than columns");
    let gram = c.transpose() * c;
    let col_norms: Vec<f64> = (0..q).map(|j| gram[(j, j)].sqrt()).collect();
    let b_norm = b.norm();
    let mut w = DVector::zeros(q);
    if q == 0 || b_norm == 0.0 {
        return Ok(NnlsSolution { coeffs: w, residual: b.clone(), iterations: 0 });
    }
    let dual_tol = 1e-12 * b_norm;
    let mut passive: Vec<usize> = (0..n_free).collect();
    let mut in_passive = vec![false; q];
    for &j in &passive {
        in_passive[j] = true;
    }
    if !passive.is_empty() {
        let z = solve_passive(c, &gram, b, &passive);
        for (k, &j) in passive.iter().enumerate() {
            w[j] = z[k];
        }
    }

    let mut iterations = 0;
    let mut skipped = vec![false; q];
    loop {
        let residual = b - c * &w;
        let dual = c.transpose() * &residual;
        let mut entering = None;
        let mut best = dual_tol;
        for j in n_free..q {
            if in_passive[j] || skipped[j] || col_norms[j] == 0.0 {
                continue;
            }
            let score = dual[j] / col_norms[j];
            if score > best {
                best = score;
                entering = Some(j);
            }
        }
        let Some(t) = entering else {
            return Ok(NnlsSolution { coeffs: w, residual, iterations });
        };
        passive.push(t);
        in_passive[t] = true;

        let mut first = true;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::NoConvergence { what: "NNLS active-set pivoting", iterations: max_iter });
            }
            let z = solve_passive(c, &gram, b, &passive);
            let infeasible: Vec<usize> =
                (0..passive.len()).filter(|&k| passive[k] >= n_free && z[k] <= 0.0).collect();
            if infeasible.is_empty() {
                for (k, &j) in passive.iter().enumerate() {
                    w[j] = z[k];
                }
                skipped.iter_mut().for_each(|s| *s = false);
                break;
            }
            if first && infeasible.iter().any(|&k| passive[k] == t) && w[t] == 0.0 {
                // The entering column cannot move off zero: numerically it
                // adds nothing. Drop it and look for another candidate.
                passive.retain(|&j| j != t);
                in_passive[t] = false;
                skipped[t] = true;
                break;
            }
            first = false;
            let mut alpha = 1.0_f64;
            for &k in &infeasible {
                let j = passive[k];
                let denom = w[j] - z[k];
                if denom > 0.0 {
                    alpha = alpha.min(w[j] / denom);
                }
            }
            for (k, &j) in passive.iter().enumerate() {
                w[j] += alpha * (z[k] - w[j]);
            }
            let leaving: Vec<usize> = passive
                .iter()
                .copied()
                .filter(|&j| j >= n_free && w[j] <= 1e-15 * (1.0 + w.amax()))
                .collect();
            for j in leaving {
                w[j] = 0.0;
                in_passive[j] = false;
            }
            passive.retain(|&j| in_passive[j]);
        }
    }
}

/// Minimum-norm least squares on the passive columns.
fn solve_passive(c: &DMatrix<f64>, gram: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> DVector<f64> {
    let k = passive.len();
    let sub = DMatrix::from_fn(k, k, |r, s| gram[(passive[r], passive[s])]);
    let pinv = symmetric_pinv(&sub);
    let cols = c.select_columns(passive);
    let mut z = &pinv * (cols.transpose() * b);
    let r = b - &cols * &z;
    z += &pinv * (cols.transpose() * r);
    z
}

/// Pseudo-inverse of a symmetric positive semidefinite matrix.
pub(crate) fn symmetric_pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(a.clone());
    let top = eig.eigenvalues.amax();
    let cutoff = 1e-13 * top.max(f64::MIN_POSITIVE);
    let mut inv = DMatrix::zeros(n, n);
    for i in 0..n {
        let l = eig.eigenvalues[i];
        if l > cutoff {
            let v = eig.eigenvectors.column(i);
            inv += (v * v.transpose()) / l;
        }
    }
    inv
}
