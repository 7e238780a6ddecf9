//! Euclidean projection onto a polyhedron `{w : E·w = e, A·w ≤ a}` by a
//! primal active-set method started from a feasible point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::nnls::symmetric_pinv;
use crate::problem::AffineSystem;

#[derive(Clone, Debug)]
pub struct PolyhedralProjection {
    pub point: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    /// One entry per inequality row, zero off the final working set.
    pub ineq_multipliers: DVector<f64>,
    pub iterations: usize,
}

/// Largest violation of `sys` at `w` (equalities in absolute value).
pub fn violation(sys: &AffineSystem, w: &DVector<f64>) -> f64 {
    let eq = (&sys.eq_matrix * w - &sys.eq_rhs).amax();
    let ineq = (&sys.ineq_matrix * w - &sys.ineq_rhs).iter().fold(0.0_f64, |acc, &v| acc.max(v));
    eq.max(ineq)
}

/// Projects `target` onto the polyhedron described by `sys`, starting from the
/// feasible point `start`.
pub fn project_polyhedron(
    target: &DVector<f64>,
    sys: &AffineSystem,
    start: &DVector<f64>,
    max_iter: usize,
) -> Result<PolyhedralProjection> {
    let m = target.len();
    let p = sys.eq_matrix.nrows();
    let rows = sys.ineq_matrix.nrows();
    let scale = 1.0 + start.amax() + target.amax();
    let feas_tol = 1e-8 * scale;
    if violation(sys, start) > feas_tol {
        return Err(Error::Degenerate("active-set projection needs a feasible start".into()));
    }

    let mut w = start.clone();
    let slack = |w: &DVector<f64>, j: usize| sys.ineq_rhs[j] - sys.ineq_matrix.row(j).dot(&w.transpose());

    // Initial working set: the active rows that are independent of the
    // equalities and of each other.
    let mut working: Vec<usize> = Vec::new();
    for j in 0..rows {
        if slack(&w, j).abs() <= 1e-12 * scale && independent_of(sys, &working, sys.ineq_matrix.row(j).transpose()) {
            working.push(j);
        }
    }

    for iter in 1..=max_iter {
        let a_w = stacked(sys, &working);
        let gram = &a_w * a_w.transpose();
        let pinv = symmetric_pinv(&gram);
        let diff = target - &w;
        let nu = &pinv * (&a_w * &diff);
        let step = &diff - a_w.transpose() * &nu;

        if step.norm() <= 1e-13 * scale {
            let mut drop = None;
            let mut most_negative = -1e-12 * scale;
            for (k, &j) in working.iter().enumerate() {
                if nu[p + k] < most_negative {
                    most_negative = nu[p + k];
                    drop = Some(j);
                }
            }
            match drop {
                Some(j) => working.retain(|&r| r != j),
                None => {
                    let mut ineq_multipliers = DVector::zeros(rows);
                    for (k, &j) in working.iter().enumerate() {
                        ineq_multipliers[j] = nu[p + k].max(0.0);
                    }
                    return Ok(PolyhedralProjection {
                        point: w,
                        eq_multipliers: nu.rows(0, p).into_owned(),
                        ineq_multipliers,
                        iterations: iter,
                    });
                }
            }
            continue;
        }

        let mut alpha = 1.0_f64;
        let mut blocking = None;
        for j in 0..rows {
            if working.contains(&j) {
                continue;
            }
            let rate = sys.ineq_matrix.row(j).dot(&step.transpose());
            if rate > 1e-14 * step.norm() * sys.ineq_matrix.row(j).norm() {
                let limit = slack(&w, j).max(0.0) / rate;
                if limit < alpha {
                    alpha = limit;
                    blocking = Some(j);
                }
            }
        }
        w += &step * alpha;
        if let Some(j) = blocking {
            working.push(j);
        }
        debug_assert_eq!(w.len(), m);
    }
    Err(Error::NoConvergence { what: "polyhedral projection", iterations: max_iter })
}

fn stacked(sys: &AffineSystem, working: &[usize]) -> DMatrix<f64> {
    let p = sys.eq_matrix.nrows();
    let m = sys.eq_matrix.ncols().max(sys.ineq_matrix.ncols());
    let mut out = DMatrix::zeros(p + working.len(), m);
    for i in 0..p {
        out.set_row(i, &sys.eq_matrix.row(i));
    }
    for (k, &j) in working.iter().enumerate() {
        out.set_row(p + k, &sys.ineq_matrix.row(j));
    }
    out
}

fn independent_of(sys: &AffineSystem, working: &[usize], row: DVector<f64>) -> bool {
    let a_w = stacked(sys, working);
    if a_w.nrows() == 0 {
        return row.norm() > 0.0;
    }
    let pinv = symmetric_pinv(&(&a_w * a_w.transpose()));
    let coef = pinv * (&a_w * &row);
    let rest = &row - a_w.transpose() * coef;
    rest.norm() > 1e-9 * row.norm()
}
