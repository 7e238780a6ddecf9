//! Semidefinite relaxation of the two-dimensional QCQP,
//! `min ⟨I, X⟩ s.t. ⟨A_i, X⟩ ≥ 1, X ⪰ 0`, solved by a log-barrier method on
//! the chart `X = [[u, v], [v, w]]`.

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector3};

use crate::error::{Error, Result};

/// Duality-gap stopping tolerance.
pub const GAP_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct SdrSolution {
    pub x: Matrix2<f64>,
    pub value: f64,
    /// Barrier bound `(m + 2)/t` on the optimality gap at exit.
    pub gap: f64,
    pub newton_steps: usize,
}

struct Barrier<'a> {
    a: &'a [Matrix2<f64>],
}

impl Barrier<'_> {
    /// `⟨A, X⟩` as a linear function of `(u, v, w)`.
    fn row(a: &Matrix2<f64>) -> Vector3<f64> {
        Vector3::new(a[(0, 0)], a[(0, 1)] + a[(1, 0)], a[(1, 1)])
    }

    fn strictly_feasible(&self, p: &Vector3<f64>) -> bool {
        let det = p[0] * p[2] - p[1] * p[1];
        p[0] > 0.0 && p[2] > 0.0 && det > 0.0 && self.a.iter().all(|a| Self::row(a).dot(p) > 1.0)
    }

    /// `t·(u + w) − log det X − Σ log(⟨A_i, X⟩ − 1)`.
    fn value(&self, t: f64, p: &Vector3<f64>) -> f64 {
        if !self.strictly_feasible(p) {
            return f64::INFINITY;
        }
        let det = p[0] * p[2] - p[1] * p[1];
        let mut val = t * (p[0] + p[2]) - det.ln();
        for a in self.a {
            val -= (Self::row(a).dot(p) - 1.0).ln();
        }
        val
    }

    fn derivatives(&self, t: f64, p: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        let (u, v, w) = (p[0], p[1], p[2]);
        let det = u * w - v * v;
        let ddet = Vector3::new(w, -2.0 * v, u);
        let hdet = Matrix3::new(0.0, 0.0, 1.0, 0.0, -2.0, 0.0, 1.0, 0.0, 0.0);
        let mut grad = Vector3::new(t, 0.0, t) - ddet / det;
        let mut hess = ddet * ddet.transpose() / (det * det) - hdet / det;
        for a in self.a {
            let r = Self::row(a);
            let s = r.dot(p) - 1.0;
            grad -= r / s;
            hess += r * r.transpose() / (s * s);
        }
        (grad, hess)
    }
}

/// Solves the relaxation for PD constraint matrices.
pub fn sdr_solve(a: &[Matrix2<f64>]) -> Result<SdrSolution> {
    if a.is_empty() {
        return Err(Error::Config("relaxation needs at least one constraint".into()));
    }
    let barrier = Barrier { a };
    // κI is strictly feasible once κ·tr(A_i) > 1 for every i.
    let min_trace = a.iter().map(|m| m.trace()).fold(f64::INFINITY, f64::min);
    if !(min_trace > 0.0) {
        return Err(Error::Degenerate("constraint matrices must have positive trace".into()));
    }
    let kappa = 2.0 / min_trace;
    let mut p = Vector3::new(kappa, 0.0, kappa);
    let nu = (a.len() + 2) as f64;
    let mut t = 1.0;
    let mut newton_steps = 0;
    loop {
        // Centering by damped Newton.
        for _ in 0..200 {
            let (g, h) = barrier.derivatives(t, &p);
            let step = newton_step(&h, &g)?;
            let decrement = -g.dot(&step);
            if decrement / 2.0 <= 1e-12 {
                break;
            }
            let f0 = barrier.value(t, &p);
            let mut s = 1.0;
            while barrier.value(t, &(p + step * s)) > f0 - 0.25 * s * decrement {
                s *= 0.5;
                if s < 1e-14 {
                    break;
                }
            }
            p += step * s;
            newton_steps += 1;
        }
        if nu / t <= GAP_TOL {
            break;
        }
        t *= 10.0;
        if t > 1e14 {
            return Err(Error::NoConvergence { what: "barrier method", iterations: newton_steps });
        }
    }
    let x = Matrix2::new(p[0], p[1], p[1], p[2]);
    Ok(SdrSolution { value: p[0] + p[2], x, gap: nu / t, newton_steps })
}

/// `−H⁻¹g`, with eigenvalues floored when `H` is numerically singular (flat
/// directions along a face of optimal solutions).
fn newton_step(h: &Matrix3<f64>, g: &Vector3<f64>) -> Result<Vector3<f64>> {
    if let Some(c) = h.cholesky() {
        return Ok(-c.solve(g));
    }
    let eig = h.symmetric_eigen();
    let top = eig.eigenvalues.amax();
    if !(top > 0.0 && top.is_finite()) {
        return Err(Error::Numeric("barrier Hessian is degenerate".into()));
    }
    let floor = 1e-12 * top;
    let mut step = Vector3::zeros();
    for k in 0..3 {
        let v = eig.eigenvectors.column(k);
        step -= v * (v.dot(g) / eig.eigenvalues[k].max(floor));
    }
    Ok(step)
}

/// Converts a dynamic 2×2 matrix.
pub fn to_fixed(m: &DMatrix<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}
