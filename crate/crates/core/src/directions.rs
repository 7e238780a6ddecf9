//! Stationarity measures and their steepest feasible directions.
//!
//! Each measure is the optimal value of
//!
//! ```text
//! minimize ⟨g, d⟩  s.t.  ⟨e_i, d⟩ = 0,  ⟨a_j, d⟩ ≤ 0 (j active),  ‖d‖ ≤ 1
//! ```
//!
//! in absolute value, where `g`, `e_i`, `a_j` are the objective, equality and
//! almost-active inequality gradients restricted to the block being updated.
//! By conic duality the value equals
//! `min { ‖g + Σ λ_i e_i + Σ μ_j a_j‖ : μ ≥ 0 }`, a least-squares problem with
//! free `λ` and nonnegative `μ` solved by [`crate::nnls`]. With `r` the optimal
//! residual the minimizing direction is `d = −r/‖r‖`.
//!
//! Gradients in the manifold block are Riemannian (tangent-projected), so the
//! ambient trace product is the metric and `d` is automatically tangent.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::manifold::{project_tangent_raw, ManifoldPoint, TangentVector};
use crate::nnls::{default_iteration_cap, nnls_with_free};
use crate::problem::{BlockGradient, BlockPoint, BlockProblem};

/// Residuals at or below this norm are reported as exact stationarity.
pub const DEGENERATE_RESIDUAL: f64 = 1e-14;

/// Which block the measure is taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum MeasureKind {
    /// `y` only, manifold block frozen.
    Y,
    /// Manifold block only, `y` frozen.
    X,
    /// Both blocks on the product manifold.
    Joint,
}

/// How an equality Gram matrix without full rank is treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LicqPolicy {
    /// Fail with [`Error::LicqViolation`].
    Strict,
    /// Use minimum-norm multipliers; the measure itself stays well defined.
    Lenient,
}

/// Steepest feasible direction in the product space.
#[derive(Clone, Debug)]
pub struct BlockDirection {
    /// Tangent component at the current manifold point (zero for [`MeasureKind::Y`]).
    pub x: DMatrix<f64>,
    /// `y` component (zero for [`MeasureKind::X`]).
    pub y: DVector<f64>,
}

impl BlockDirection {
    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.y.norm_squared()).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct DirectionResult {
    pub kind: MeasureKind,
    pub measure: f64,
    pub direction: BlockDirection,
    /// Equality multipliers `λ`, one per equality row.
    pub eq_multipliers: DVector<f64>,
    /// Inequality multipliers `μ ≥ 0`, aligned with `active_set`.
    pub ineq_multipliers: DVector<f64>,
    /// Inequality rows entering the subproblem.
    pub active_set: Vec<usize>,
    /// Whether the equality gradients were linearly independent.
    pub licq: bool,
}

impl DirectionResult {
    /// The direction's manifold component as a tangent vector at `x`.
    pub fn tangent(&self, x: &ManifoldPoint) -> crate::Result<TangentVector> {
        crate::manifold::tangent_project(x, &self.direction.x)
    }

    /// Checks the certificate identities against freshly evaluated gradients.
    /// Returns human-readable violations; empty when all hold.
    pub fn verify<P: BlockProblem + ?Sized>(&self, problem: &P, z: &BlockPoint, tol: f64) -> Vec<String> {
        let grads = BlockGradients::evaluate(problem, z, self.kind);
        let d = flatten(self.kind, &self.direction.x, &self.direction.y);
        let scale = 1.0 + grads.objective.norm();
        let mut issues = Vec::new();
        if d.norm() > 1.0 + 1e-8 {
            issues.push(format!("direction norm {} exceeds 1", d.norm()));
        }
        for (i, e) in grads.eq.iter().enumerate() {
            let v = e.dot(&d);
            if v.abs() > tol * (1.0 + e.norm()) {
                issues.push(format!("equality {i}: ⟨grad c, d⟩ = {v:e}"));
            }
        }
        for &j in &self.active_set {
            let v = grads.ineq[j].dot(&d);
            if v > tol * (1.0 + grads.ineq[j].norm()) {
                issues.push(format!("inequality {j}: ⟨grad g, d⟩ = {v:e}"));
            }
        }
        let slope = grads.objective.dot(&d);
        if (slope + self.measure).abs() > tol * scale {
            issues.push(format!("⟨grad f, d⟩ = {slope:e} but measure = {:e}", self.measure));
        }
        if self.ineq_multipliers.iter().any(|&m| m < 0.0) {
            issues.push("negative inequality multiplier".into());
        }
        // Dual certificate: the measure is the norm of the multiplier residual.
        let mut r = grads.objective.clone();
        for (i, e) in grads.eq.iter().enumerate() {
            r += e * self.eq_multipliers[i];
        }
        for (k, &j) in self.active_set.iter().enumerate() {
            r += &grads.ineq[j] * self.ineq_multipliers[k];
        }
        if (r.norm() - self.measure).abs() > tol * scale {
            issues.push(format!("dual residual norm {:e} differs from measure {:e}", r.norm(), self.measure));
        }
        issues
    }
}

/// Indices `j` with `gvals_j ≥ −δ` (violations within tolerance count as active).
pub fn active_set(gvals: &DVector<f64>, delta: f64) -> Vec<usize> {
    gvals.iter().enumerate().filter(|(_, &g)| g >= -delta).map(|(j, _)| j).collect()
}

/// Generic measure from flattened gradients in a common inner-product space.
pub fn measure_from_gradients(
    objective: &DVector<f64>,
    eq: &[DVector<f64>],
    ineq: &[DVector<f64>],
    licq: LicqPolicy,
) -> Result<Certificate> {
    let dim = objective.len();
    let p = eq.len();
    let q = p + ineq.len();
    let mut cols = DMatrix::zeros(dim, q);
    for (k, g) in eq.iter().chain(ineq.iter()).enumerate() {
        cols.set_column(k, g);
    }
    let licq_ok = check_licq(&cols.columns(0, p).into_owned(), licq)?;
    let target = -objective;
    let sol = nnls_with_free(&cols, &target, p, default_iteration_cap(q))?;
    // sol.residual = −g − Σλe − Σμa = −r
    let r_norm = sol.residual.norm();
    // Floating-point error of forming the residual; anything below it is noise.
    let noise = 64.0
        * f64::EPSILON
        * (objective.norm() + cols.column_iter().zip(sol.coeffs.iter()).map(|(c, k)| c.norm() * k.abs()).sum::<f64>());
    let (measure, direction) = if r_norm <= DEGENERATE_RESIDUAL.max(noise) {
        (0.0, DVector::zeros(dim))
    } else {
        (r_norm, &sol.residual / r_norm)
    };
    Ok(Certificate {
        measure,
        direction,
        eq_multipliers: sol.coeffs.rows(0, p).into_owned(),
        ineq_multipliers: sol.coeffs.rows(p, q - p).into_owned(),
        licq: licq_ok,
    })
}

/// Output of [`measure_from_gradients`].
#[derive(Clone, Debug)]
pub struct Certificate {
    pub measure: f64,
    pub direction: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    pub licq: bool,
}

fn check_licq(eq_cols: &DMatrix<f64>, policy: LicqPolicy) -> Result<bool> {
    let p = eq_cols.ncols();
    if p == 0 {
        return Ok(true);
    }
    let gram = eq_cols.transpose() * eq_cols;
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.max();
    let (imin, low) = eig.eigenvalues.argmin();
    // σ_min/σ_max ≤ 1e-8
    if low > 1e-16 * top && top > 0.0 {
        return Ok(true);
    }
    match policy {
        LicqPolicy::Lenient => Ok(false),
        LicqPolicy::Strict => {
            let v = eig.eigenvectors.column(imin);
            let big = v.amax();
            let indices = (0..p).filter(|&i| v[i].abs() >= 0.1 * big).collect();
            Err(Error::LicqViolation { indices })
        }
    }
}

/// Flattened, block-restricted gradients at a point.
pub(crate) struct BlockGradients {
    pub objective: DVector<f64>,
    pub eq: Vec<DVector<f64>>,
    pub ineq: Vec<DVector<f64>>,
    pub ineq_values: DVector<f64>,
}

impl BlockGradients {
    pub fn evaluate<P: BlockProblem + ?Sized>(problem: &P, z: &BlockPoint, kind: MeasureKind) -> Self {
        let restrict = |g: &BlockGradient| {
            let rx = project_tangent_raw(z.x.factor(), &g.x);
            flatten(kind, &rx, &g.y)
        };
        BlockGradients {
            objective: restrict(&problem.objective_grad(z)),
            eq: problem.eq_grads(z).iter().map(restrict).collect(),
            ineq: problem.ineq_grads(z).iter().map(restrict).collect(),
            ineq_values: problem.ineq_values(z),
        }
    }
}

pub(crate) fn flatten(kind: MeasureKind, x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    match kind {
        MeasureKind::Y => y.clone(),
        MeasureKind::X => DVector::from_column_slice(x.as_slice()),
        MeasureKind::Joint => {
            DVector::from_iterator(x.len() + y.len(), x.as_slice().iter().chain(y.iter()).copied())
        }
    }
}

fn unflatten(kind: MeasureKind, v: &DVector<f64>, shape: (usize, usize), m: usize) -> BlockDirection {
    let (n, k) = shape;
    match kind {
        MeasureKind::Y => BlockDirection { x: DMatrix::zeros(n, k), y: v.clone() },
        MeasureKind::X => BlockDirection { x: DMatrix::from_column_slice(n, k, v.as_slice()), y: DVector::zeros(m) },
        MeasureKind::Joint => BlockDirection {
            x: DMatrix::from_column_slice(n, k, &v.as_slice()[..n * k]),
            y: DVector::from_column_slice(&v.as_slice()[n * k..]),
        },
    }
}

/// Measure of the given kind at `z` with almost-active width `delta`.
pub fn measure<P: BlockProblem + ?Sized>(
    problem: &P,
    z: &BlockPoint,
    kind: MeasureKind,
    delta: f64,
    licq: LicqPolicy,
) -> Result<DirectionResult> {
    let grads = BlockGradients::evaluate(problem, z, kind);
    let active: Vec<usize> = active_set(&grads.ineq_values, delta)
        .into_iter()
        .filter(|&j| kind != MeasureKind::X || problem.ineq_depends_on_x(j))
        .collect();
    let ineq: Vec<DVector<f64>> = active.iter().map(|&j| grads.ineq[j].clone()).collect();
    let cert = measure_from_gradients(&grads.objective, &grads.eq, &ineq, licq)?;
    Ok(DirectionResult {
        kind,
        measure: cert.measure,
        direction: unflatten(kind, &cert.direction, problem.x_shape(), problem.y_dim()),
        eq_multipliers: cert.eq_multipliers,
        ineq_multipliers: cert.ineq_multipliers,
        active_set: active,
        licq: cert.licq,
    })
}

/// `m_y^δ`: measure over `y` with the manifold block fixed.
pub fn measure_y<P: BlockProblem + ?Sized>(problem: &P, z: &BlockPoint, delta: f64) -> Result<DirectionResult> {
    measure(problem, z, MeasureKind::Y, delta, LicqPolicy::Strict)
}

/// `m_x`: measure over the manifold block with `y` fixed.
///
/// Inequality rows that depend on the manifold block and are `δ`-active enter
/// as one-sided constraints; with none present this is the plain
/// least-squares residual of the equality gradients.
pub fn measure_x<P: BlockProblem + ?Sized>(problem: &P, z: &BlockPoint, delta: f64) -> Result<DirectionResult> {
    measure(problem, z, MeasureKind::X, delta, LicqPolicy::Strict)
}

/// `m_KKT^δ`: measure over the product of both blocks.
pub fn measure_kkt<P: BlockProblem + ?Sized>(problem: &P, z: &BlockPoint, delta: f64) -> Result<DirectionResult> {
    measure(problem, z, MeasureKind::Joint, delta, LicqPolicy::Strict)
}

/// `m_x` from precomputed Riemannian gradients at `x`.
pub fn measure_x_from_grads(
    x: &ManifoldPoint,
    grad_f: &TangentVector,
    grads_c: &[TangentVector],
) -> Result<DirectionResult> {
    if grad_f.base() != x || grads_c.iter().any(|g| g.base() != x) {
        return Err(Error::BaseMismatch);
    }
    let empty = DVector::zeros(0);
    let obj = flatten(MeasureKind::X, grad_f.data(), &empty);
    let eq: Vec<DVector<f64>> = grads_c.iter().map(|g| flatten(MeasureKind::X, g.data(), &empty)).collect();
    let cert = measure_from_gradients(&obj, &eq, &[], LicqPolicy::Strict)?;
    Ok(DirectionResult {
        kind: MeasureKind::X,
        measure: cert.measure,
        direction: unflatten(MeasureKind::X, &cert.direction, x.shape(), 0),
        eq_multipliers: cert.eq_multipliers,
        ineq_multipliers: cert.ineq_multipliers,
        active_set: Vec::new(),
        licq: cert.licq,
    })
}
