//! The block manifold model: minimize `f(x, y)` over `x ∈ St(n, k)`, `y ∈ R^m`
//! subject to equalities `c(x, y) = 0` and inequalities `h(x, y) ≤ 0`.

use nalgebra::{DMatrix, DVector};

use crate::manifold::ManifoldPoint;

/// Iterate of the block model.
#[derive(Clone, Debug)]
pub struct BlockPoint {
    pub x: ManifoldPoint,
    pub y: DVector<f64>,
}

impl BlockPoint {
    pub fn new(x: ManifoldPoint, y: DVector<f64>) -> Self {
        Self { x, y }
    }
}

/// Euclidean gradient of a scalar function of `(x, y)`.
///
/// The `x` block is the ambient gradient; Riemannian gradients are obtained
/// by tangent projection at the point of evaluation.
#[derive(Clone, Debug)]
pub struct BlockGradient {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl BlockGradient {
    pub fn zeros(x_shape: (usize, usize), m: usize) -> Self {
        Self { x: DMatrix::zeros(x_shape.0, x_shape.1), y: DVector::zeros(m) }
    }
}

/// Affine description of the feasible `y` set for a fixed `x`:
/// `eq_matrix·y = eq_rhs`, `ineq_matrix·y ≤ ineq_rhs`.
///
/// Row order matches the problem's equality and inequality rows.
#[derive(Clone, Debug)]
pub struct AffineSystem {
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
}

/// Smooth constrained problem over `St(n, k) × R^m`.
///
/// Implementations must be pure: every method is a function of its inputs.
pub trait BlockProblem: Send + Sync {
    fn x_shape(&self) -> (usize, usize);
    fn y_dim(&self) -> usize;
    fn num_eq(&self) -> usize;
    fn num_ineq(&self) -> usize;

    fn objective(&self, z: &BlockPoint) -> f64;
    fn objective_grad(&self, z: &BlockPoint) -> BlockGradient;

    fn eq_values(&self, z: &BlockPoint) -> DVector<f64>;
    fn eq_grads(&self, z: &BlockPoint) -> Vec<BlockGradient>;

    fn ineq_values(&self, z: &BlockPoint) -> DVector<f64>;
    fn ineq_grads(&self, z: &BlockPoint) -> Vec<BlockGradient>;

    /// Whether inequality row `j` varies with `x`. Rows that depend on `y`
    /// alone are skipped by the x-phase.
    fn ineq_depends_on_x(&self, _j: usize) -> bool {
        true
    }

    /// The constraint set in `y` for fixed `x`, when every row is affine in `y`.
    fn affine_in_y(&self, _x: &ManifoldPoint) -> Option<AffineSystem> {
        None
    }
}

/// Feasibility residuals: `‖c‖₂` and `max(h, 0)` in max-norm.
pub fn residuals<P: BlockProblem + ?Sized>(problem: &P, z: &BlockPoint) -> (f64, f64) {
    let eq = problem.eq_values(z).norm();
    let ineq = positive_part_max(&problem.ineq_values(z));
    (eq, ineq)
}

pub(crate) fn positive_part_max(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, &g| acc.max(g))
}
