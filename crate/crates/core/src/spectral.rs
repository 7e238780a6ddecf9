//! Symmetric-matrix problems and their eigendecomposed form.
//!
//! A [`MatrixProblem`] over symmetric `X` with objective `F`, coordinate
//! equalities `G(X) = 0`, coordinate inequalities `H(X) ≤ 0` and spectral
//! inequalities `g(λ(X)) ≤ 0` becomes a [`DecomposedProblem`] over
//! `(Q, λ) ∈ O(n) × R^n` with `X = Q·Diag(λ)·Qᵀ`. The decomposed inequality
//! rows are, in order: coordinate inequalities, spectral rows, then `n − 1`
//! ordering rows `λ_{i+1} − λ_i ≤ 0`.
//!
//! Gradients follow the chain rule
//! `∂/∂λ_i F(QΛQᵀ) = q_iᵀ∇F q_i` and `∇_Q F(QΛQᵀ) = (∇F + ∇Fᵀ)·Q·Λ`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{dims, Error, Result};
use crate::manifold::{apply_sign_convention, tangent_project, ManifoldPoint, TangentVector};
use crate::problem::{AffineSystem, BlockGradient, BlockPoint, BlockProblem};

/// Symmetry tolerance of [`SymmetricMatrix`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A real symmetric matrix, symmetrized on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Symmetrizes `m` as `(m + mᵀ)/2`. Panics if `m` is not square.
    pub fn new(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "symmetric matrix must be square");
        let sym = (&m + m.transpose()) * 0.5;
        Self(sym)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &DVector<f64>) -> Self {
        Self(DMatrix::from_diagonal(d))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Eigen-pair representation `(Q, λ)` with `λ` non-increasing.
#[derive(Clone, Debug)]
pub struct SpectralPoint {
    pub q: ManifoldPoint,
    pub lam: DVector<f64>,
}

impl SpectralPoint {
    pub fn new(q: ManifoldPoint, lam: DVector<f64>) -> Result<Self> {
        let (n, k) = q.shape();
        if n != k || lam.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("square Q and λ of length {n}"),
                found: format!("Q {}, λ {}", dims(n, k), lam.len()),
            });
        }
        Ok(Self { q, lam })
    }

    pub fn n(&self) -> usize {
        self.lam.len()
    }

    pub fn is_sorted(&self) -> bool {
        self.lam.as_slice().windows(2).all(|w| w[0] >= w[1] - 1e-12)
    }
}

impl From<SpectralPoint> for BlockPoint {
    fn from(p: SpectralPoint) -> Self {
        BlockPoint::new(p.q, p.lam)
    }
}

impl From<BlockPoint> for SpectralPoint {
    fn from(z: BlockPoint) -> Self {
        SpectralPoint { q: z.x, lam: z.y }
    }
}

/// Eigendecomposition with eigenvalues in non-increasing order.
///
/// Ties keep ascending column order of the underlying solver; every
/// eigenvector column has its largest-magnitude entry made positive.
pub fn eig_sorted(x: &SymmetricMatrix) -> Result<SpectralPoint> {
    let n = x.n();
    let eig = SymmetricEigen::try_new(x.data().clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let lam = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut q = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        q.set_column(dst, &eig.eigenvectors.column(src));
    }
    apply_sign_convention(&mut q);
    Ok(SpectralPoint { q: ManifoldPoint::from_orthonormal(q), lam })
}

/// Eigenvalues of `x` in non-increasing order.
pub fn sorted_eigenvalues(x: &SymmetricMatrix) -> Result<DVector<f64>> {
    Ok(eig_sorted(x)?.lam)
}

/// `Q·Diag(λ)·Qᵀ`, symmetrized.
pub fn reconstruct(p: &SpectralPoint) -> SymmetricMatrix {
    SymmetricMatrix::new(reconstruct_raw(p.q.factor(), &p.lam))
}

pub(crate) fn reconstruct_raw(q: &DMatrix<f64>, lam: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = q.clone();
    for (mut col, &l) in scaled.column_iter_mut().zip(lam.iter()) {
        col *= l;
    }
    let x = scaled * q.transpose();
    (&x + x.transpose()) * 0.5
}

/// `∂/∂λ_i F(Q·Diag(λ)·Qᵀ) = q_iᵀ·∇F·q_i`.
pub fn grad_lambda(nabla_f: &DMatrix<f64>, q: &ManifoldPoint) -> DVector<f64> {
    let qf = q.factor();
    let aq = nabla_f * qf;
    DVector::from_iterator(qf.ncols(), (0..qf.ncols()).map(|i| qf.column(i).dot(&aq.column(i))))
}

/// Ambient gradient in `Q`: `(∇F + ∇Fᵀ)·Q·Diag(λ)`.
pub fn grad_q_ambient(nabla_f: &DMatrix<f64>, q: &DMatrix<f64>, lam: &DVector<f64>) -> DMatrix<f64> {
    let mut g = (nabla_f + nabla_f.transpose()) * q;
    for (mut col, &l) in g.column_iter_mut().zip(lam.iter()) {
        col *= l;
    }
    g
}

/// Riemannian gradient in `Q` on O(n).
pub fn grad_q_riemannian(nabla_f: &DMatrix<f64>, p: &SpectralPoint) -> Result<TangentVector> {
    tangent_project(&p.q, &grad_q_ambient(nabla_f, p.q.factor(), &p.lam))
}

/// A smooth scalar function of a symmetric matrix.
pub trait MatrixFunction: Send + Sync {
    fn value(&self, x: &DMatrix<f64>) -> f64;
    /// Euclidean gradient, symmetric.
    fn gradient(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
    fn as_linear(&self) -> Option<&LinearForm> {
        None
    }
}

/// `⟨A, X⟩ + offset` with `A` symmetric.
#[derive(Clone, Debug)]
pub struct LinearForm {
    pub coeff: DMatrix<f64>,
    pub offset: f64,
}

impl LinearForm {
    pub fn new(coeff: DMatrix<f64>, offset: f64) -> Self {
        Self { coeff: SymmetricMatrix::new(coeff).into_inner(), offset }
    }

    /// `(q_kᵀ·A·q_k)_k`: the coefficients in `λ` for fixed `Q`.
    pub fn lambda_coefficients(&self, q: &ManifoldPoint) -> DVector<f64> {
        grad_lambda(&self.coeff, q)
    }
}

impl MatrixFunction for LinearForm {
    fn value(&self, x: &DMatrix<f64>) -> f64 {
        self.coeff.dot(x) + self.offset
    }
    fn gradient(&self, _x: &DMatrix<f64>) -> DMatrix<f64> {
        self.coeff.clone()
    }
    fn as_linear(&self) -> Option<&LinearForm> {
        Some(self)
    }
}

/// Closure-backed matrix function.
pub struct SmoothMatrixFn<V, G> {
    value: V,
    gradient: G,
}

impl<V, G> SmoothMatrixFn<V, G>
where
    V: Fn(&DMatrix<f64>) -> f64 + Send + Sync,
    G: Fn(&DMatrix<f64>) -> DMatrix<f64> + Send + Sync,
{
    pub fn new(value: V, gradient: G) -> Self {
        Self { value, gradient }
    }
}

impl<V, G> MatrixFunction for SmoothMatrixFn<V, G>
where
    V: Fn(&DMatrix<f64>) -> f64 + Send + Sync,
    G: Fn(&DMatrix<f64>) -> DMatrix<f64> + Send + Sync,
{
    fn value(&self, x: &DMatrix<f64>) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        (self.gradient)(x)
    }
}

/// A smooth function of the (sorted) eigenvalue vector.
pub trait SpectralFunction: Send + Sync {
    fn value(&self, lam: &DVector<f64>) -> f64;
    fn gradient(&self, lam: &DVector<f64>) -> DVector<f64>;
    fn as_linear(&self) -> Option<&LinearSpectral> {
        None
    }
}

/// `aᵀλ + offset`.
#[derive(Clone, Debug)]
pub struct LinearSpectral {
    pub coeffs: DVector<f64>,
    pub offset: f64,
}

impl LinearSpectral {
    pub fn new(coeffs: DVector<f64>, offset: f64) -> Self {
        Self { coeffs, offset }
    }
}

impl SpectralFunction for LinearSpectral {
    fn value(&self, lam: &DVector<f64>) -> f64 {
        self.coeffs.dot(lam) + self.offset
    }
    fn gradient(&self, _lam: &DVector<f64>) -> DVector<f64> {
        self.coeffs.clone()
    }
    fn as_linear(&self) -> Option<&LinearSpectral> {
        Some(self)
    }
}

/// Closure-backed spectral function.
pub struct SmoothSpectralFn<V, G> {
    value: V,
    gradient: G,
}

impl<V, G> SmoothSpectralFn<V, G>
where
    V: Fn(&DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(value: V, gradient: G) -> Self {
        Self { value, gradient }
    }
}

impl<V, G> SpectralFunction for SmoothSpectralFn<V, G>
where
    V: Fn(&DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn value(&self, lam: &DVector<f64>) -> f64 {
        (self.value)(lam)
    }
    fn gradient(&self, lam: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(lam)
    }
}

/// Optimization problem over `n × n` symmetric matrices.
#[derive(Clone)]
pub struct MatrixProblem {
    n: usize,
    objective: Arc<dyn MatrixFunction>,
    equalities: Vec<Arc<dyn MatrixFunction>>,
    coupled: Vec<Arc<dyn MatrixFunction>>,
    spectral: Vec<Arc<dyn SpectralFunction>>,
}

impl MatrixProblem {
    pub fn new(n: usize, objective: impl MatrixFunction + 'static) -> Self {
        assert!(n >= 1, "matrix dimension must be positive");
        Self {
            n,
            objective: Arc::new(objective),
            equalities: Vec::new(),
            coupled: Vec::new(),
            spectral: Vec::new(),
        }
    }

    /// Adds `G_i(X) = 0`.
    pub fn with_equality(mut self, g: impl MatrixFunction + 'static) -> Self {
        self.equalities.push(Arc::new(g));
        self
    }

    /// Adds a coordinate inequality `H_j(X) ≤ 0`.
    pub fn with_coordinate_inequality(mut self, h: impl MatrixFunction + 'static) -> Self {
        self.coupled.push(Arc::new(h));
        self
    }

    /// Adds a spectral inequality `g_k(λ(X)) ≤ 0`.
    pub fn with_spectral_inequality(mut self, g: impl SpectralFunction + 'static) -> Self {
        self.spectral.push(Arc::new(g));
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }
    /// Number of equalities `p`.
    pub fn p(&self) -> usize {
        self.equalities.len()
    }
    /// Number of spectral inequalities `s`.
    pub fn s(&self) -> usize {
        self.spectral.len()
    }
    /// Number of coordinate inequalities.
    pub fn r(&self) -> usize {
        self.coupled.len()
    }

    pub fn objective(&self, x: &SymmetricMatrix) -> f64 {
        self.objective.value(x.data())
    }
    pub fn objective_gradient(&self, x: &SymmetricMatrix) -> DMatrix<f64> {
        self.objective.gradient(x.data())
    }
    pub fn equality_values(&self, x: &SymmetricMatrix) -> DVector<f64> {
        DVector::from_iterator(self.p(), self.equalities.iter().map(|g| g.value(x.data())))
    }
    pub fn coordinate_inequality_values(&self, x: &SymmetricMatrix) -> DVector<f64> {
        DVector::from_iterator(self.r(), self.coupled.iter().map(|h| h.value(x.data())))
    }
    pub fn spectral_values(&self, lam: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.s(), self.spectral.iter().map(|g| g.value(lam)))
    }

    /// Feasibility of `X` in the original model: `(‖G(X)‖, ‖max(H(X), g(λ(X)), 0)‖)`.
    pub fn feasibility(&self, x: &SymmetricMatrix) -> Result<(f64, f64)> {
        let lam = sorted_eigenvalues(x)?;
        let eq = self.equality_values(x).norm();
        let ineq = self
            .coordinate_inequality_values(x)
            .iter()
            .chain(self.spectral_values(&lam).iter())
            .map(|v| v.max(0.0).powi(2))
            .sum::<f64>()
            .sqrt();
        Ok((eq, ineq))
    }
}

/// Marker for the ordering row `λ_{i+1} − λ_i ≤ 0` (1-based `index`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentedRow {
    pub index: usize,
}

impl AugmentedRow {
    pub fn value(&self, lam: &DVector<f64>) -> f64 {
        lam[self.index] - lam[self.index - 1]
    }
}

/// [`MatrixProblem`] rewritten over `O(n) × R^n`.
#[derive(Clone)]
pub struct DecomposedProblem {
    mp: MatrixProblem,
    ordering: Vec<AugmentedRow>,
}

/// Builds the block form of `mp`.
pub fn decompose(mp: MatrixProblem) -> DecomposedProblem {
    let ordering = (1..mp.n).map(|index| AugmentedRow { index }).collect();
    DecomposedProblem { mp, ordering }
}

impl DecomposedProblem {
    pub fn matrix_problem(&self) -> &MatrixProblem {
        &self.mp
    }

    pub fn ordering_rows(&self) -> &[AugmentedRow] {
        &self.ordering
    }

    /// Index of the first spectral row among the inequalities.
    pub fn spectral_offset(&self) -> usize {
        self.mp.r()
    }

    /// Index of the first ordering row among the inequalities.
    pub fn ordering_offset(&self) -> usize {
        self.mp.r() + self.mp.s()
    }

    fn matrix(&self, z: &BlockPoint) -> DMatrix<f64> {
        reconstruct_raw(z.x.factor(), &z.y)
    }

    fn chain(&self, nabla: &DMatrix<f64>, z: &BlockPoint) -> BlockGradient {
        BlockGradient { x: grad_q_ambient(nabla, z.x.factor(), &z.y), y: grad_lambda(nabla, &z.x) }
    }
}

impl BlockProblem for DecomposedProblem {
    fn x_shape(&self) -> (usize, usize) {
        (self.mp.n, self.mp.n)
    }
    fn y_dim(&self) -> usize {
        self.mp.n
    }
    fn num_eq(&self) -> usize {
        self.mp.p()
    }
    fn num_ineq(&self) -> usize {
        self.mp.r() + self.mp.s() + self.ordering.len()
    }

    fn objective(&self, z: &BlockPoint) -> f64 {
        self.mp.objective.value(&self.matrix(z))
    }

    fn objective_grad(&self, z: &BlockPoint) -> BlockGradient {
        let x = self.matrix(z);
        self.chain(&self.mp.objective.gradient(&x), z)
    }

    fn eq_values(&self, z: &BlockPoint) -> DVector<f64> {
        let x = self.matrix(z);
        DVector::from_iterator(self.mp.p(), self.mp.equalities.iter().map(|g| g.value(&x)))
    }

    fn eq_grads(&self, z: &BlockPoint) -> Vec<BlockGradient> {
        let x = self.matrix(z);
        self.mp.equalities.iter().map(|g| self.chain(&g.gradient(&x), z)).collect()
    }

    fn ineq_values(&self, z: &BlockPoint) -> DVector<f64> {
        let x = self.matrix(z);
        let coupled = self.mp.coupled.iter().map(|h| h.value(&x));
        let spectral = self.mp.spectral.iter().map(|g| g.value(&z.y));
        let ordering = self.ordering.iter().map(|row| row.value(&z.y));
        DVector::from_iterator(self.num_ineq(), coupled.chain(spectral).chain(ordering))
    }

    fn ineq_grads(&self, z: &BlockPoint) -> Vec<BlockGradient> {
        let n = self.mp.n;
        let mut out = Vec::with_capacity(self.num_ineq());
        if !self.mp.coupled.is_empty() {
            let x = self.matrix(z);
            out.extend(self.mp.coupled.iter().map(|h| self.chain(&h.gradient(&x), z)));
        }
        for g in &self.mp.spectral {
            out.push(BlockGradient { x: DMatrix::zeros(n, n), y: g.gradient(&z.y) });
        }
        for row in &self.ordering {
            let mut y = DVector::zeros(n);
            y[row.index] = 1.0;
            y[row.index - 1] = -1.0;
            out.push(BlockGradient { x: DMatrix::zeros(n, n), y });
        }
        out
    }

    fn ineq_depends_on_x(&self, j: usize) -> bool {
        j < self.mp.r()
    }

    fn affine_in_y(&self, q: &ManifoldPoint) -> Option<AffineSystem> {
        let n = self.mp.n;
        let p = self.mp.p();
        let rows = self.num_ineq();
        let mut eq_matrix = DMatrix::zeros(p, n);
        let mut eq_rhs = DVector::zeros(p);
        for (i, g) in self.mp.equalities.iter().enumerate() {
            let lin = g.as_linear()?;
            eq_matrix.set_row(i, &lin.lambda_coefficients(q).transpose());
            eq_rhs[i] = -lin.offset;
        }
        let mut ineq_matrix = DMatrix::zeros(rows, n);
        let mut ineq_rhs = DVector::zeros(rows);
        let mut j = 0;
        for h in &self.mp.coupled {
            let lin = h.as_linear()?;
            ineq_matrix.set_row(j, &lin.lambda_coefficients(q).transpose());
            ineq_rhs[j] = -lin.offset;
            j += 1;
        }
        for g in &self.mp.spectral {
            let lin = g.as_linear()?;
            ineq_matrix.set_row(j, &lin.coeffs.transpose());
            ineq_rhs[j] = -lin.offset;
            j += 1;
        }
        for row in &self.ordering {
            ineq_matrix[(j, row.index)] = 1.0;
            ineq_matrix[(j, row.index - 1)] = -1.0;
            j += 1;
        }
        Some(AffineSystem { eq_matrix, eq_rhs, ineq_matrix, ineq_rhs })
    }
}
