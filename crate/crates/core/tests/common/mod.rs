//! Independent reference computations for the integration and acceptance
//! tests. Nothing here calls the library's solvers; only data types and
//! problem evaluation are shared.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use spectral_bcd::apps::qcqp::QcqpInstance;
use spectral_bcd::spectral::{decompose, LinearForm, LinearSpectral, SmoothMatrixFn, SmoothSpectralFn};
use spectral_bcd::{BlockGradient, BlockPoint, BlockProblem, DecomposedProblem, ManifoldPoint, MatrixProblem};

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn symmetric(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = gaussian(n, n, rng);
    (&g + g.transpose()) * 0.5
}

/// Orthonormal columns by modified Gram–Schmidt.
pub fn orthonormal(n: usize, k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    loop {
        let mut q = gaussian(n, k, rng);
        let mut ok = true;
        for j in 0..k {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let ci = q.column(i).clone_owned();
                q.column_mut(j).axpy(-proj, &ci, 1.0);
            }
            let norm = q.column(j).norm();
            if norm < 1e-6 {
                ok = false;
                break;
            }
            q.column_mut(j).scale_mut(1.0 / norm);
        }
        if ok {
            return q;
        }
    }
}

pub fn manifold_point(n: usize, k: usize, rng: &mut impl Rng) -> ManifoldPoint {
    ManifoldPoint::new(orthonormal(n, k, rng)).expect("orthonormal factor")
}

/// `V − X·sym(XᵀV)`, written out independently of the library.
pub fn tangent(x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let s = x.transpose() * v;
    v - x * ((&s + s.transpose()) * 0.5)
}

pub fn descending(v: DVector<f64>) -> DVector<f64> {
    let mut s: Vec<f64> = v.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(s)
}

/// Least squares `min ‖b − C·c‖` through the pseudo-inverse of `CᵀC`, built
/// from its symmetric eigendecomposition.
fn least_squares(c: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if c.ncols() == 0 {
        return DVector::zeros(0);
    }
    let eig = (c.transpose() * c).symmetric_eigen();
    let tol = 1e-20 * eig.eigenvalues.amax().max(1e-300);
    let rhs = c.transpose() * b;
    let mut coef = DVector::zeros(c.ncols());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > tol {
            let v = eig.eigenvectors.column(i);
            coef += v * (v.dot(&rhs) / l);
        }
    }
    coef
}

/// `min ‖g + Σλ_i e_i + Σμ_j a_j‖` over free `λ` and `μ ≥ 0`, by enumerating
/// the support of `μ`. Feasible supports give upper bounds and the optimal
/// support is among them.
pub fn dual_norm(g: &DVector<f64>, eq: &[DVector<f64>], ineq: &[DVector<f64>]) -> f64 {
    assert!(ineq.len() <= 12, "enumeration oracle is exponential");
    let dim = g.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << ineq.len()) {
        let support: Vec<usize> = (0..ineq.len()).filter(|j| mask & (1 << j) != 0).collect();
        let cols = eq.len() + support.len();
        let mut c = DMatrix::zeros(dim, cols);
        for (k, e) in eq.iter().enumerate() {
            c.set_column(k, e);
        }
        for (k, &j) in support.iter().enumerate() {
            c.set_column(eq.len() + k, &ineq[j]);
        }
        let coef = least_squares(&c, &(-g));
        if coef.rows(eq.len(), support.len()).iter().any(|&m| m < -1e-10) {
            continue;
        }
        let r = g + &c * &coef;
        best = best.min(r.norm());
    }
    best
}

/// Euclidean projection onto `{w : E·w = e, A·w ≤ a}` by enumerating which
/// inequality rows hold with equality. Returns `None` for an empty set.
pub fn polyhedron_projection(
    target: &DVector<f64>,
    e: &DMatrix<f64>,
    e_rhs: &DVector<f64>,
    a: &DMatrix<f64>,
    a_rhs: &DVector<f64>,
) -> Option<DVector<f64>> {
    let rows = a.nrows();
    assert!(rows <= 12, "enumeration oracle is exponential");
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << rows) {
        let tight: Vec<usize> = (0..rows).filter(|j| mask & (1 << j) != 0).collect();
        let k = e.nrows() + tight.len();
        let mut m = DMatrix::zeros(k, target.len());
        let mut rhs = DVector::zeros(k);
        for i in 0..e.nrows() {
            m.set_row(i, &e.row(i));
            rhs[i] = e_rhs[i];
        }
        for (r, &j) in tight.iter().enumerate() {
            m.set_row(e.nrows() + r, &a.row(j));
            rhs[e.nrows() + r] = a_rhs[j];
        }
        // Closest point of the affine set {m·w = rhs} to the target.
        let w = if k == 0 {
            target.clone()
        } else {
            let shift = least_squares(&(&m * m.transpose()), &(&rhs - &m * target));
            let w = target + m.transpose() * shift;
            if (&m * &w - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
                continue;
            }
            w
        };
        let slack = a * &w - a_rhs;
        if slack.iter().any(|&s| s > 1e-9 * (1.0 + a_rhs.amax())) {
            continue;
        }
        let d = (&w - target).norm();
        if best.as_ref().is_none_or(|(b, _)| d < *b) {
            best = Some((d, w));
        }
    }
    best.map(|(_, w)| w)
}

/// Rectangular-grid QCQP oracle. Each grid point is rescaled onto the
/// boundary along its ray, so a box around the origin covers every
/// direction; the box is then refined around the incumbent.
pub fn rect_grid_oracle(inst: &QcqpInstance) -> f64 {
    let lam_min = inst.a[0].symmetric_eigenvalues().min();
    let mut half = (1.0 / lam_min).sqrt() * 1.01;
    let mut center = Vector2::zeros();
    let mut best = f64::INFINITY;
    let scaled = |x: Vector2<f64>| -> Option<f64> {
        let tight = inst.a.iter().map(|a| x.dot(&(a * x))).fold(f64::INFINITY, f64::min);
        (tight > 0.0).then(|| x.norm_squared() / tight)
    };
    for _ in 0..6 {
        let g = 401;
        let mut incumbent = center;
        for i in 0..g {
            for j in 0..g {
                let x = center
                    + Vector2::new(
                        -half + 2.0 * half * i as f64 / (g - 1) as f64,
                        -half + 2.0 * half * j as f64 / (g - 1) as f64,
                    );
                if let Some(v) = scaled(x) {
                    if v < best {
                        best = v;
                        incumbent = x / inst.a.iter().map(|a| x.dot(&(a * x))).fold(f64::INFINITY, f64::min).sqrt();
                    }
                }
            }
        }
        center = incumbent;
        half *= 0.05;
    }
    best
}

/// Central difference of `phi(s)` at zero.
pub fn central_difference(phi: impl Fn(f64) -> f64, h: f64) -> f64 {
    (phi(h) - phi(-h)) / (2.0 * h)
}

/// Random smooth problem over `n × n` symmetric matrices with nonlinear
/// objective, equality, coupled and spectral rows.
pub fn random_smooth_problem(n: usize, rng: &mut impl Rng) -> DecomposedProblem {
    let b = symmetric(n, rng);
    let c = symmetric(n, rng);
    let (bv, cv) = (b.clone(), c.clone());
    let objective = SmoothMatrixFn::new(
        move |x: &DMatrix<f64>| 0.5 * (x * &bv * x).trace() + cv.dot(x),
        move |x: &DMatrix<f64>| (x * &b + &b * x) * 0.5 + &c,
    );
    let eq_coeff = symmetric(n, rng);
    let eq_offset: f64 = rng.random_range(-1.0..1.0);
    let cubic = symmetric(n, rng);
    let cubic2 = cubic.clone();
    // ⟨K, X⟩² − 1 as a nonlinear coupled row.
    let coupled = SmoothMatrixFn::new(
        move |x: &DMatrix<f64>| cubic.dot(x).powi(2) - 1.0,
        move |x: &DMatrix<f64>| &cubic2 * (2.0 * cubic2.dot(x)),
    );
    let w = gaussian_vec(n, rng);
    let w2 = w.clone();
    let spectral = SmoothSpectralFn::new(
        move |l: &DVector<f64>| l.iter().zip(w.iter()).map(|(a, b)| b * a * a).sum::<f64>() - 2.0,
        move |l: &DVector<f64>| DVector::from_fn(l.len(), |i, _| 2.0 * w2[i] * l[i]),
    );
    let linear_spectral = LinearSpectral::new(gaussian_vec(n, rng), rng.random_range(-1.0..1.0));
    decompose(
        MatrixProblem::new(n, objective)
            .with_equality(LinearForm::new(eq_coeff, eq_offset))
            .with_coordinate_inequality(coupled)
            .with_spectral_inequality(spectral)
            .with_spectral_inequality(linear_spectral),
    )
}

/// Largest relative discrepancy between analytic directional derivatives
/// (ambient gradients against a tangent step and a λ step) and central
/// differences along the QR retraction. Covers the objective, every
/// equality and every inequality row.
///
/// Relative error is `|fd − an| / max(1, |an|)`.
pub fn gradient_audit<P: BlockProblem>(problem: &P, z: &BlockPoint, rng: &mut impl Rng) -> f64 {
    let (n, k) = problem.x_shape();
    let v = tangent(z.x.factor(), &gaussian(n, k, rng));
    let v = &v / v.norm();
    let dy = gaussian_vec(problem.y_dim(), rng);
    let point_at = |s: f64| {
        let q = spectral_bcd::manifold::qr_factor(z.x.factor() + &v * s).expect("qr");
        BlockPoint::new(q, &z.y + &dy * s)
    };
    let h = 1e-5;
    let slope = |g: &BlockGradient| g.x.dot(&v) + g.y.dot(&dy);
    let rel = |fd: f64, an: f64| (fd - an).abs() / an.abs().max(1.0);

    let mut worst = rel(central_difference(|s| problem.objective(&point_at(s)), h), slope(&problem.objective_grad(z)));
    for (i, g) in problem.eq_grads(z).iter().enumerate() {
        let fd = central_difference(|s| problem.eq_values(&point_at(s))[i], h);
        worst = worst.max(rel(fd, slope(g)));
    }
    for (j, g) in problem.ineq_grads(z).iter().enumerate() {
        let fd = central_difference(|s| problem.ineq_values(&point_at(s))[j], h);
        worst = worst.max(rel(fd, slope(g)));
    }
    worst
}

/// Linear functions on `St(n, k) × R^m` with prescribed gradients and
/// inequality values, for exercising the direction oracle in isolation.
#[derive(Clone, Debug)]
pub struct SyntheticSystem {
    pub shape: (usize, usize),
    pub m: usize,
    pub objective: BlockGradient,
    pub eq: Vec<BlockGradient>,
    pub ineq: Vec<BlockGradient>,
    pub ineq_values: DVector<f64>,
}

impl SyntheticSystem {
    /// Random system with `p` equality and `q` inequality rows, roughly half
    /// of the inequalities active or nearly active.
    pub fn random(shape: (usize, usize), m: usize, p: usize, q: usize, rng: &mut impl Rng) -> Self {
        let grad = |rng: &mut dyn rand::RngCore| BlockGradient {
            x: DMatrix::from_fn(shape.0, shape.1, |_, _| rng.sample(StandardNormal)),
            y: DVector::from_fn(m, |_, _| rng.sample(StandardNormal)),
        };
        let objective = grad(rng);
        let eq = (0..p).map(|_| grad(rng)).collect();
        let ineq = (0..q).map(|_| grad(rng)).collect();
        let ineq_values = DVector::from_fn(q, |_, _| match rng.random_range(0..4) {
            0 => 0.0,
            1 => -1e-9,
            2 => -0.5,
            _ => -rng.random_range(1e-7..1.0),
        });
        Self { shape, m, objective, eq, ineq, ineq_values }
    }

    fn value_of(g: &BlockGradient, z: &BlockPoint) -> f64 {
        g.x.dot(z.x.factor()) + g.y.dot(&z.y)
    }
}

impl BlockProblem for SyntheticSystem {
    fn x_shape(&self) -> (usize, usize) {
        self.shape
    }
    fn y_dim(&self) -> usize {
        self.m
    }
    fn num_eq(&self) -> usize {
        self.eq.len()
    }
    fn num_ineq(&self) -> usize {
        self.ineq.len()
    }
    fn objective(&self, z: &BlockPoint) -> f64 {
        Self::value_of(&self.objective, z)
    }
    fn objective_grad(&self, _z: &BlockPoint) -> BlockGradient {
        self.objective.clone()
    }
    fn eq_values(&self, _z: &BlockPoint) -> DVector<f64> {
        DVector::zeros(self.eq.len())
    }
    fn eq_grads(&self, _z: &BlockPoint) -> Vec<BlockGradient> {
        self.eq.clone()
    }
    /// Values are pinned so the active set is controlled by the fixture.
    fn ineq_values(&self, _z: &BlockPoint) -> DVector<f64> {
        self.ineq_values.clone()
    }
    fn ineq_grads(&self, _z: &BlockPoint) -> Vec<BlockGradient> {
        self.ineq.clone()
    }
}

/// Flattened, block-restricted, tangent-projected gradient.
pub fn restrict(kind: spectral_bcd::MeasureKind, x: &DMatrix<f64>, g: &BlockGradient) -> DVector<f64> {
    use spectral_bcd::MeasureKind::*;
    let gx = tangent(x, &g.x);
    let xs: Vec<f64> = gx.as_slice().to_vec();
    let ys: Vec<f64> = g.y.iter().copied().collect();
    match kind {
        Y => DVector::from_vec(ys),
        X => DVector::from_vec(xs),
        Joint => DVector::from_vec([xs, ys].concat()),
    }
}

/// Reference measure for a synthetic system: active rows are those with
/// value ≥ −δ.
pub fn reference_measure(sys: &SyntheticSystem, x: &DMatrix<f64>, kind: spectral_bcd::MeasureKind, delta: f64) -> f64 {
    let g = restrict(kind, x, &sys.objective);
    let eq: Vec<_> = sys.eq.iter().map(|e| restrict(kind, x, e)).collect();
    let ineq: Vec<_> = (0..sys.ineq.len())
        .filter(|&j| sys.ineq_values[j] >= -delta)
        .map(|j| restrict(kind, x, &sys.ineq[j]))
        .collect();
    dual_norm(&g, &eq, &ineq)
}

pub fn to_dynamic(m: &Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(2, 2, |r, c| m[(r, c)])
}
