//! Stiefel manifold St(n, k) embedded in R^{n×k}, with O(n) as the square case.
//!
//! Points carry an orthonormal-column factor. The metric is the ambient trace
//! inner product, the tangent space at `X` is `{V : XᵀV + VᵀX = 0}` and the
//! orthogonal projection onto it is `V − X·sym(XᵀV)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{dims, Error, Result};

/// Orthonormality tolerance every produced point satisfies.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;
/// Points further than this from the manifold are rejected as inputs.
pub const OFF_MANIFOLD_TOL: f64 = 1e-8;

/// A point on St(n, k).
#[derive(Clone, Debug)]
pub struct ManifoldPoint {
    factor: Arc<DMatrix<f64>>,
}

impl ManifoldPoint {
    /// Wraps `factor`, checking `‖XᵀX − I‖_F ≤ 1e-10`.
    pub fn new(factor: DMatrix<f64>) -> Result<Self> {
        if factor.nrows() < factor.ncols() || factor.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                expected: "n x k with n >= k >= 1".into(),
                found: dims(factor.nrows(), factor.ncols()),
            });
        }
        let residual = orthonormality_residual(&factor);
        if !(residual <= ORTHONORMALITY_TOL) {
            return Err(Error::OffManifold { residual });
        }
        Ok(Self::from_orthonormal(factor))
    }

    pub(crate) fn from_orthonormal(factor: DMatrix<f64>) -> Self {
        Self { factor: Arc::new(factor) }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_orthonormal(DMatrix::identity(n, n))
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn shape(&self) -> (usize, usize) {
        self.factor.shape()
    }

    pub fn orthonormality_residual(&self) -> f64 {
        orthonormality_residual(&self.factor)
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        Arc::try_unwrap(self.factor).unwrap_or_else(|shared| (*shared).clone())
    }

    fn same_as(&self, other: &ManifoldPoint) -> bool {
        Arc::ptr_eq(&self.factor, &other.factor) || self.factor == other.factor
    }
}

impl PartialEq for ManifoldPoint {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

/// A tangent vector together with the point it is attached to.
#[derive(Clone, Debug)]
pub struct TangentVector {
    data: DMatrix<f64>,
    base: ManifoldPoint,
}

impl TangentVector {
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn scaled(&self, alpha: f64) -> TangentVector {
        TangentVector { data: &self.data * alpha, base: self.base.clone() }
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    /// `‖XᵀV + VᵀX‖_F`, zero for exact tangent vectors.
    pub fn tangency_residual(&self) -> f64 {
        let xtv = self.base.factor().transpose() * &self.data;
        (&xtv + xtv.transpose()).norm()
    }

    /// Zero vector at `x`.
    pub fn zero(x: &ManifoldPoint) -> TangentVector {
        let (n, k) = x.shape();
        TangentVector { data: DMatrix::zeros(n, k), base: x.clone() }
    }
}

/// Retraction used to map tangent steps back onto the manifold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retraction {
    /// Q factor of a QR decomposition with positive diagonal in R.
    #[default]
    Qr,
    /// Orthogonal polar factor `UVᵀ` from an SVD.
    Polar,
}

pub fn orthonormality_residual(m: &DMatrix<f64>) -> f64 {
    let k = m.ncols();
    (m.transpose() * m - DMatrix::<f64>::identity(k, k)).norm()
}

fn check_on_manifold(x: &ManifoldPoint) -> Result<()> {
    let residual = x.orthonormality_residual();
    if residual > OFF_MANIFOLD_TOL {
        return Err(Error::OffManifold { residual });
    }
    Ok(())
}

fn check_shape(x: &ManifoldPoint, v: &DMatrix<f64>) -> Result<()> {
    if x.shape() != v.shape() {
        let (n, k) = x.shape();
        return Err(Error::DimensionMismatch {
            expected: dims(n, k),
            found: dims(v.nrows(), v.ncols()),
        });
    }
    Ok(())
}

/// Projection onto the tangent space without shape or manifold checks.
pub(crate) fn project_tangent_raw(x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let xtv = x.transpose() * v;
    let sym = (&xtv + xtv.transpose()) * 0.5;
    v - x * sym
}

/// Orthogonal projection of an ambient matrix onto `T_x St(n, k)`.
pub fn tangent_project(x: &ManifoldPoint, v: &DMatrix<f64>) -> Result<TangentVector> {
    check_shape(x, v)?;
    check_on_manifold(x)?;
    Ok(TangentVector { data: project_tangent_raw(x.factor(), v), base: x.clone() })
}

/// Ambient trace inner product `trace(uᵀv)` of two tangent vectors at `x`.
pub fn inner(x: &ManifoldPoint, u: &TangentVector, v: &TangentVector) -> Result<f64> {
    if !u.base.same_as(x) || !v.base.same_as(x) {
        return Err(Error::BaseMismatch);
    }
    Ok(u.data.dot(&v.data))
}

/// Maps a tangent step back to the manifold.
pub fn retract(x: &ManifoldPoint, v: &TangentVector, method: Retraction) -> Result<ManifoldPoint> {
    if !v.base.same_as(x) {
        return Err(Error::BaseMismatch);
    }
    retract_ambient(x, &v.data, method)
}

/// Retraction along an ambient step already known to be tangent at `x`.
pub(crate) fn retract_ambient(
    x: &ManifoldPoint,
    step: &DMatrix<f64>,
    method: Retraction,
) -> Result<ManifoldPoint> {
    check_shape(x, step)?;
    if step.iter().all(|&s| s == 0.0) {
        return Ok(x.clone());
    }
    let moved = x.factor() + step;
    match method {
        Retraction::Qr => qr_factor(moved),
        Retraction::Polar => polar_factor(&moved),
    }
}

/// Q factor of `a` with the diagonal of R made positive.
pub fn qr_factor(a: DMatrix<f64>) -> Result<ManifoldPoint> {
    let k = a.ncols();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        let d = r[(j, j)];
        if d.abs() <= 1e-13 * scale {
            return Err(Error::Numeric("rank-deficient QR factor in retraction".into()));
        }
        if d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(ManifoldPoint::from_orthonormal(q))
}

/// Nearest point on the manifold in Frobenius norm (orthogonal polar factor).
pub fn polar_factor(a: &DMatrix<f64>) -> Result<ManifoldPoint> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax.max(f64::MIN_POSITIVE)) {
        return Err(Error::Numeric("rank-deficient polar factor".into()));
    }
    let u = svd.u.ok_or_else(|| Error::Numeric("SVD did not return U".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Numeric("SVD did not return Vᵀ".into()))?;
    // The SVD occasionally returns inaccurate factors; check and fall back.
    let rebuilt = &u * DMatrix::from_diagonal(&svd.singular_values) * &vt;
    if (rebuilt - a).norm() <= 1e-10 * a.norm() {
        return Ok(ManifoldPoint::from_orthonormal(u * vt));
    }
    polar_by_gram(a)
}

/// `A·(AᵀA)^{-1/2}` from the symmetric eigendecomposition of the Gram matrix.
fn polar_by_gram(a: &DMatrix<f64>) -> Result<ManifoldPoint> {
    let eig = (a.transpose() * a).symmetric_eigen();
    let top = eig.eigenvalues.max();
    if !(eig.eigenvalues.min() > 1e-24 * top.max(f64::MIN_POSITIVE)) {
        return Err(Error::Numeric("rank-deficient polar factor".into()));
    }
    let inv_sqrt = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()));
    let v = &eig.eigenvectors;
    Ok(ManifoldPoint::from_orthonormal(a * v * DMatrix::from_diagonal(&inv_sqrt) * v.transpose()))
}

/// Flips columns so that each column's largest-magnitude entry is positive.
///
/// Ties in magnitude resolve to the lowest row index.
pub fn apply_sign_convention(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0_f64;
        let mut sign = 1.0;
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// Random point on O(n): QR of a standard Gaussian matrix, then the column
/// sign convention.
pub fn random_point<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ManifoldPoint {
    random_stiefel(n, n, rng)
}

/// Random point on St(n, k).
pub fn random_stiefel<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> ManifoldPoint {
    assert!(n >= k && k >= 1, "random_stiefel needs n >= k >= 1");
    loop {
        let g = gaussian_matrix(n, k, rng);
        if let Ok(p) = qr_factor(g) {
            let mut q = p.into_matrix();
            apply_sign_convention(&mut q);
            return ManifoldPoint::from_orthonormal(q);
        }
    }
}

pub(crate) fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // Filled column-major so the draw order is fixed.
    DMatrix::from_iterator(rows, cols, (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Random unit-norm tangent vector at `x`.
pub fn random_tangent<R: Rng + ?Sized>(x: &ManifoldPoint, rng: &mut R) -> TangentVector {
    let (n, k) = x.shape();
    loop {
        let v = project_tangent_raw(x.factor(), &gaussian_matrix(n, k, rng));
        let norm = v.norm();
        if norm > 1e-12 {
            return TangentVector { data: v / norm, base: x.clone() };
        }
    }
}

/// Empirical constant `L₁` in `‖Retr(x, v) − x‖ ≤ L₁‖v‖`, sampled over
/// tangent vectors with norm in `(0, max_norm]`.
pub fn retraction_bound_estimate<R: Rng + ?Sized>(
    x: &ManifoldPoint,
    method: Retraction,
    max_norm: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let dir = random_tangent(x, rng);
        let scale = max_norm * rng.random_range(1e-3..=1.0);
        let v = dir.scaled(scale);
        let y = retract(x, &v, method)?;
        worst = worst.max((y.factor() - x.factor()).norm() / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gram_polar_matches_svd_polar() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = gaussian_matrix(4, 3, &mut rng);
            let svd = polar_factor(&a).unwrap();
            let gram = polar_by_gram(&a).unwrap();
            assert!((svd.factor() - gram.factor()).norm() < 1e-10);
            assert!(gram.orthonormality_residual() < 1e-12);
        }
    }

    #[test]
    fn skew_is_tangent_at_identity() {
        let x = ManifoldPoint::identity(2);
        let v = dmatrix![0.0, 1.0; -1.0, 0.0];
        let t = tangent_project(&x, &v).unwrap();
        assert_eq!(t.data(), &v);
    }

    #[test]
    fn symmetric_part_removed_at_identity() {
        let x = ManifoldPoint::identity(2);
        let t = tangent_project(&x, &DMatrix::identity(2, 2)).unwrap();
        assert!(t.data().norm() < 1e-15);
    }

    #[test]
    fn projection_rejects_bad_inputs() {
        let x = ManifoldPoint::identity(3);
        assert!(matches!(
            tangent_project(&x, &DMatrix::zeros(2, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
        let off = ManifoldPoint::from_orthonormal(DMatrix::identity(2, 2) * 1.01);
        assert!(matches!(
            tangent_project(&off, &DMatrix::zeros(2, 2)),
            Err(Error::OffManifold { .. })
        ));
        assert!(ManifoldPoint::new(DMatrix::identity(2, 2) * 2.0).is_err());
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_point(3, &mut rng);
        let v = gaussian_matrix(3, 3, &mut rng);
        let p1 = tangent_project(&x, &v).unwrap();
        let p2 = tangent_project(&x, p1.data()).unwrap();
        assert!((p1.data() - p2.data()).norm() < 1e-12);
        assert!(p1.tangency_residual() < 1e-12);
    }

    #[test]
    fn zero_step_retracts_to_same_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_point(4, &mut rng);
        for method in [Retraction::Qr, Retraction::Polar] {
            let y = retract(&x, &TangentVector::zero(&x), method).unwrap();
            assert_eq!(y.factor(), x.factor());
        }
    }

    #[test]
    fn polar_matches_rotation_for_small_skew_step() {
        let t: f64 = 1e-3;
        let x = ManifoldPoint::identity(2);
        let v = tangent_project(&x, &dmatrix![0.0, t; -t, 0.0]).unwrap();
        let y = retract(&x, &v, Retraction::Polar).unwrap();
        // exp([[0,t],[-t,0]]) is the rotation by -t.
        let exact = dmatrix![t.cos(), t.sin(); -t.sin(), t.cos()];
        assert!((y.factor() - exact).norm() <= 1e-6);
    }

    #[test]
    fn retraction_agrees_to_first_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_point(4, &mut rng);
        let v = random_tangent(&x, &mut rng);
        for method in [Retraction::Qr, Retraction::Polar] {
            let mut ratios = Vec::new();
            for t in [1e-2, 1e-3, 1e-4] {
                let y = retract(&x, &v.scaled(t), method).unwrap();
                let err = (y.factor() - (x.factor() + v.data() * t)).norm();
                ratios.push(err / (t * t));
            }
            // Bounded error/t²: the ratio must not blow up as t shrinks.
            assert!(ratios.iter().all(|r| *r < 2.0), "{method:?}: {ratios:?}");
            // log-log slope of error(t) between t = 1e-2 and t = 1e-4
            let slope = ((ratios[0] * 1e-4) / (ratios[2] * 1e-8)).log10() / 2.0;
            assert!(slope > 1.9, "{method:?} slope {slope}");
        }
    }

    #[test]
    fn random_point_is_deterministic_and_orthonormal() {
        let a = random_point(2, &mut ChaCha8Rng::seed_from_u64(7));
        let b = random_point(2, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a.factor(), b.factor());
        assert!(a.orthonormality_residual() <= ORTHONORMALITY_TOL);
        let one = random_point(1, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(one.factor()[(0, 0)], 1.0);
    }

    #[test]
    fn inner_product_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_point(3, &mut rng);
        let u = random_tangent(&x, &mut rng);
        let v = random_tangent(&x, &mut rng);
        assert_eq!(inner(&x, &u, &v).unwrap(), inner(&x, &v, &u).unwrap());
        assert!(inner(&x, &u, &u).unwrap() > 0.0);

        let id = ManifoldPoint::identity(2);
        let e = tangent_project(&id, &dmatrix![0.0, 1.0; -1.0, 0.0]).unwrap().scaled(1.0 / 2f64.sqrt());
        assert!((inner(&id, &e, &e).unwrap() - 1.0).abs() < 1e-15);

        let other = random_point(3, &mut rng);
        let w = random_tangent(&other, &mut rng);
        assert!(matches!(inner(&x, &u, &w), Err(Error::BaseMismatch)));
    }

    #[test]
    fn retraction_bound_is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_point(3, &mut rng);
        for method in [Retraction::Qr, Retraction::Polar] {
            let l1 = retraction_bound_estimate(&x, method, 1.0, 50, &mut rng).unwrap();
            assert!(l1 > 0.5 && l1 <= 2.0, "{method:?}: {l1}");
        }
    }
}
