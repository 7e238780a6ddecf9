//! Feasibility restoration onto `C_y(x)`, `C_x(y)` and `C`.
//!
//! The manifold projections use inexact alternating projection: a
//! Gauss–Newton step `d = −Jᵀ(JJᵀ)⁻¹·v` onto the linearization of the
//! equality rows and the currently violated inequality rows (clamped to their
//! boundary), followed by the exact projection onto the manifold (polar
//! factor). A penalty-based restoration is available as a fallback.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{polar_factor, project_tangent_raw, retract_ambient, Retraction};
use crate::nnls::symmetric_pinv;
use crate::problem::{positive_part_max, residuals, BlockPoint, BlockProblem};
use crate::qp::{project_polyhedron, violation};

/// Default feasibility tolerance.
pub const TOL_FEAS: f64 = 1e-9;
/// Default restoration iteration cap.
pub const MAX_RESTORE: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Alternating,
    Penalty,
    Polyhedral,
    /// Query was already feasible.
    Identity,
}

#[derive(Clone, Debug)]
pub struct ProjectionReport {
    pub point: BlockPoint,
    pub residual_eq: f64,
    pub residual_ineq: f64,
    /// Distance from the query in the product embedding norm.
    pub moved: f64,
    pub iterations: usize,
    pub method: ProjectionMethod,
    /// The projection fell back to the last feasible point.
    pub rejected: bool,
    /// Largest-constraint residual after each restoration iteration.
    pub history: Vec<f64>,
}

impl ProjectionReport {
    pub fn feasible(&self, tol: f64) -> bool {
        self.residual_eq <= tol && self.residual_ineq <= tol
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ProjectionConfig {
    pub tol_feas: f64,
    pub max_restore: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self { tol_feas: TOL_FEAS, max_restore: MAX_RESTORE }
    }
}

/// Which blocks a restoration may move.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Y,
    X,
    Joint,
}

fn distance(a: &BlockPoint, b: &BlockPoint) -> f64 {
    ((a.x.factor() - b.x.factor()).norm_squared() + (&a.y - &b.y).norm_squared()).sqrt()
}

fn report<P: BlockProblem + ?Sized>(
    problem: &P,
    query: &BlockPoint,
    point: BlockPoint,
    iterations: usize,
    method: ProjectionMethod,
    history: Vec<f64>,
) -> ProjectionReport {
    let (residual_eq, residual_ineq) = residuals(problem, &point);
    ProjectionReport {
        moved: distance(query, &point),
        point,
        residual_eq,
        residual_ineq,
        iterations,
        method,
        rejected: false,
        history,
    }
}

fn feasible_now<P: BlockProblem + ?Sized>(problem: &P, z: &BlockPoint, tol: f64) -> bool {
    let (eq, ineq) = residuals(problem, z);
    eq <= tol && ineq <= tol
}

/// Projection of `query.y` onto `C_y(query.x)`.
///
/// `anchor` is the last feasible `y` for this `x`. When every row is affine in
/// `y` the exact polyhedral projection is computed from it; otherwise a
/// Gauss–Newton restoration in `y` is used. If the result is further from the
/// query than the anchor, the anchor is returned with `rejected = true`.
pub fn project_y<P: BlockProblem + ?Sized>(
    problem: &P,
    query: &BlockPoint,
    anchor: Option<&DVector<f64>>,
    cfg: &ProjectionConfig,
) -> Result<ProjectionReport> {
    if feasible_now(problem, query, cfg.tol_feas) {
        return Ok(report(problem, query, query.clone(), 0, ProjectionMethod::Identity, Vec::new()));
    }
    let out = match problem.affine_in_y(&query.x) {
        Some(sys) => {
            let start = match anchor {
                Some(a) if violation(&sys, a) <= 1e-8 * (1.0 + a.amax()) => a.clone(),
                _ => alternating(problem, query, Scope::Y, cfg)?.point.y,
            };
            let proj = project_polyhedron(&query.y, &sys, &start, 50 * (sys.ineq_matrix.nrows() + query.y.len() + 1))?;
            let point = BlockPoint::new(query.x.clone(), proj.point);
            let mut rep = report(problem, query, point, proj.iterations, ProjectionMethod::Polyhedral, Vec::new());
            if !rep.feasible(cfg.tol_feas) {
                // Polish tiny affine round-off with a restoration pass.
                let polished = alternating(problem, &rep.point, Scope::Y, cfg)?;
                let iterations = rep.iterations + polished.iterations;
                rep = report(problem, query, polished.point, iterations, ProjectionMethod::Polyhedral, polished.history);
            }
            rep
        }
        None => alternating(problem, query, Scope::Y, cfg)?,
    };
    if let Some(a) = anchor {
        let anchor_dist = (a - &query.y).norm();
        if out.moved > anchor_dist + 1e-12 {
            let fallback = BlockPoint::new(query.x.clone(), a.clone());
            let mut rep = report(problem, query, fallback, out.iterations, out.method, out.history);
            rep.rejected = true;
            return Ok(rep);
        }
    }
    Ok(out)
}

/// Projection of `query.x` onto `C_x(query.y)` by alternating projection.
pub fn project_x<P: BlockProblem + ?Sized>(
    problem: &P,
    query: &BlockPoint,
    cfg: &ProjectionConfig,
) -> Result<ProjectionReport> {
    alternating(problem, query, Scope::X, cfg)
}

/// Projection of `query` onto `C` over both blocks by alternating projection.
pub fn project_joint<P: BlockProblem + ?Sized>(
    problem: &P,
    query: &BlockPoint,
    cfg: &ProjectionConfig,
) -> Result<ProjectionReport> {
    alternating(problem, query, Scope::Joint, cfg)
}

/// Inexact alternating projection `z ← P_M(Φ(z))`.
pub fn alternating<P: BlockProblem + ?Sized>(
    problem: &P,
    query: &BlockPoint,
    scope: Scope,
    cfg: &ProjectionConfig,
) -> Result<ProjectionReport> {
    let mut z = query.clone();
    let mut history = Vec::new();
    let (n, k) = problem.x_shape();
    let m = problem.y_dim();
    for iter in 0..=cfg.max_restore {
        let c = problem.eq_values(&z);
        let h = problem.ineq_values(&z);
        let worst = c.amax().max(positive_part_max(&h));
        if c.norm() <= cfg.tol_feas && positive_part_max(&h) <= cfg.tol_feas {
            let method = if iter == 0 { ProjectionMethod::Identity } else { ProjectionMethod::Alternating };
            return Ok(report(problem, query, z, iter, method, history));
        }
        if iter == cfg.max_restore || !worst.is_finite() {
            break;
        }
        if let Some(&first) = history.first() {
            if worst > 1e6 * (1.0 + first) {
                break;
            }
        }

        let eq_grads = problem.eq_grads(&z);
        let ineq_grads = problem.ineq_grads(&z);
        let mut rows: Vec<(f64, &crate::problem::BlockGradient)> = c.iter().copied().zip(eq_grads.iter()).collect();
        for (j, g) in ineq_grads.iter().enumerate() {
            let movable = match scope {
                Scope::X => problem.ineq_depends_on_x(j),
                _ => true,
            };
            if h[j] > 0.0 && movable {
                rows.push((h[j], g));
            }
        }
        if rows.is_empty() {
            // Only rows this scope cannot move are violated.
            break;
        }
        let width = match scope {
            Scope::Y => m,
            Scope::X => n * k,
            Scope::Joint => n * k + m,
        };
        let mut jac = DMatrix::zeros(rows.len(), width);
        let mut vals = DVector::zeros(rows.len());
        for (r, (v, g)) in rows.iter().enumerate() {
            vals[r] = *v;
            let flat: Vec<f64> = match scope {
                Scope::Y => g.y.iter().copied().collect(),
                Scope::X => project_tangent_raw(z.x.factor(), &g.x).as_slice().to_vec(),
                Scope::Joint => {
                    let gx = project_tangent_raw(z.x.factor(), &g.x);
                    gx.as_slice().iter().chain(g.y.iter()).copied().collect()
                }
            };
            jac.set_row(r, &DVector::from_vec(flat).transpose());
        }
        let gram = &jac * jac.transpose();
        // Dependent rows fall back to the minimum-norm solution.
        let solve = gram.clone().cholesky().map(|ch| ch.solve(&vals)).unwrap_or_else(|| symmetric_pinv(&gram) * &vals);
        if !solve.iter().all(|v| v.is_finite()) || (jac.transpose() * &solve).amax() == 0.0 {
            return Err(Error::LicqViolation { indices: (0..rows.len()).collect() });
        }
        let step = -(jac.transpose() * solve);

        let (step_x, step_y) = match scope {
            Scope::Y => (None, Some(step.clone())),
            Scope::X => (Some(DMatrix::from_column_slice(n, k, step.as_slice())), None),
            Scope::Joint => (
                Some(DMatrix::from_column_slice(n, k, &step.as_slice()[..n * k])),
                Some(DVector::from_column_slice(&step.as_slice()[n * k..])),
            ),
        };
        // Damped: halve the linearized step until the squared residual drops.
        let merit_now = merit(&c, &h);
        let mut scale = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let mut trial = z.clone();
            if let Some(dx) = &step_x {
                if dx.amax() > 0.0 {
                    trial.x = polar_factor(&(z.x.factor() + dx * scale))?;
                }
            }
            if let Some(dy) = &step_y {
                trial.y += dy * scale;
            }
            let (tc, th) = (problem.eq_values(&trial), problem.ineq_values(&trial));
            if merit(&tc, &th) < merit_now {
                next = Some((trial, tc.amax().max(positive_part_max(&th))));
                break;
            }
            scale *= 0.5;
        }
        let Some((trial, after)) = next else { break };
        z = trial;
        history.push(after);
    }
    Err(Error::NoConvergence { what: "alternating projection", iterations: cfg.max_restore })
}

fn merit(c: &DVector<f64>, h: &DVector<f64>) -> f64 {
    c.norm_squared() + h.iter().map(|&v| v.max(0.0).powi(2)).sum::<f64>()
}

/// Penalty `P(c, h) ≥ 0` with `P(0, h ≤ 0) = 0`.
pub trait Penalty: Sync {
    fn value(&self, eq: &DVector<f64>, ineq: &DVector<f64>) -> f64;
    /// Partial derivatives with respect to each equality and inequality value.
    fn gradient(&self, eq: &DVector<f64>, ineq: &DVector<f64>) -> (DVector<f64>, DVector<f64>);
}

/// `½‖c‖² + ½‖max(h, 0)‖²`
#[derive(Clone, Copy, Debug, Default)]
pub struct HalfSquared;

impl Penalty for HalfSquared {
    fn value(&self, eq: &DVector<f64>, ineq: &DVector<f64>) -> f64 {
        0.5 * eq.norm_squared() + 0.5 * ineq.iter().map(|&h| h.max(0.0).powi(2)).sum::<f64>()
    }
    fn gradient(&self, eq: &DVector<f64>, ineq: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (eq.clone(), ineq.map(|h| h.max(0.0)))
    }
}

/// Restoration by minimizing `P(c(x, ŷ), h(x, ŷ))` over the manifold block
/// (or both blocks for [`Scope::Joint`]) with Riemannian gradient descent and
/// backtracking, started at `query`.
pub fn penalty_project<P: BlockProblem + ?Sized>(
    problem: &P,
    query: &BlockPoint,
    penalty: &dyn Penalty,
    scope: Scope,
    cfg: &ProjectionConfig,
    max_iter: usize,
) -> Result<ProjectionReport> {
    let mut z = query.clone();
    let mut history = Vec::new();
    let mut step = 1.0_f64;
    let eval = |z: &BlockPoint| {
        let c = problem.eq_values(z);
        let h = problem.ineq_values(z);
        (penalty.value(&c, &h), c, h)
    };
    let (mut value, mut c, mut h) = eval(&z);
    for iter in 0..=max_iter {
        if c.norm() <= cfg.tol_feas && positive_part_max(&h) <= cfg.tol_feas {
            let method = if iter == 0 { ProjectionMethod::Identity } else { ProjectionMethod::Penalty };
            return Ok(report(problem, query, z, iter, method, history));
        }
        if iter == max_iter {
            break;
        }
        let (wc, wh) = penalty.gradient(&c, &h);
        let mut gx = DMatrix::zeros(z.x.factor().nrows(), z.x.factor().ncols());
        let mut gy = DVector::zeros(z.y.len());
        for (w, g) in wc.iter().zip(problem.eq_grads(&z)).chain(wh.iter().zip(problem.ineq_grads(&z))) {
            if *w != 0.0 {
                gx += &g.x * *w;
                gy += &g.y * *w;
            }
        }
        let gx = match scope {
            Scope::Y => DMatrix::zeros(gx.nrows(), gx.ncols()),
            _ => project_tangent_raw(z.x.factor(), &gx),
        };
        if scope == Scope::X {
            gy.fill(0.0);
        }
        let slope = gx.norm_squared() + gy.norm_squared();
        if slope == 0.0 {
            break;
        }
        step *= 4.0;
        let mut accepted = false;
        while step > 1e-20 {
            let trial_x = retract_ambient(&z.x, &(&gx * -step), Retraction::Qr)?;
            let trial = BlockPoint::new(trial_x, &z.y - &gy * step);
            let (tv, tc, th) = eval(&trial);
            if tv <= value - 1e-4 * step * slope {
                z = trial;
                value = tv;
                c = tc;
                h = th;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        history.push(c.amax().max(positive_part_max(&h)));
        if !accepted {
            break;
        }
    }
    Err(Error::NoConvergence { what: "penalty restoration", iterations: max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{random_point, ManifoldPoint};
    use crate::spectral::{decompose, LinearForm, LinearSpectral, MatrixProblem};
    use nalgebra::dvector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trace_problem() -> crate::spectral::DecomposedProblem {
        decompose(MatrixProblem::new(2, LinearForm::new(DMatrix::identity(2, 2), 0.0)))
    }

    #[test]
    fn ordering_violation_projects_to_mean() {
        let bp = trace_problem();
        let q = BlockPoint::new(ManifoldPoint::identity(2), dvector![1.0, 2.0]);
        let rep = project_y(&bp, &q, Some(&dvector![0.0, 0.0]), &ProjectionConfig::default()).unwrap();
        assert!((rep.point.y - dvector![1.5, 1.5]).norm() < 1e-14);
        assert_eq!(rep.method, ProjectionMethod::Polyhedral);
    }

    #[test]
    fn feasible_query_is_identity() {
        let bp = trace_problem();
        let q = BlockPoint::new(ManifoldPoint::identity(2), dvector![2.0, 1.0]);
        let cfg = ProjectionConfig::default();
        for rep in [
            project_y(&bp, &q, None, &cfg).unwrap(),
            project_x(&bp, &q, &cfg).unwrap(),
            project_joint(&bp, &q, &cfg).unwrap(),
            penalty_project(&bp, &q, &HalfSquared, Scope::X, &cfg, 100).unwrap(),
        ] {
            assert_eq!(rep.moved, 0.0);
            assert_eq!(rep.iterations, 0);
        }
    }

    #[test]
    fn single_linear_constraint_restores_on_manifold() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = crate::manifold::gaussian_matrix(3, 3, &mut rng);
        let q0 = random_point(3, &mut rng);
        let lam = dvector![3.0, 1.0, -0.5];
        let value = LinearForm::new(a.clone(), 0.0).lambda_coefficients(&q0).dot(&lam);
        let bp = decompose(
            MatrixProblem::new(3, LinearForm::new(DMatrix::identity(3, 3), 0.0))
                .with_equality(LinearForm::new(a, -value - 1e-3)),
        );
        let rep = project_x(&bp, &BlockPoint::new(q0, lam), &ProjectionConfig::default()).unwrap();
        assert!(rep.feasible(TOL_FEAS));
        assert!(rep.point.x.orthonormality_residual() < 1e-12);
    }

    #[test]
    fn spectral_violation_joint_matches_y_projection() {
        let mp = MatrixProblem::new(3, LinearForm::new(DMatrix::identity(3, 3), 0.0))
            .with_spectral_inequality(LinearSpectral::new(dvector![1.0, 1.0, 1.0], -2.0));
        let bp = decompose(mp);
        let q = random_point(3, &mut ChaCha8Rng::seed_from_u64(1));
        let query = BlockPoint::new(q.clone(), dvector![2.0, 1.0, 0.5]);
        let cfg = ProjectionConfig::default();
        let joint = project_joint(&bp, &query, &cfg).unwrap();
        let y = project_y(&bp, &query, Some(&dvector![0.0, 0.0, 0.0]), &cfg).unwrap();
        assert!((joint.point.y - &y.point.y).norm() < 1e-8);
        assert_eq!(joint.point.x.factor(), q.factor());
    }
}
