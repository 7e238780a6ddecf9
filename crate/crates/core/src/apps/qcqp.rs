//! Two-dimensional QCQPs `min ‖x‖² s.t. xᵀA_i x ≥ 1` and the methods compared
//! on them: the semidefinite relaxation with Gaussian randomization, the
//! eigenvalue-band relaxation solved by the staged method with rank-one
//! rounding, and a polar grid search that gives the reference optimum.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::sdr::{sdr_solve, to_fixed};
use crate::error::{Error, Result};
use crate::manifold::random_point;
use crate::problem::BlockPoint;
use crate::solver::{feasible_start, solve_multistart, SolveStatus, SolverConfig, SolverTrace};
use crate::spectral::{
    decompose, eig_sorted, reconstruct, LinearForm, LinearSpectral, MatrixProblem, SpectralPoint, SymmetricMatrix,
};

/// A method counts as having solved an instance when its value is within this
/// distance of the grid optimum.
pub const SOLVED_GAP: f64 = 0.013;
/// Default number of grid angles on `[0, π)`.
pub const DEFAULT_ANGLES: usize = 200_000;
/// Default number of Gaussian samples in randomization.
pub const DEFAULT_SAMPLES: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct QcqpInstance {
    pub m: usize,
    pub seed: u64,
    pub a: Vec<Matrix2<f64>>,
}

/// `A_i = B_iᵀB_i + 0.05·I` with standard Gaussian `B_i`.
pub fn qcqp_instance(m: usize, seed: u64) -> QcqpInstance {
    assert!(m >= 1, "QCQP instances need at least one constraint");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..m)
        .map(|_| {
            let b = Matrix2::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            b.transpose() * b + Matrix2::identity() * 0.05
        })
        .collect();
    QcqpInstance { m, seed, a }
}

impl QcqpInstance {
    pub fn from_matrices(a: Vec<Matrix2<f64>>, seed: u64) -> Self {
        Self { m: a.len(), seed, a }
    }

    pub fn audit(&self) -> Result<()> {
        for (i, a) in self.a.iter().enumerate() {
            if (a[(0, 1)] - a[(1, 0)]).abs() > 1e-12 {
                return Err(Error::Degenerate(format!("A_{i} is not symmetric")));
            }
            if a.symmetric_eigenvalues().min() <= 0.0 {
                return Err(Error::Degenerate(format!("A_{i} is not positive definite")));
            }
        }
        Ok(())
    }

    /// `min_i xᵀA_i x`.
    pub fn tightest(&self, x: &Vector2<f64>) -> f64 {
        self.a.iter().map(|a| x.dot(&(a * x))).fold(f64::INFINITY, f64::min)
    }

    pub fn is_feasible(&self, x: &Vector2<f64>, tol: f64) -> bool {
        self.tightest(x) >= 1.0 - tol
    }

    /// Rescales a nonzero `ξ` so that its tightest constraint is active.
    pub fn scale_to_boundary(&self, xi: &Vector2<f64>) -> Option<Vector2<f64>> {
        let s = self.tightest(xi);
        (s > 0.0 && s.is_finite()).then(|| xi / s.sqrt())
    }
}

/// Eigenvalue-band relaxation with `C = I`: `λ₁ ≥ δ` and `λ₂ ∈ [0, δ]`.
pub fn build_sco_problem(inst: &QcqpInstance, delta: f64) -> MatrixProblem {
    assert!(delta >= 0.0, "band width must be nonnegative");
    let dyn2 = |m: &Matrix2<f64>| DMatrix::from_fn(2, 2, |r, c| m[(r, c)]);
    let mut mp = MatrixProblem::new(2, LinearForm::new(DMatrix::identity(2, 2), 0.0));
    for a in &inst.a {
        mp = mp.with_coordinate_inequality(LinearForm::new(-dyn2(a), 1.0));
    }
    mp.with_spectral_inequality(LinearSpectral::new(DVector::from_vec(vec![-1.0, 0.0]), delta))
        .with_spectral_inequality(LinearSpectral::new(DVector::from_vec(vec![0.0, -1.0]), 0.0))
        .with_spectral_inequality(LinearSpectral::new(DVector::from_vec(vec![0.0, 1.0]), -delta))
}

/// A feasible point of the QCQP and its objective `‖x‖²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundedPoint {
    pub x: Vector2<f64>,
    pub value: f64,
}

/// `samples` draws `ξ ~ N(0, X*)`, each rescaled to the boundary. A draw with
/// `ξ = 0` is redrawn.
pub fn randomize_samples(
    xstar: &Matrix2<f64>,
    inst: &QcqpInstance,
    samples: usize,
    seed: u64,
) -> Result<Vec<RoundedPoint>> {
    let eig = xstar.symmetric_eigen();
    let mut factor = eig.eigenvectors;
    for k in 0..2 {
        let l = eig.eigenvalues[k];
        if l < -1e-9 * (1.0 + eig.eigenvalues.amax()) {
            return Err(Error::Degenerate("covariance is not positive semidefinite".into()));
        }
        factor.column_mut(k).scale_mut(l.max(0.0).sqrt());
    }
    if factor.amax() == 0.0 {
        return Err(Error::Degenerate("covariance is zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..samples)
        .map(|_| {
            let x = loop {
                let g = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
                if let Some(x) = inst.scale_to_boundary(&(factor * g)) {
                    break x;
                }
            };
            RoundedPoint { x, value: x.norm_squared() }
        })
        .collect();
    Ok(points)
}

/// Best of [`randomize_samples`] (first on ties).
pub fn randomize(xstar: &Matrix2<f64>, inst: &QcqpInstance, samples: usize, seed: u64) -> Result<RoundedPoint> {
    assert!(samples >= 1, "randomization needs at least one sample");
    let points = randomize_samples(xstar, inst, samples, seed)?;
    Ok(best_of(&points).expect("at least one sample"))
}

fn best_of(points: &[RoundedPoint]) -> Option<RoundedPoint> {
    points.iter().copied().fold(None, |best, p| match best {
        Some(b) if b.value <= p.value => Some(b),
        _ => Some(p),
    })
}

/// Rank-one rounding: `ξ = √λ₁·v₁` from the top eigenpair, rescaled to the
/// boundary.
pub fn project_rank1(xstar: &Matrix2<f64>, inst: &QcqpInstance) -> Result<RoundedPoint> {
    let sym = SymmetricMatrix::new(DMatrix::from_fn(2, 2, |r, c| xstar[(r, c)]));
    let sp = eig_sorted(&sym)?;
    let top = sp.lam[0];
    if top <= 0.0 {
        return Err(Error::Degenerate(format!("top eigenvalue {top:e} is not positive")));
    }
    let v = sp.q.factor().column(0);
    let xi = Vector2::new(v[0], v[1]) * top.sqrt();
    let x = inst.scale_to_boundary(&xi).ok_or_else(|| Error::Degenerate("rounded direction is zero".into()))?;
    Ok(RoundedPoint { x, value: x.norm_squared() })
}

#[derive(Clone, Copy, Debug)]
pub struct GridOracle {
    pub value: f64,
    pub point: Vector2<f64>,
    /// Bound on `value − true optimum` from the sampled slope of `r(θ)²`.
    pub error_bound: f64,
    pub angles: usize,
}

/// Minimal feasible squared radius along direction `θ`.
pub fn radius_squared(inst: &QcqpInstance, theta: f64) -> f64 {
    1.0 / inst.tightest(&Vector2::new(theta.cos(), theta.sin()))
}

/// Polar grid search over `angles` directions in `[0, π)`.
pub fn grid_oracle(inst: &QcqpInstance, angles: usize) -> GridOracle {
    assert!(angles >= 2, "grid needs at least two angles");
    let h = PI / angles as f64;
    let mut best = (f64::INFINITY, 0.0);
    let mut max_jump = 0.0_f64;
    let first = radius_squared(inst, 0.0);
    let mut prev = first;
    for k in 0..angles {
        let theta = k as f64 * h;
        let r2 = if k == 0 { first } else { radius_squared(inst, theta) };
        max_jump = max_jump.max((r2 - prev).abs());
        prev = r2;
        if r2 < best.0 {
            best = (r2, theta);
        }
    }
    // Period π: close the loop.
    max_jump = max_jump.max((first - prev).abs());
    let (value, theta) = best;
    let point = Vector2::new(theta.cos(), theta.sin()) * value.sqrt();
    GridOracle { value, point, error_bound: max_jump, angles }
}

/// Results of the staged method for one band width.
#[derive(Clone, Debug)]
pub struct BandOutcome {
    pub delta: f64,
    /// Best `⟨I, X⟩` over the starts; `None` if every start failed.
    pub ours_orig: Option<f64>,
    /// Relaxation solution of every start that solved, in start order.
    pub solutions: Vec<Matrix2<f64>>,
    pub ours_random: Option<RoundedPoint>,
    pub ours_project: Option<RoundedPoint>,
    pub status: Option<SolveStatus>,
    pub solved_random: bool,
    pub solved_project: bool,
    /// Traces of every start that ran.
    pub traces: Vec<SolverTrace>,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct QcqpOutcome {
    pub m: usize,
    pub seed: u64,
    pub sdr_orig: f64,
    pub sdr_x: Matrix2<f64>,
    pub sdr_random: RoundedPoint,
    pub solved_sdr_random: bool,
    pub oracle: GridOracle,
    pub bands: Vec<BandOutcome>,
}

impl QcqpOutcome {
    pub fn oracle_opt(&self) -> f64 {
        self.oracle.value
    }
}

/// Parameters of [`run_qcqp_comparison`].
#[derive(Clone, Debug)]
pub struct ComparisonConfig {
    pub deltas: Vec<f64>,
    /// Starts per band width: one from the relaxation solution, the rest random.
    pub restarts: usize,
    pub samples: usize,
    pub angles: usize,
    pub solver: SolverConfig,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            deltas: vec![1e-6],
            restarts: 3,
            samples: DEFAULT_SAMPLES,
            angles: DEFAULT_ANGLES,
            solver: SolverConfig::default(),
        }
    }
}

/// Relaxation and randomization, then for every band width a multi-start
/// solve followed by both roundings. Solver failures mark the band unsolved.
pub fn run_qcqp_comparison(inst: &QcqpInstance, cfg: &ComparisonConfig, seed: u64) -> Result<QcqpOutcome> {
    let sdr = sdr_solve(&inst.a)?;
    let sdr_random = randomize(&sdr.x, inst, cfg.samples, seed)?;
    let oracle = grid_oracle(inst, cfg.angles);
    let solved = |v: f64| (v - oracle.value).abs() <= SOLVED_GAP;
    let bands = cfg
        .deltas
        .iter()
        .map(|&delta| band(inst, delta, &sdr.x, cfg, seed, &solved))
        .collect();
    Ok(QcqpOutcome {
        m: inst.m,
        seed,
        sdr_orig: sdr.value,
        sdr_x: sdr.x,
        solved_sdr_random: solved(sdr_random.value),
        sdr_random,
        oracle,
        bands,
    })
}

fn band(
    inst: &QcqpInstance,
    delta: f64,
    sdr_x: &Matrix2<f64>,
    cfg: &ComparisonConfig,
    seed: u64,
    solved: &dyn Fn(f64) -> bool,
) -> BandOutcome {
    let problem = decompose(build_sco_problem(inst, delta));
    let mut failures = Vec::new();
    let mut starts = Vec::new();
    let relaxed = SymmetricMatrix::new(DMatrix::from_fn(2, 2, |r, c| sdr_x[(r, c)]));
    match eig_sorted(&relaxed).and_then(|sp| feasible_start(&problem, &sp.into(), &cfg.solver)) {
        Ok(z) => starts.push(z),
        Err(e) => failures.push(format!("relaxation start: {e}")),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ delta.to_bits());
    let scale = sdr_x.trace().max(1e-3);
    for k in 1..cfg.restarts.max(1) {
        let q = random_point(2, &mut rng);
        let lam = DVector::from_vec(vec![scale * rng.random_range(0.5..2.0), 0.0]);
        match feasible_start(&problem, &BlockPoint::new(q, lam), &cfg.solver) {
            Ok(z) => starts.push(z),
            Err(e) => failures.push(format!("random start {k}: {e}")),
        }
    }
    let mut out = BandOutcome {
        delta,
        ours_orig: None,
        solutions: Vec::new(),
        ours_random: None,
        ours_project: None,
        status: None,
        solved_random: false,
        solved_project: false,
        traces: Vec::new(),
        failures,
    };
    if starts.is_empty() {
        return out;
    }
    let (best, runs) = match solve_multistart(&problem, &starts, &cfg.solver) {
        Ok(r) => r,
        Err(e) => {
            out.failures.push(e.to_string());
            return out;
        }
    };
    out.ours_orig = Some(best.f_final);
    out.status = Some(best.status);
    let mut randomized = Vec::new();
    let mut projected = Vec::new();
    for (k, run) in runs.into_iter().enumerate() {
        let run = match run {
            Ok(r) => r,
            Err(e) => {
                out.failures.push(format!("start {k}: {e}"));
                continue;
            }
        };
        let x = to_fixed(reconstruct(&SpectralPoint::from(run.point)).data());
        match randomize(&x, inst, cfg.samples, seed.wrapping_add(k as u64)) {
            Ok(p) => randomized.push(p),
            Err(e) => out.failures.push(format!("start {k} randomize: {e}")),
        }
        match project_rank1(&x, inst) {
            Ok(p) => projected.push(p),
            Err(e) => out.failures.push(format!("start {k} rank-one rounding: {e}")),
        }
        out.solutions.push(x);
        out.traces.push(run.trace);
    }
    out.ours_random = best_of(&randomized);
    out.ours_project = best_of(&projected);
    out.solved_random = out.ours_random.is_some_and(|p| solved(p.value));
    out.solved_project = out.ours_project.is_some_and(|p| solved(p.value));
    out
}
