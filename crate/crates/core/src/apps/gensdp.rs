//! Generalized SDP family with a planted optimum:
//!
//! ```text
//! minimize   ⟨−I, X⟩
//! subject to ⟨A_i, X⟩ = ℓ_i                       i = 1..s
//!            λ_n + … + λ_{n−i+1} ≤ b_i             i = 1..n
//!            −λ_n ≤ 0
//! ```
//!
//! `b_i` is the sum of the `i` smallest eigenvalues of a random positive
//! definite `C` and `ℓ_i = ⟨A_i, C⟩`, so `C` is feasible and attains the lower
//! bound `−b_n` of the objective.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::{gaussian_matrix, random_point};
use crate::problem::BlockPoint;
use crate::solver::{feasible_start, solve, SolveResult, SolverConfig};
use crate::spectral::{
    decompose, reconstruct, DecomposedProblem, LinearForm, LinearSpectral, MatrixProblem,
    SpectralPoint,
};

/// Accuracy required of a run to count as solved.
pub const SOLVED_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GenSdpInstance {
    pub n: usize,
    pub s: usize,
    pub seed: u64,
    pub a: Vec<DMatrix<f64>>,
    pub ell: DVector<f64>,
    pub b: DVector<f64>,
    pub c: DMatrix<f64>,
    pub f_star: f64,
}

/// Seeded instance with `s` equality constraints.
pub fn gen_sdp_instance(n: usize, s: usize, seed: u64) -> GenSdpInstance {
    assert!(n >= 2 && s >= 1, "gen-SDP instances need n >= 2 and s >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = gaussian_matrix(n, n, &mut rng);
    let c = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
    let c = (&c + c.transpose()) * 0.5;
    let a: Vec<DMatrix<f64>> = (0..s)
        .map(|_| {
            let g = gaussian_matrix(n, n, &mut rng);
            (&g + g.transpose()) * 0.5
        })
        .collect();
    let ell = DVector::from_iterator(s, a.iter().map(|ai| ai.dot(&c)));
    let mut eig: Vec<f64> = c.clone().symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let b = DVector::from_iterator(
        n,
        eig.iter().scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        }),
    );
    let f_star = -b[n - 1];
    GenSdpInstance { n, s, seed, a, ell, b, c, f_star }
}

impl GenSdpInstance {
    /// Checks the construction invariants, returning the first failure.
    pub fn audit(&self) -> Result<()> {
        for (i, ai) in self.a.iter().enumerate() {
            let gap = (ai.dot(&self.c) - self.ell[i]).abs();
            if gap > 1e-10 * (1.0 + self.ell[i].abs()) {
                return Err(Error::Degenerate(format!("equality {i} not tight at C (gap {gap:e})")));
            }
        }
        let mut eig: Vec<f64> = self.c.clone().symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        if eig[0] <= 0.0 {
            return Err(Error::Degenerate("C is not positive definite".into()));
        }
        let mut acc = 0.0;
        for (i, v) in eig.iter().enumerate() {
            acc += v;
            if (acc - self.b[i]).abs() > 1e-10 * (1.0 + acc.abs()) {
                return Err(Error::Degenerate(format!("bound {i} is not a partial eigenvalue sum")));
            }
        }
        Ok(())
    }
}

pub fn build_gen_sdp_problem(inst: &GenSdpInstance) -> MatrixProblem {
    let n = inst.n;
    let mut mp = MatrixProblem::new(n, LinearForm::new(-DMatrix::identity(n, n), 0.0));
    for (ai, &l) in inst.a.iter().zip(inst.ell.iter()) {
        mp = mp.with_equality(LinearForm::new(ai.clone(), -l));
    }
    for i in 1..=n {
        // λ non-increasing: the i smallest are the last i entries.
        let coeffs = DVector::from_fn(n, |k, _| if k >= n - i { 1.0 } else { 0.0 });
        mp = mp.with_spectral_inequality(LinearSpectral::new(coeffs, -inst.b[i - 1]));
    }
    let mut last = DVector::zeros(n);
    last[n - 1] = -1.0;
    mp.with_spectral_inequality(LinearSpectral::new(last, 0.0))
}

/// Random feasible start: a random orthogonal factor with a spectrum drawn
/// strictly inside the spectral constraints (each eigenvalue of `C` scaled by
/// an independent factor in `[0.2, 0.8]`), restored onto the equalities.
/// A draw whose restoration fails is replaced, up to `START_DRAWS` times.
pub fn random_feasible_start(
    inst: &GenSdpInstance,
    problem: &DecomposedProblem,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<BlockPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_57a7);
    let mut eig: Vec<f64> = inst.c.clone().symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let mut last = None;
    for _ in 0..START_DRAWS {
        let q = random_point(inst.n, &mut rng);
        let mut lam: Vec<f64> = eig.iter().map(|&c| c * rng.random_range(0.2..0.8)).collect();
        lam.sort_by(|a, b| b.total_cmp(a));
        let query = BlockPoint::new(q, DVector::from_vec(lam));
        match feasible_start(problem, &query, cfg) {
            Ok(z) => return Ok(z),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one draw"))
}

/// Attempts at drawing a restorable start.
pub const START_DRAWS: usize = 8;

#[derive(Clone, Debug)]
pub struct GenSdpOutcome {
    pub n: usize,
    pub seed: u64,
    pub f: f64,
    pub f_star: f64,
    pub dist_to_opt: f64,
    pub residual_eq: f64,
    pub residual_ineq: f64,
    pub solved: bool,
    pub result: SolveResult,
}

/// Builds, starts and solves one instance; residuals are measured on the
/// reconstructed matrix against the original constraints.
pub fn run_gen_sdp(inst: &GenSdpInstance, cfg: &SolverConfig) -> Result<GenSdpOutcome> {
    let problem = decompose(build_gen_sdp_problem(inst));
    let z0 = random_feasible_start(inst, &problem, inst.seed, cfg)?;
    let result = solve(&problem, &z0, cfg)?;
    let x = reconstruct(&SpectralPoint::from(result.point.clone()));
    let f = problem.matrix_problem().objective(&x);
    let (residual_eq, residual_ineq) = problem.matrix_problem().feasibility(&x)?;
    let dist_to_opt = (f - inst.f_star).abs();
    let solved = dist_to_opt <= SOLVED_TOL && residual_eq <= SOLVED_TOL && residual_ineq <= SOLVED_TOL;
    Ok(GenSdpOutcome {
        n: inst.n,
        seed: inst.seed,
        f,
        f_star: inst.f_star,
        dist_to_opt,
        residual_eq,
        residual_ineq,
        solved,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::BlockProblem;
    use crate::spectral::SymmetricMatrix;

    #[test]
    fn planted_optimum_is_feasible_and_tight() {
        let inst = gen_sdp_instance(4, 4, 1);
        inst.audit().unwrap();
        let mp = build_gen_sdp_problem(&inst);
        let x = SymmetricMatrix::new(inst.c.clone());
        let (eq, ineq) = mp.feasibility(&x).unwrap();
        assert!(eq <= 1e-10 && ineq <= 1e-10, "{eq:e} {ineq:e}");
        assert!((mp.objective(&x) - inst.f_star).abs() <= 1e-10 * (1.0 + inst.f_star.abs()));
    }

    #[test]
    fn row_counts() {
        let inst = gen_sdp_instance(5, 3, 2);
        let dp = decompose(build_gen_sdp_problem(&inst));
        assert_eq!(dp.num_eq(), 3);
        assert_eq!(dp.num_ineq(), (5 + 1) + (5 - 1));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = gen_sdp_instance(3, 3, 9);
        let b = gen_sdp_instance(3, 3, 9);
        assert_eq!(a.c, b.c);
        assert_eq!(a.a, b.a);
    }
}
