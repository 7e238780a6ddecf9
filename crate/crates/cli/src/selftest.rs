//! Quick numerical health checks on a generated gen-SDP instance.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spectral_bcd::apps::gensdp::{build_gen_sdp_problem, gen_sdp_instance};
use spectral_bcd::manifold::{random_point, random_tangent, retract, tangent_project};
use spectral_bcd::spectral::{decompose, eig_sorted, reconstruct};
use spectral_bcd::{BlockPoint, BlockProblem, SolverConfig, SpectralPoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestRow {
    pub n: usize,
    pub seed: u64,
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

fn row(n: usize, seed: u64, check: &str, value: f64, threshold: f64) -> SelftestRow {
    SelftestRow { n, seed, check: check.into(), value, threshold, passed: value.is_finite() && value <= threshold }
}

pub fn run(n: usize, seed: u64, cfg: &SolverConfig) -> Vec<SelftestRow> {
    let mut out = Vec::new();
    let inst = gen_sdp_instance(n, n, seed);
    out.push(row(n, seed, "instance_audit", if inst.audit().is_ok() { 0.0 } else { 1.0 }, 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e1f_7e57);
    let q = random_point(n, &mut rng);
    let mut lam: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    lam.sort_by(|a, b| b.total_cmp(a));
    let lam = DVector::from_vec(lam);

    // Tangent projection applied twice changes nothing.
    let v = random_tangent(&q, &mut rng);
    let twice = tangent_project(&q, v.data()).map(|t| (t.data() - v.data()).norm()).unwrap_or(f64::NAN);
    out.push(row(n, seed, "tangent_idempotence", twice, 1e-12));

    let moved = retract(&q, &v.scaled(0.5), cfg.retraction).map(|p| p.orthonormality_residual()).unwrap_or(f64::NAN);
    out.push(row(n, seed, "retraction_orthonormality", moved, 1e-10));

    let point = SpectralPoint::new(q.clone(), lam.clone()).expect("square factor");
    let x = reconstruct(&point);
    let round = eig_sorted(&x)
        .map(|p| (reconstruct(&p).data() - x.data()).norm() / x.data().norm().max(1.0))
        .unwrap_or(f64::NAN);
    out.push(row(n, seed, "reconstruct_round_trip", round, 1e-9));

    // Central difference of the objective along a tangent direction.
    let problem = decompose(build_gen_sdp_problem(&inst));
    let z = BlockPoint::new(q.clone(), lam.clone());
    let g = problem.objective_grad(&z);
    let dy = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let predicted = v.data().dot(&g.x) + dy.dot(&g.y);
    let h = 1e-5;
    let at = |s: f64| {
        let x = retract(&q, &v.scaled(s), cfg.retraction).expect("retraction of a small step");
        problem.objective(&BlockPoint::new(x, &lam + &dy * s))
    };
    let fd = (at(h) - at(-h)) / (2.0 * h);
    let rel = (fd - predicted).abs() / predicted.abs().max(1.0);
    out.push(row(n, seed, "objective_gradient", rel, 1e-5));
    out
}
