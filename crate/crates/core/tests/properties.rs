mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spectral_bcd::manifold::{inner, retract, tangent_project};
use spectral_bcd::spectral::{eig_sorted, grad_lambda, reconstruct};
use spectral_bcd::{BlockPoint, BlockProblem, Retraction, SpectralPoint, SymmetricMatrix};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 64, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn tangent_projection_is_idempotent_and_self_adjoint(seed in any::<u64>(), n in 2usize..6, k in 1usize..6) {
        let k = k.min(n);
        let mut r = rng(seed);
        let x = manifold_point(n, k, &mut r);
        let u = gaussian(n, k, &mut r);
        let v = gaussian(n, k, &mut r);
        let pu = tangent_project(&x, &u).unwrap();
        let pv = tangent_project(&x, &v).unwrap();
        let ppu = tangent_project(&x, pu.data()).unwrap();
        prop_assert!((ppu.data() - pu.data()).norm() <= 1e-12 * (1.0 + u.norm()));
        prop_assert!((pu.data().dot(&v) - u.dot(pv.data())).abs() <= 1e-12 * (1.0 + u.norm() * v.norm()));
        prop_assert!((pu.data() - tangent(x.factor(), &u)).norm() <= 1e-12 * (1.0 + u.norm()));
        let ip = inner(&x, &pu, &pv).unwrap();
        prop_assert!((ip - pu.data().dot(pv.data())).abs() <= 1e-12 * (1.0 + ip.abs()));
    }

    #[test]
    fn retractions_stay_on_the_manifold(seed in any::<u64>(), n in 2usize..6, scale in 0.0f64..3.0, polar in any::<bool>()) {
        let mut r = rng(seed);
        let x = manifold_point(n, n, &mut r);
        let v = tangent_project(&x, &(gaussian(n, n, &mut r) * scale)).unwrap();
        let method = if polar { Retraction::Polar } else { Retraction::Qr };
        let y = retract(&x, &v, method).unwrap();
        prop_assert!(y.orthonormality_residual() <= 1e-10);
        let zero = tangent_project(&x, &DMatrix::zeros(n, n)).unwrap();
        let same = retract(&x, &zero, method).unwrap();
        prop_assert_eq!(same.factor(), x.factor());
    }

    #[test]
    fn reconstruction_round_trips(seed in any::<u64>(), n in 1usize..7) {
        let mut r = rng(seed);
        let q = manifold_point(n, n, &mut r);
        let lam = descending(gaussian_vec(n, &mut r));
        let x = reconstruct(&SpectralPoint::new(q, lam.clone()).unwrap());
        let p = eig_sorted(&x).unwrap();
        prop_assert!(p.is_sorted());
        prop_assert!((&p.lam - &lam).amax() <= 1e-9 * (1.0 + lam.amax()));
        let back = reconstruct(&p);
        prop_assert!((back.data() - x.data()).norm() <= 1e-9 * (1.0 + x.data().norm()));
    }

    #[test]
    fn column_sign_flips_leave_every_value_unchanged(seed in any::<u64>(), n in 2usize..5, flips in any::<u8>()) {
        let mut r = rng(seed);
        let problem = random_smooth_problem(n, &mut r);
        let q = manifold_point(n, n, &mut r);
        let lam = descending(gaussian_vec(n, &mut r));
        let mut flipped = q.factor().clone();
        for j in 0..n {
            if flips & (1 << j) != 0 {
                flipped.column_mut(j).neg_mut();
            }
        }
        let a = BlockPoint::new(q, lam.clone());
        let b = BlockPoint::new(spectral_bcd::ManifoldPoint::new(flipped).unwrap(), lam);
        prop_assert_eq!(problem.objective(&a), problem.objective(&b));
        prop_assert_eq!(problem.eq_values(&a), problem.eq_values(&b));
        prop_assert_eq!(problem.ineq_values(&a), problem.ineq_values(&b));
    }

    #[test]
    fn chain_rule_matches_finite_differences(seed in any::<u64>(), n in 2usize..5) {
        let mut r = rng(seed);
        let problem = random_smooth_problem(n, &mut r);
        let z = BlockPoint::new(manifold_point(n, n, &mut r), descending(gaussian_vec(n, &mut r)));
        let err = gradient_audit(&problem, &z, &mut r);
        prop_assert!(err <= 1e-5, "relative error {err:e}");
    }

    #[test]
    fn lambda_gradient_is_diagonal_of_rotated_gradient(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let q = manifold_point(n, n, &mut r);
        let g = symmetric(n, &mut r);
        let rotated = q.factor().transpose() * &g * q.factor();
        let want = DVector::from_fn(n, |i, _| rotated[(i, i)]);
        prop_assert!((grad_lambda(&g, &q) - want).amax() <= 1e-12 * (1.0 + g.norm()));
    }

    #[test]
    fn symmetric_wrapper_symmetrizes(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let m = gaussian(n, n, &mut r);
        let s = SymmetricMatrix::new(m.clone());
        prop_assert_eq!(s.data(), &((&m + m.transpose()) * 0.5));
    }
}
