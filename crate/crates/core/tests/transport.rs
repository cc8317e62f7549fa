mod common;

use common::{rel_diff, spd};
use covtransport_core::simgen::{haar_orthogonal, make_barycentric_family, origin_covariance, GenModelConfig};
use covtransport_core::{
    bw_distance, frechet_mean, norm, optimal_map, stream_rng, CovOperator, DescentConfig, InitStrategy, Mat,
    NormKind, SymMatrix,
};
use proptest::prelude::*;

fn spd_family(q: usize, k: usize) -> impl Strategy<Value = Vec<CovOperator>> {
    prop::collection::vec(spd(q, 0.05), k)
}

/// Inputs sharing the eigenbasis `u`, with spectra drawn in [0.05, 4].
fn commuting_family(q: usize, k: usize) -> impl Strategy<Value = (Mat, Vec<Vec<f64>>)> {
    (any::<u64>(), prop::collection::vec(prop::collection::vec(0.05..4.0f64, q), k))
        .prop_map(move |(seed, spectra)| (haar_orthogonal(q, &mut stream_rng(seed, 0)), spectra))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_symmetric_and_obeys_the_triangle_inequality(f in spd_family(4, 3)) {
        let d = |a: usize, b: usize| bw_distance(&f[a], &f[b]).unwrap();
        prop_assert!((d(0, 1) - d(1, 0)).abs() <= 1e-8);
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-8);
        prop_assert!(d(0, 0) <= 1e-7);
    }

    #[test]
    fn optimal_map_pushes_forward(f in spd_family(5, 2)) {
        let t = optimal_map(&f[0], &f[1]).unwrap();
        prop_assert!(rel_diff(&t.matmul(&f[0]).matmul(&t), &f[1]) <= 1e-9);
        prop_assert!(covtransport_core::sym_eig(&t).unwrap().values.last().unwrap() >= &-1e-10);
    }

    #[test]
    fn descent_is_monotone_and_centred((k, f) in (2usize..6).prop_flat_map(|k| (Just(k), spd_family(4, k)))) {
        let cfg = DescentConfig::default();
        let res = frechet_mean(&f, &cfg).unwrap();
        prop_assert!(res.converged);
        for w in res.functional_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-10), "functional rose: {:?}", res.functional_history);
        }
        let start = f[0].trace();
        prop_assert!(res.mean_identity_residual() <= 10.0 * cfg.grad_tol * start);
        let mut sum = SymMatrix::zeros(4);
        for d in &res.deviations {
            sum = sum.add(d);
        }
        prop_assert!(sum.frobenius_norm() / k as f64 <= 10.0 * cfg.grad_tol * start);
        for t in &res.maps {
            prop_assert!(norm(t, NormKind::Operator) <= k as f64 + 1e-6);
        }
    }

    #[test]
    fn commutative_closed_form((u, spectra) in (2usize..6).prop_flat_map(|k| commuting_family(5, k))) {
        let k = spectra.len() as f64;
        let covs: Vec<CovOperator> = spectra
            .iter()
            .map(|l| CovOperator::new(Mat::congruence_diag(&u, l)).unwrap())
            .collect();
        let root_mean: Vec<f64> = (0..5)
            .map(|n| spectra.iter().map(|l| l[n].sqrt()).sum::<f64>() / k)
            .collect();
        let expected = Mat::congruence_diag(&u, &root_mean.iter().map(|r| r * r).collect::<Vec<_>>());
        let res = frechet_mean(&covs, &DescentConfig::default()).unwrap();
        prop_assert!(rel_diff(&res.mean, &expected) <= 1e-8);
        for (t, l) in res.maps.iter().zip(&spectra) {
            let map_eigs: Vec<f64> = (0..5).map(|n| l[n].sqrt() / root_mean[n]).collect();
            prop_assert!(t.as_mat().sub(&Mat::congruence_diag(&u, &map_eigs)).max_abs() <= 1e-7);
        }
    }

    #[test]
    fn generative_family_is_a_fixed_point(seed in any::<u64>(), k in 2usize..5) {
        let q = 8;
        let origin = origin_covariance(q, &mut stream_rng(seed, 0));
        let mut cfg = GenModelConfig::new(q, k);
        cfg.exact_mean_identity = true;
        let (maps, covs) = make_barycentric_family(&cfg, &origin, &mut stream_rng(seed, 1)).unwrap();
        let dcfg = DescentConfig::default();
        let res = frechet_mean(&covs, &dcfg).unwrap();
        prop_assert!(rel_diff(&res.mean, &origin) <= 1e-6);
        for (t, truth) in res.maps.iter().zip(&maps) {
            prop_assert!(t.sub(truth).frobenius_norm() <= 1e-6);
        }
        // Started at the barycenter, one step moves the iterate by at most grad_tol.
        let one = DescentConfig { max_iters: 1, init: InitStrategy::Explicit(origin.clone()), ..dcfg };
        let res = frechet_mean(&covs, &one).unwrap();
        let avg = res.maps.iter().fold(Mat::zeros(q, q), |acc, t| acc.add(&t.scale(1.0 / k as f64)));
        let next = origin.congruence(&avg);
        prop_assert!(next.sub(&origin).frobenius_norm() <= dcfg.grad_tol);
    }
}

#[test]
fn scaling_oracle_in_every_dimension() {
    for q in [1, 3, 20] {
        for delta in [0.5, 2.0, 5.0] {
            let covs = [CovOperator::identity(q), CovOperator::identity(q).scale(delta * delta)];
            let res = frechet_mean(&covs, &DescentConfig::default()).unwrap();
            let expected = (1.0 - delta).abs() / (1.0 + delta);
            assert!((norm(&res.deviations[0], NormKind::Operator) - expected).abs() < 1e-10);
            assert!((norm(&res.deviations[0], NormKind::HilbertSchmidt) - (q as f64).sqrt() * expected).abs() < 1e-9);
        }
    }
}

#[test]
fn two_sample_spectral_formula() {
    // λ_{1,n} = n⁻², λ_{2,n} = 2n⁻²: map eigenvalues depend only on the ratio.
    let q = 40;
    let l1: Vec<f64> = (1..=q).map(|n| 1.0 / (n * n) as f64).collect();
    let l2: Vec<f64> = l1.iter().map(|l| 2.0 * l).collect();
    let covs = [CovOperator::from_diag(&l1).unwrap(), CovOperator::from_diag(&l2).unwrap()];
    let res = frechet_mean(&covs, &DescentConfig::default()).unwrap();
    let r: f64 = 2.0;
    let (a, b) = (2.0 / (1.0 + r.sqrt()), 2.0 / (1.0 + (1.0 / r).sqrt()));
    for n in 0..q {
        assert!((res.maps[0][(n, n)] - a).abs() < 1e-8);
        assert!((res.maps[1][(n, n)] - b).abs() < 1e-8);
    }
}
