mod common;

use common::spd;
use covtransport_core::{
    bw_distance, frechet_mean, geodesic_retract, principal_mode_samples, sigma_inner, sym_eig, tangent_pca,
    CovOperator, DescentConfig, Mat, SymMatrix, TangentPcaResult,
};
use proptest::prelude::*;

#[derive(Debug)]
struct Fit {
    covs: Vec<CovOperator>,
    mean: CovOperator,
    deviations: Vec<SymMatrix>,
    pca: TangentPcaResult,
}

fn fit(covs: Vec<CovOperator>) -> Fit {
    let res = frechet_mean(&covs, &DescentConfig { grad_tol: 1e-12, ..DescentConfig::default() }).unwrap();
    let pca = tangent_pca(&res.deviations, &res.mean).unwrap();
    Fit { covs, mean: res.mean, deviations: res.deviations, pca }
}

fn family() -> impl Strategy<Value = Fit> {
    (2usize..6).prop_flat_map(|k| prop::collection::vec(spd(4, 0.1), k)).prop_map(fit)
}

/// Eigenvalues of `𝒦 = K⁻¹ Σ_j Δ_j ⊗_Σ Δ_j` assembled on a Σ-orthonormal
/// basis of span{Δ_j}, built by Gram–Schmidt in the Σ inner product.
fn explicit_operator_eigenvalues(deviations: &[SymMatrix], mean: &CovOperator) -> Vec<f64> {
    let ip = |a: &SymMatrix, b: &SymMatrix| sigma_inner(a, b, mean).unwrap();
    let mut basis: Vec<SymMatrix> = Vec::new();
    for d in deviations {
        let mut v = d.clone();
        for _ in 0..2 {
            for b in &basis {
                v = v.sub(&b.scale(ip(&v, b)));
            }
        }
        let len = ip(&v, &v).sqrt();
        if len > 1e-7 * ip(d, d).sqrt().max(1e-300) {
            basis.push(v.scale(1.0 / len));
        }
    }
    let r = basis.len();
    if r == 0 {
        return vec![];
    }
    let k = deviations.len() as f64;
    let m = Mat::from_fn(r, r, |a, b| {
        deviations.iter().map(|d| ip(d, &basis[a]) * ip(d, &basis[b])).sum::<f64>() / k
    });
    sym_eig(&SymMatrix::symmetric_part(m)).unwrap().values
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gram_route_matches_the_explicit_operator(f in family()) {
        let explicit = explicit_operator_eigenvalues(&f.deviations, &f.mean);
        let scale = f.pca.eigenvalues[0].max(1e-300);
        for (m, gram) in f.pca.eigenvalues.iter().enumerate() {
            let other = explicit.get(m).copied().unwrap_or(0.0);
            prop_assert!((gram - other).abs() <= 1e-8 * scale.max(1.0), "{:?} vs {:?}", f.pca.eigenvalues, explicit);
        }
    }

    #[test]
    fn spectral_identities(f in family()) {
        let k = f.deviations.len();
        let total: f64 = f.deviations.iter().map(|d| sigma_inner(d, d, &f.mean).unwrap()).sum::<f64>() / k as f64;
        let sum: f64 = f.pca.eigenvalues.iter().sum();
        prop_assert!((sum - total).abs() <= 1e-8 * total.max(1.0));

        let max = f.pca.eigenvalues[0];
        prop_assert!(f.pca.eigenvalues.iter().filter(|&&l| l > 1e-10 * max).count() < k);

        let m = f.pca.num_components();
        for a in 0..m {
            for b in 0..m {
                let g = sigma_inner(&f.pca.components[a], &f.pca.components[b], &f.mean).unwrap();
                let target = if a == b { 1.0 } else { 0.0 };
                prop_assert!((g - target).abs() <= 1e-8);
            }
            let col: Vec<f64> = (0..k).map(|j| f.pca.scores[(j, a)]).collect();
            let mean_score = col.iter().sum::<f64>() / k as f64;
            prop_assert!(mean_score.abs() <= 1e-8);
            let var = col.iter().map(|s| s * s).sum::<f64>() / k as f64;
            prop_assert!((var - f.pca.eigenvalues[a]).abs() <= 1e-8 * max.max(1.0));
        }
    }

    #[test]
    fn scores_reconstruct_deviations(f in family()) {
        for (j, d) in f.deviations.iter().enumerate() {
            let mut rebuilt = SymMatrix::zeros(d.dim());
            for (m, e) in f.pca.components.iter().enumerate() {
                rebuilt = rebuilt.add(&e.scale(f.pca.scores[(j, m)]));
            }
            prop_assert!(rebuilt.sub(d).frobenius_norm() <= 1e-6);
        }
    }

    #[test]
    fn inner_products_are_bounded_by_distances(f in family()) {
        let dist: Vec<f64> = f.covs.iter().map(|c| bw_distance(c, &f.mean).unwrap()).collect();
        for i in 0..f.deviations.len() {
            for j in 0..f.deviations.len() {
                let g = sigma_inner(&f.deviations[i], &f.deviations[j], &f.mean).unwrap();
                prop_assert!(g <= dist[i] * dist[j] + 1e-8);
            }
        }
    }

    #[test]
    fn geodesic_distance_is_linear_in_the_step(f in family(), frac in -0.9..0.9f64) {
        prop_assume!(f.pca.num_components() > 0);
        let e = &f.pca.components[0];
        let (t_min, t_max) = covtransport_core::admissible_range(e).unwrap();
        let t = if frac >= 0.0 { frac * t_max.min(10.0) } else { -frac * t_min.max(-10.0) };
        let moved = geodesic_retract(&f.mean, e, t).unwrap();
        let d = bw_distance(&f.mean, &moved).unwrap();
        prop_assert!((d - t.abs()).abs() <= 1e-8 * (1.0 + t.abs()), "t = {t}, d = {d}");
    }
}

#[test]
fn mode_traces_are_symmetric_and_monotone() {
    let a = CovOperator::new(Mat::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap()).unwrap();
    let b = CovOperator::new(Mat::from_rows(&[[1.0, -0.2], [-0.2, 3.0]]).unwrap()).unwrap();
    let f = fit(vec![a, b]);
    assert_eq!(f.pca.num_components(), 1);
    let (t_min, t_max) = covtransport_core::admissible_range(&f.pca.components[0]).unwrap();
    let s = 0.5 * t_max.min(-t_min);
    let pair = principal_mode_samples(&f.pca, 0, &[-s, s]).unwrap();
    let (d1, d2) = (bw_distance(&f.mean, &pair[0]).unwrap(), bw_distance(&f.mean, &pair[1]).unwrap());
    assert!((d1 - d2).abs() < 1e-10);

    let ts: Vec<f64> = (0..5).map(|i| s * i as f64 / 4.0).collect();
    let trace = principal_mode_samples(&f.pca, 0, &ts).unwrap();
    let dists: Vec<f64> = trace.iter().map(|c| bw_distance(&f.mean, c).unwrap()).collect();
    assert!(dists.windows(2).all(|w| w[1] > w[0]), "{dists:?}");
}

#[test]
fn deviations_in_a_plane_give_two_components() {
    let mean = CovOperator::new(Mat::from_rows(&[[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 0.5]]).unwrap()).unwrap();
    let a = SymMatrix::from_diag(&[0.2, -0.1, 0.0]);
    let b = SymMatrix::symmetric_part(Mat::from_rows(&[[0.0, 0.1, 0.0], [0.1, 0.0, -0.2], [0.0, -0.2, 0.1]]).unwrap());
    let c = a.add(&b).scale(-1.0);
    let pca = tangent_pca(&[a, b, c], &mean).unwrap();
    assert_eq!(pca.num_components(), 2);
    assert_eq!(pca.eigenvalues[2], 0.0);
}
