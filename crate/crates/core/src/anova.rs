//! K-sample test of equal covariances based on transport deviations,
//! calibrated by permutations, and a square-root-distance baseline.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::curves::{column_means, CurveGroupSet};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::spd::{norm, sqrt_psd, CovOperator, NormKind, SymMatrix};
use crate::transport::{frechet_mean, DescentConfig};

/// Divisor of the empirical covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Denominator {
    N,
    #[default]
    NMinus1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Centering {
    #[default]
    GroupMean,
    None,
}

/// How per-group deviation sizes are combined into one statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Combine {
    /// `Σ_j ‖Δ_j‖²`.
    #[default]
    Sum,
    /// `max_j ‖Δ_j‖²`.
    Supremum,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct AnovaConfig {
    pub norm: NormKind,
    /// Number of Monte Carlo permutations `B`.
    pub permutations: usize,
    pub seed: u64,
    pub descent: DescentConfig,
    pub denominator: Denominator,
    pub center: Centering,
    pub combine: Combine,
}

impl Default for AnovaConfig {
    fn default() -> Self {
        AnovaConfig {
            norm: NormKind::HilbertSchmidt,
            permutations: 200,
            seed: 0,
            descent: DescentConfig::default(),
            denominator: Denominator::default(),
            center: Centering::default(),
            combine: Combine::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct AnovaResult {
    pub statistic: f64,
    pub perm_statistics: Vec<f64>,
    /// `(1 + #{b : T*_b ≥ T}) / (B + 1)`.
    pub p_value: f64,
    pub group_sizes: Vec<usize>,
    pub norm: NormKind,
    /// Fraction of permutation replicates whose Fréchet descent converged.
    pub converged_fraction: f64,
}

/// `T_r = Σ_j ‖Δ_j‖_r²`.
pub fn test_statistic(deviations: &[SymMatrix], which: NormKind) -> Result<f64> {
    combined_statistic(deviations, which, Combine::Sum)
}

fn combined_statistic(deviations: &[SymMatrix], which: NormKind, combine: Combine) -> Result<f64> {
    if deviations.is_empty() {
        return Err(Error::InvalidInput("no deviations".into()));
    }
    let sizes = deviations.iter().map(|d| {
        let n = norm(d, which);
        n * n
    });
    Ok(match combine {
        Combine::Sum => sizes.sum(),
        Combine::Supremum => sizes.fold(0.0, f64::max),
    })
}

/// Sample covariance of the rows of `curves`.
pub fn empirical_covariance(curves: &Mat, cfg: &AnovaConfig) -> Result<CovOperator> {
    let n = curves.rows();
    let divisor = match cfg.denominator {
        Denominator::N => n as f64,
        Denominator::NMinus1 => n as f64 - 1.0,
    };
    let min_n = match (cfg.center, cfg.denominator) {
        (Centering::GroupMean, _) | (Centering::None, Denominator::NMinus1) => 2,
        (Centering::None, Denominator::N) => 1,
    };
    if n < min_n {
        return Err(Error::InsufficientData(format!(
            "{n} curve(s) given, at least {min_n} needed for a covariance"
        )));
    }
    let centered = match cfg.center {
        Centering::GroupMean => {
            let means = column_means(curves);
            Mat::from_fn(n, curves.cols(), |i, j| curves[(i, j)] - means[j])
        }
        Centering::None => curves.clone(),
    };
    let cov = centered.t_matmul(&centered).scale(1.0 / divisor);
    Ok(CovOperator::psd_by_construction(cov))
}

fn basis_hint(e: Error) -> Error {
    match e {
        Error::RankDeficientMean { .. } | Error::RankDeficientInputs => {
            Error::BasisReductionRequired(format!(
                "{e}; group covariances are singular in the current basis, project the curves onto \
                 a basis in which they are full rank (e.g. fewer pooled principal directions than \
                 the smallest group size)"
            ))
        }
        other => other,
    }
}

/// Transport statistic of a set of group covariances, with the descent's
/// convergence flag.
fn transport_statistic(covs: &[CovOperator], cfg: &AnovaConfig) -> Result<(f64, bool)> {
    let res = frechet_mean(covs, &cfg.descent).map_err(basis_hint)?;
    let stat = combined_statistic(&res.deviations, cfg.norm, cfg.combine)?;
    Ok((stat, res.converged))
}

/// `max_{i<j} ‖Σ_i^{1/2} − Σ_j^{1/2}‖_2`.
fn sqrt_statistic(covs: &[CovOperator]) -> Result<(f64, bool)> {
    let roots = covs.iter().map(sqrt_psd).collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0f64;
    for i in 0..roots.len() {
        for j in (i + 1)..roots.len() {
            worst = worst.max(roots[i].sub(&roots[j]).frobenius_norm());
        }
    }
    Ok((worst, true))
}

/// Transport-based permutation test of `H0: Σ_1 = … = Σ_K`.
///
/// Replicate `b` shuffles all curves with an RNG on stream `b` of the
/// configured seed, keeping the observed group sizes, and reruns the full
/// Fréchet descent. Results do not depend on thread count.
pub fn permutation_test(groups: &CurveGroupSet, cfg: &AnovaConfig) -> Result<AnovaResult> {
    let mut res = run_permutations(groups, cfg, |covs| transport_statistic(covs, cfg))?;
    res.norm = cfg.norm;
    Ok(res)
}

/// Permutation test on the largest pairwise square-root distance, used as a
/// power baseline. Calibration is identical to [`permutation_test`].
pub fn baseline_sqrt_test(groups: &CurveGroupSet, cfg: &AnovaConfig) -> Result<AnovaResult> {
    let mut res = run_permutations(groups, cfg, sqrt_statistic)?;
    res.norm = NormKind::HilbertSchmidt;
    res.converged_fraction = 1.0;
    Ok(res)
}

fn run_permutations<F>(groups: &CurveGroupSet, cfg: &AnovaConfig, statistic: F) -> Result<AnovaResult>
where
    F: Fn(&[CovOperator]) -> Result<(f64, bool)> + Sync,
{
    if groups.num_groups() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 groups, got {}",
            groups.num_groups()
        )));
    }
    if cfg.permutations == 0 {
        return Err(Error::InvalidInput("number of permutations must be at least 1".into()));
    }
    cfg.descent.validate()?;

    let sizes = groups.group_sizes();
    let observed_covs = groups
        .groups()
        .iter()
        .map(|g| empirical_covariance(g, cfg))
        .collect::<Result<Vec<_>>>()?;
    let (observed, _) = statistic(&observed_covs)?;

    let pooled = groups.pooled();
    let replicate = |b: &u64| -> Result<(f64, bool)> {
        let mut rng = crate::stream_rng(cfg.seed, *b);
        let mut order: Vec<usize> = (0..pooled.rows()).collect();
        order.shuffle(&mut rng);
        let mut start = 0;
        let mut covs = Vec::with_capacity(sizes.len());
        for &n in &sizes {
            let rows = &order[start..start + n];
            start += n;
            let group = Mat::from_fn(n, pooled.cols(), |i, j| pooled[(rows[i], j)]);
            covs.push(empirical_covariance(&group, cfg)?);
        }
        statistic(&covs)
    };
    let indices: Vec<u64> = (0..cfg.permutations as u64).collect();
    let outcomes = crate::ordered_map(&indices, replicate)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let perm_statistics: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let exceed = perm_statistics.iter().filter(|&&s| s >= observed).count();
    let converged = outcomes.iter().filter(|o| o.1).count();
    Ok(AnovaResult {
        statistic: observed,
        p_value: p_value(exceed, cfg.permutations),
        perm_statistics,
        group_sizes: sizes,
        norm: cfg.norm,
        converged_fraction: converged as f64 / cfg.permutations as f64,
    })
}

/// `(1 + exceed) / (B + 1)`.
pub(crate) fn p_value(exceed: usize, permutations: usize) -> f64 {
    (1 + exceed) as f64 / (permutations + 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn statistic_of_zero_deviations_is_zero() {
        let devs = vec![SymMatrix::zeros(3); 4];
        for k in [NormKind::Operator, NormKind::HilbertSchmidt, NormKind::Trace] {
            assert_eq!(test_statistic(&devs, k).unwrap(), 0.0);
        }
        assert!(matches!(test_statistic(&[], NormKind::Trace), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn statistic_two_sample_scaling() {
        // Σ₂ = 4Σ₁ = 4I₂: Δ₁ = −I/3, Δ₂ = I/3.
        let d = SymMatrix::identity(2).scale(1.0 / 3.0);
        let devs = vec![d.scale(-1.0), d];
        assert!(close(test_statistic(&devs, NormKind::HilbertSchmidt).unwrap(), 4.0 / 9.0, 1e-14));
        assert!(close(test_statistic(&devs, NormKind::Operator).unwrap(), 2.0 / 9.0, 1e-14));
        assert!(close(test_statistic(&devs, NormKind::Trace).unwrap(), 8.0 / 9.0, 1e-14));
    }

    #[test]
    fn statistic_from_norm_examples() {
        let d = SymMatrix::from_diag(&[3.0, -4.0]);
        let devs = vec![d.clone(), d.scale(-1.0)];
        assert!(close(test_statistic(&devs, NormKind::Operator).unwrap(), 32.0, 1e-12));
        assert!(close(test_statistic(&devs, NormKind::HilbertSchmidt).unwrap(), 50.0, 1e-12));
        assert!(close(test_statistic(&devs, NormKind::Trace).unwrap(), 98.0, 1e-12));
        let sup = combined_statistic(&devs, NormKind::Trace, Combine::Supremum).unwrap();
        assert!(close(sup, 49.0, 1e-12));
    }

    #[test]
    fn empirical_covariance_examples() {
        let cfg = AnovaConfig::default();
        let curves = Mat::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        let s = empirical_covariance(&curves, &cfg).unwrap();
        assert_eq!(s.as_mat(), &Mat::from_rows(&[[2.0, 0.0], [0.0, 0.0]]).unwrap());

        let copies = Mat::from_rows(&[[1.0, -2.0], [1.0, -2.0], [1.0, -2.0]]).unwrap();
        assert_eq!(empirical_covariance(&copies, &cfg).unwrap().max_abs(), 0.0);

        let raw = AnovaConfig {
            center: Centering::None,
            denominator: Denominator::N,
            ..AnovaConfig::default()
        };
        let s = empirical_covariance(&Mat::identity(2), &raw).unwrap();
        assert_eq!(s.as_mat(), &Mat::identity(2).scale(0.5));

        let one = Mat::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(
            empirical_covariance(&one, &cfg),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn p_value_formula() {
        assert!(close(p_value(0, 199), 0.005, 1e-15));
        assert_eq!(p_value(199, 199), 1.0);
    }

    fn toy_groups() -> CurveGroupSet {
        let g = |phase: f64, scale: f64| {
            Mat::from_fn(8, 2, |i, j| scale * libm::sin(1.7 * i as f64 + phase + 0.9 * j as f64))
        };
        CurveGroupSet::new(
            vec![String::from("a"), String::from("b"), String::from("c")],
            vec![g(0.0, 1.0), g(0.4, 1.0), g(1.1, 3.0)],
            None,
        )
        .unwrap()
    }

    #[test]
    fn permutation_test_is_deterministic_and_consistent() {
        let cfg = AnovaConfig {
            permutations: 19,
            seed: 7,
            ..AnovaConfig::default()
        };
        let a = permutation_test(&toy_groups(), &cfg).unwrap();
        let b = permutation_test(&toy_groups(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.perm_statistics.len(), 19);
        let exceed = a.perm_statistics.iter().filter(|&&s| s >= a.statistic).count();
        assert_eq!(a.p_value, (1 + exceed) as f64 / 20.0);
        assert_eq!(a.group_sizes, vec![8, 8, 8]);

        let other_seed = permutation_test(&toy_groups(), &AnovaConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(other_seed.perm_statistics, a.perm_statistics);
    }

    #[test]
    fn baseline_statistic_maximises_over_pairs() {
        let covs = vec![
            CovOperator::identity(2),
            CovOperator::identity(2),
            CovOperator::identity(2).scale(4.0),
        ];
        let (s, _) = sqrt_statistic(&covs).unwrap();
        assert!(close(s, 2f64.sqrt(), 1e-12));
        let (s, _) = sqrt_statistic(&covs[..2]).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn singular_group_covariances_ask_for_basis_reduction() {
        // 2 curves in 3 dimensions give rank-1 covariances.
        let g = |s: f64| Mat::from_fn(2, 3, |i, j| s * (i as f64 + 1.0) * (j as f64 - 1.0) + i as f64);
        let set = CurveGroupSet::new(
            vec![String::from("a"), String::from("b")],
            vec![g(1.0), g(2.0)],
            None,
        )
        .unwrap();
        let cfg = AnovaConfig {
            permutations: 3,
            ..AnovaConfig::default()
        };
        assert!(matches!(
            permutation_test(&set, &cfg),
            Err(Error::BasisReductionRequired(_))
        ));
    }
}
