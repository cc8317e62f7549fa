//! Bures–Wasserstein geometry: distances, optimal maps and the Fréchet mean.
//!
//! The optimal map from `N(0, Σ)` to `N(0, S)` is
//! `t = Σ^{-1/2} (Σ^{1/2} S Σ^{1/2})^{1/2} Σ^{-1/2}`. Forming the inner product
//! squares the condition number of `Σ`, so for fast-decaying spectra the
//! closed form alone loses most significant digits in the small-eigenvalue
//! directions. Every map is therefore polished by a few Newton steps on the
//! Riccati equation `t Σ t = S`, whose residual can be evaluated to working
//! precision.

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::spd::{eig_of, sqrt_psd, CovOperator, SymMatrix, PSD_REL_TOL};

const MAX_REFINEMENTS: usize = 6;

/// Starting point of the steepest descent.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InitStrategy {
    /// `(mean trace / q) · I`.
    TraceScaledIdentity,
    /// One of the inputs, with a clip-band ridge added if it is singular.
    IndexOfInput(usize),
    Explicit(CovOperator),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DescentConfig {
    pub max_iters: usize,
    /// Stopping threshold on `‖(T_k − I)(Σ^k)^{1/2}‖_2`, relative to
    /// `trace(Σ^0)`. The descent also requires `‖T_k − I‖_2` to be within ten
    /// times that threshold.
    pub grad_tol: f64,
    pub init: InitStrategy,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            max_iters: 100,
            grad_tol: 1e-9,
            init: InitStrategy::IndexOfInput(0),
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidInput("grad_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Fréchet mean of a set of covariances together with the optimal maps from
/// the mean to each of them.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TransportResult {
    pub mean: CovOperator,
    pub maps: Vec<SymMatrix>,
    /// `maps[j] − I`.
    pub deviations: Vec<SymMatrix>,
    /// Number of iterates at which maps were evaluated.
    pub iterations: usize,
    /// `‖(T − I) Σ̄^{1/2}‖_2` at the reported mean.
    pub grad_norm: f64,
    pub converged: bool,
    /// Fréchet functional `Σ_j Π²(Σ^k, Σ_j)` at every iterate.
    pub functional_history: Vec<f64>,
}

impl TransportResult {
    /// `‖K⁻¹ Σ_j t_j − I‖_2`.
    pub fn mean_identity_residual(&self) -> f64 {
        let k = self.maps.len() as f64;
        let mut avg = Mat::zeros(self.mean.dim(), self.mean.dim());
        for t in &self.maps {
            avg.axpy(1.0 / k, t);
        }
        avg.add_diag(-1.0);
        avg.frobenius_norm()
    }
}

/// Square root and inverse square root of a full-rank source covariance.
struct SourceRoot {
    sqrt: Mat,
    inv_sqrt: Mat,
}

impl SourceRoot {
    fn new(source: &Mat) -> Result<Self> {
        let eig = eig_of(source)?;
        let max = eig.values[0];
        let min = *eig.values.last().unwrap();
        if !(max > 0.0) || min <= PSD_REL_TOL * max {
            return Err(Error::RankDeficientMean {
                ratio: if max > 0.0 { min / max } else { 0.0 },
            });
        }
        Ok(SourceRoot {
            sqrt: eig.apply(libm::sqrt),
            inv_sqrt: eig.apply(|l| 1.0 / libm::sqrt(l)),
        })
    }

    /// Optimal map from the source to `target`.
    fn map_to(&self, source: &Mat, target: &Mat) -> Result<SymMatrix> {
        let n = source.rows();
        let mut inner = self.sqrt.matmul(target).matmul(&self.sqrt);
        inner.symmetrize();
        let eig = eig_of(&inner)?;
        let root: Vec<f64> = eig.values.iter().map(|&m| libm::sqrt(m.max(0.0))).collect();
        let mut t = self
            .inv_sqrt
            .matmul(&Mat::congruence_diag(&eig.vectors, &root))
            .matmul(&self.inv_sqrt);
        t.symmetrize();

        // Newton polish on t Σ t = S. With M = Σ^{1/2} S Σ^{1/2} = W diag(β²) Wᵀ
        // the linearized equation E Σ t + t Σ E = R decouples in the basis
        // Σ^{1/2} W, up to the (small) error already present in t.
        let aw = self.sqrt.matmul(&eig.vectors);
        let inv_w = self.inv_sqrt.matmul(&eig.vectors);
        let beta_max = root[0];
        let residual = |t: &Mat| {
            let mut r = target.sub(&t.matmul(source).matmul(t));
            r.symmetrize();
            r
        };
        let mut r = residual(&t);
        let mut r_norm = r.frobenius_norm();
        for _ in 0..MAX_REFINEMENTS {
            if r_norm == 0.0 {
                break;
            }
            let mut f = aw.t_matmul(&r).matmul(&aw);
            for i in 0..n {
                for j in 0..n {
                    let denom = root[i] + root[j];
                    f[(i, j)] = if denom > 1e-14 * beta_max {
                        f[(i, j)] / denom
                    } else {
                        0.0
                    };
                }
            }
            let mut candidate = t.add(&inv_w.matmul(&f).matmul_t(&inv_w));
            candidate.symmetrize();
            let r_new = residual(&candidate);
            let r_new_norm = r_new.frobenius_norm();
            if !(r_new_norm < 0.5 * r_norm) {
                break;
            }
            t = candidate;
            r = r_new;
            r_norm = r_new_norm;
        }
        Ok(SymMatrix::symmetric_part(t))
    }

    /// `‖(t − I) Σ^{1/2}‖_2²`, the squared distance moved by the map `t`.
    fn displacement_sq(&self, map: &Mat) -> f64 {
        let mut dev = map.clone();
        dev.add_diag(-1.0);
        let moved = dev.matmul(&self.sqrt);
        moved.frobenius_dot(&moved)
    }
}

fn check_dims(a: &Mat, b: &Mat) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::DimMismatch {
            expected: a.rows(),
            found: b.rows(),
        });
    }
    Ok(())
}

fn eigen_ratio(m: &Mat) -> Result<f64> {
    let eig = eig_of(m)?;
    let max = eig.values.first().copied().unwrap_or(0.0);
    let min = eig.values.last().copied().unwrap_or(0.0);
    Ok(if max > 0.0 { min / max } else { 0.0 })
}

/// Bures–Wasserstein (Procrustes) distance
/// `Π² = tr Σ₁ + tr Σ₂ − 2 tr (Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2}`.
///
/// When one argument is full rank the distance is evaluated as the
/// displacement `‖(t − I) Σ^{1/2}‖_2` of the optimal map from the better
/// conditioned argument, which avoids the cancellation in the trace formula.
pub fn bw_distance(s1: &CovOperator, s2: &CovOperator) -> Result<f64> {
    check_dims(s1, s2)?;
    let r1 = eigen_ratio(s1)?;
    let r2 = eigen_ratio(s2)?;
    let (source, target, ratio) = if r1 >= r2 { (s1, s2, r1) } else { (s2, s1, r2) };
    if ratio > PSD_REL_TOL {
        let root = SourceRoot::new(source)?;
        let map = root.map_to(source, target)?;
        return Ok(libm::sqrt(root.displacement_sq(&map)));
    }
    let a = sqrt_psd(s1)?;
    let mut inner = a.matmul(s2).matmul(&a);
    inner.symmetrize();
    let cross: f64 = eig_of(&inner)?
        .values
        .iter()
        .map(|&m| libm::sqrt(m.max(0.0)))
        .sum();
    let d2 = s1.trace() + s2.trace() - 2.0 * cross;
    Ok(libm::sqrt(d2.max(0.0)))
}

/// Optimal transport map from `N(0, mean)` to `N(0, target)`.
pub fn optimal_map(mean: &CovOperator, target: &CovOperator) -> Result<SymMatrix> {
    check_dims(mean, target)?;
    SourceRoot::new(mean)?.map_to(mean, target)
}

fn initial_iterate(covs: &[CovOperator], init: &InitStrategy) -> Result<CovOperator> {
    let q = covs[0].dim();
    let start = match init {
        InitStrategy::TraceScaledIdentity => {
            let avg_trace = covs.iter().map(|c| c.trace()).sum::<f64>() / covs.len() as f64;
            CovOperator::identity(q).scale(avg_trace / q as f64)
        }
        InitStrategy::IndexOfInput(i) => covs
            .get(*i)
            .ok_or_else(|| {
                Error::InvalidInput(alloc::format!(
                    "init index {i} out of range for {} inputs",
                    covs.len()
                ))
            })?
            .clone(),
        InitStrategy::Explicit(c) => {
            check_dims(c, &covs[0])?;
            c.clone()
        }
    };
    let eig = eig_of(&start)?;
    let max = eig.values[0];
    let min = *eig.values.last().unwrap();
    if !(max > 0.0) {
        return Err(Error::InvalidInput("initial iterate is the zero matrix".into()));
    }
    if min > PSD_REL_TOL * max {
        return Ok(start);
    }
    // Lift the kernel just above the clip band.
    let ridge = 10.0 * PSD_REL_TOL * max - min.min(0.0);
    let mut m = start.into_mat();
    m.add_diag(ridge);
    Ok(CovOperator::psd_by_construction(m))
}

/// Fréchet mean of `covs` under the Bures–Wasserstein metric by steepest
/// descent: `Σ^{k+1} = T_k Σ^k T_k` with `T_k` the average of the optimal
/// maps from `Σ^k`.
///
/// The returned maps are those evaluated at the reported mean. Running out of
/// iterations is not an error; it is reported through `converged`.
pub fn frechet_mean(covs: &[CovOperator], cfg: &DescentConfig) -> Result<TransportResult> {
    cfg.validate()?;
    if covs.len() < 2 {
        return Err(Error::InvalidInput(alloc::format!(
            "need at least 2 covariances, got {}",
            covs.len()
        )));
    }
    let q = covs[0].dim();
    for c in &covs[1..] {
        check_dims(&covs[0], c)?;
    }
    let mut any_full_rank = false;
    for c in covs {
        if eigen_ratio(c)? > PSD_REL_TOL {
            any_full_rank = true;
            break;
        }
    }
    if !any_full_rank {
        return Err(Error::RankDeficientInputs);
    }

    let k_inv = 1.0 / covs.len() as f64;
    let mut current = initial_iterate(covs, &cfg.init)?;
    let tol = cfg.grad_tol * current.trace();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let root = SourceRoot::new(&current)?;
        let maps = crate::ordered_map(covs, |c| root.map_to(&current, c));
        let maps = maps.into_iter().collect::<Result<Vec<_>>>()?;

        let mut avg = Mat::zeros(q, q);
        let mut functional = 0.0;
        for t in &maps {
            avg.axpy(k_inv, t);
            functional += root.displacement_sq(t);
        }
        history.push(functional);
        let grad = libm::sqrt(root.displacement_sq(&avg));

        // The weighted gradient alone can stop while directions with tiny
        // eigenvalues are still far from centred, so the unweighted
        // mean-identity residual must also be small.
        let mut residual = avg.clone();
        residual.add_diag(-1.0);
        let converged = grad <= tol && residual.frobenius_norm() <= 10.0 * tol;
        if converged || iterations >= cfg.max_iters {
            let deviations = maps.iter().map(SymMatrix::minus_identity).collect();
            return Ok(TransportResult {
                mean: current,
                maps,
                deviations,
                iterations,
                grad_norm: grad,
                converged,
                functional_history: history,
            });
        }
        current = current.congruence(&avg);
    }
}

/// `t_j − I` for every map of a transport result.
pub fn transport_deviations(result: &TransportResult) -> Vec<SymMatrix> {
    result.maps.iter().map(SymMatrix::minus_identity).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn diag(d: &[f64]) -> CovOperator {
        CovOperator::from_diag(d).unwrap()
    }

    fn close(a: &Mat, b: &Mat, tol: f64) -> bool {
        a.sub(b).max_abs() <= tol
    }

    #[test]
    fn distance_examples() {
        let s = CovOperator::new(Mat::from_rows(&[[2.0, 0.3], [0.3, 1.0]]).unwrap()).unwrap();
        assert!(bw_distance(&s, &s).unwrap() < 1e-12);

        // Commuting: Π = ‖S₁^{1/2} − S₂^{1/2}‖_2.
        let d = bw_distance(&CovOperator::identity(3), &CovOperator::identity(3).scale(4.0)).unwrap();
        assert!((d - 3f64.sqrt()).abs() < 1e-12);
        let d = bw_distance(&diag(&[1.0, 4.0]), &diag(&[4.0, 1.0])).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distance_trace_route_for_singular_pairs() {
        // Neither argument is full rank: Π² = ‖√a − √b‖² for commuting a, b.
        let d = bw_distance(&diag(&[4.0, 0.0]), &diag(&[1.0, 0.0])).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert!(matches!(
            bw_distance(&diag(&[1.0]), &diag(&[1.0, 1.0])),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn map_examples() {
        let s = CovOperator::new(Mat::from_rows(&[[2.0, 0.3], [0.3, 1.0]]).unwrap()).unwrap();
        assert!(close(&optimal_map(&s, &s).unwrap(), &Mat::identity(2), 1e-12));
        let t = optimal_map(&CovOperator::identity(2), &diag(&[4.0, 9.0])).unwrap();
        assert!(close(&t, &Mat::from_diag(&[2.0, 3.0]), 1e-12));
        let t = optimal_map(&diag(&[4.0, 1.0]), &diag(&[1.0, 4.0])).unwrap();
        assert!(close(&t, &Mat::from_diag(&[0.5, 2.0]), 1e-12));
    }

    #[test]
    fn map_refuses_singular_mean() {
        assert!(matches!(
            optimal_map(&diag(&[1.0, 0.0]), &diag(&[1.0, 1.0])),
            Err(Error::RankDeficientMean { .. })
        ));
    }

    #[test]
    fn map_to_singular_target_pushes_forward() {
        let mean = CovOperator::new(Mat::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap()).unwrap();
        let target = CovOperator::new(Mat::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap()).unwrap();
        let t = optimal_map(&mean, &target).unwrap();
        let pushed = t.matmul(&mean).matmul(&t);
        assert!(close(&pushed, &target, 1e-10));
    }

    #[test]
    fn identical_inputs_converge_immediately() {
        let s = CovOperator::new(Mat::from_rows(&[[2.0, 0.3], [0.3, 1.0]]).unwrap()).unwrap();
        let res = frechet_mean(&[s.clone(), s.clone(), s.clone()], &DescentConfig::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.converged);
        assert!(close(&res.mean, &s, 1e-12));
        for t in &res.maps {
            assert!(close(t, &Mat::identity(2), 1e-12));
        }
    }

    #[test]
    fn commuting_pair_mean_is_square_of_averaged_roots() {
        let res = frechet_mean(
            &[CovOperator::identity(2), CovOperator::identity(2).scale(4.0)],
            &DescentConfig::default(),
        )
        .unwrap();
        assert!(res.converged);
        assert!(close(&res.mean, &Mat::from_diag(&[2.25, 2.25]), 1e-10));
    }

    #[test]
    fn two_sample_scaling_deviations() {
        // Σ₂ = δ² Σ₁ with δ = 2: Δ₁ = −I/3, Δ₂ = I/3.
        let res = frechet_mean(
            &[CovOperator::identity(2), CovOperator::identity(2).scale(4.0)],
            &DescentConfig::default(),
        )
        .unwrap();
        let devs = transport_deviations(&res);
        assert!(close(&devs[0], &Mat::identity(2).scale(-1.0 / 3.0), 1e-10));
        assert!(close(&devs[1], &Mat::identity(2).scale(1.0 / 3.0), 1e-10));
        assert_eq!(devs, res.deviations);
    }

    #[test]
    fn zero_maps_give_zero_deviations() {
        let s = diag(&[1.0, 2.0]);
        let res = frechet_mean(&[s.clone(), s], &DescentConfig::default()).unwrap();
        for d in transport_deviations(&res) {
            assert!(d.max_abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = DescentConfig::default();
        assert!(matches!(
            frechet_mean(&[CovOperator::identity(2)], &cfg),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            frechet_mean(&[diag(&[1.0, 0.0]), diag(&[0.0, 1.0])], &cfg),
            Err(Error::RankDeficientInputs)
        ));
        let bad = DescentConfig {
            max_iters: 0,
            ..DescentConfig::default()
        };
        assert!(frechet_mean(&[diag(&[1.0]), diag(&[2.0])], &bad).is_err());
    }

    #[test]
    fn singular_first_input_gets_a_ridge() {
        let covs = vec![diag(&[1.0, 0.0]), diag(&[1.0, 1.0]), diag(&[4.0, 1.0])];
        let res = frechet_mean(&covs, &DescentConfig::default()).unwrap();
        assert!(res.converged);
        // commuting: mean = ((√a + √b + √c)/3)²
        let expected = [((1.0 + 1.0 + 2.0) / 3.0f64).powi(2), (2.0 / 3.0f64).powi(2)];
        assert!(close(&res.mean, &Mat::from_diag(&expected), 1e-8));
    }

    #[test]
    fn hitting_max_iters_is_reported_not_raised() {
        let covs = vec![diag(&[1.0, 3.0]), diag(&[5.0, 1.0])];
        let cfg = DescentConfig {
            max_iters: 1,
            grad_tol: 1e-15,
            init: InitStrategy::TraceScaledIdentity,
        };
        let res = frechet_mean(&covs, &cfg).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(!res.converged);
        assert_eq!(res.maps.len(), 2);
    }
}
