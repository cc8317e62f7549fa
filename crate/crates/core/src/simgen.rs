//! Simulation models: random optimal maps from a shifted-sine series,
//! covariances with a known Fréchet mean, Gaussian curve sampling and
//! geodesic/additive perturbations of a base covariance.
//!
//! All samplers take the RNG explicitly; use [`crate::stream_rng`] to give
//! every independent object its own stream.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, qr, svd, Mat};
use crate::spd::{eig_of, sqrt_psd, CovOperator, SymMatrix, PSD_REL_TOL};

/// Default number of attempts at drawing maps that average to the identity.
pub const SYMMETRIZE_RETRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GenModelConfig {
    /// Grid size `q`.
    pub dim: usize,
    /// Degrees of freedom `k` of the χ² weights; `f64::INFINITY` gives
    /// identity maps.
    pub concentration: f64,
    /// Concentration of the von Mises phase shift; 0 is circular-uniform.
    pub vonmises_kappa: f64,
    /// Number of sine terms kept, `1..=dim`.
    pub n_terms: usize,
    pub groups: usize,
    pub seed: u64,
    /// Replace the last map by `K·I − Σ_{j<K} T_j` so the maps average to
    /// the identity exactly.
    pub exact_mean_identity: bool,
}

impl GenModelConfig {
    /// Sensible defaults for a `dim`-point grid: half as many sine terms as
    /// grid points.
    pub fn new(dim: usize, groups: usize) -> Self {
        GenModelConfig {
            dim,
            concentration: 20.0,
            vonmises_kappa: 1.0,
            n_terms: (dim / 2).max(1),
            groups,
            seed: 0,
            exact_mean_identity: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if self.n_terms == 0 || self.n_terms > self.dim {
            return Err(Error::InvalidInput(alloc::format!(
                "n_terms = {} must lie in 1..={}",
                self.n_terms,
                self.dim
            )));
        }
        if !(self.concentration > 0.0) {
            return Err(Error::InvalidInput("concentration k must be positive".into()));
        }
        if !(self.vonmises_kappa >= 0.0) || !self.vonmises_kappa.is_finite() {
            return Err(Error::InvalidInput("von Mises kappa must be finite and >= 0".into()));
        }
        if self.groups == 0 {
            return Err(Error::InvalidInput("need at least one group".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PerturbKind {
    Geodesic,
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PerturbConfig {
    pub gamma: f64,
    pub kind: PerturbKind,
    /// Number of perturbed groups.
    pub k1: usize,
    /// Number of groups left at the base covariance.
    pub k2: usize,
}

/// Midpoint grid `t_i = (i − 1/2)/q` on `[0, 1]`.
pub fn midpoint_grid(q: usize) -> Vec<f64> {
    (0..q).map(|i| (i as f64 + 0.5) / q as f64).collect()
}

fn wrap_angle(x: f64) -> f64 {
    // into (−π, π]
    let mut y = libm::fmod(x + PI, 2.0 * PI);
    if y <= 0.0 {
        y += 2.0 * PI;
    }
    y - PI
}

/// Von Mises draw with mean `mu` and concentration `kappa` by the
/// Best–Fisher rejection scheme. `kappa = 0` is uniform on the circle.
pub fn sample_von_mises<R: Rng + ?Sized>(mu: f64, kappa: f64, rng: &mut R) -> f64 {
    if kappa < 1e-8 {
        return wrap_angle(mu + PI * (2.0 * rng.random::<f64>() - 1.0));
    }
    let s = if kappa < 1e-5 {
        // second-order expansion of the expression below
        1.0 / kappa + kappa
    } else if kappa <= 1e6 {
        let r = 1.0 + libm::sqrt(1.0 + 4.0 * kappa * kappa);
        let rho = (r - libm::sqrt(2.0 * r)) / (2.0 * kappa);
        (1.0 + rho * rho) / (2.0 * rho)
    } else {
        // Wrapped normal limit; the rejection constants lose all precision.
        let z: f64 = rng.sample(StandardNormal);
        return wrap_angle(mu + z / libm::sqrt(kappa));
    };
    let w = loop {
        let u: f64 = rng.random();
        let z = libm::cos(PI * u);
        let w = (1.0 + s * z) / (s + z);
        let y = kappa * (s - w);
        let v: f64 = rng.random();
        if y * (2.0 - y) - v >= 0.0 || libm::log(y / v) + 1.0 - y >= 0.0 {
            break w;
        }
    };
    let theta = libm::acos(w.clamp(-1.0, 1.0));
    let theta = if rng.random::<f64>() < 0.5 { -theta } else { theta };
    wrap_angle(mu + theta)
}

/// χ²_k draw as Gamma(k/2, scale 2); `k` need not be an integer.
pub fn sample_chi2<R: Rng + ?Sized>(k: f64, rng: &mut R) -> f64 {
    Gamma::new(k / 2.0, 2.0)
        .expect("k must be positive and finite")
        .sample(rng)
}

/// Random PSD map `T = Φ diag(δ_1/k, …, δ_n/k, 1, …, 1) Φᵀ`, where the first
/// `n_terms` columns of `Φ` orthonormalize the grid-sampled shifted sines
/// `sin(2nπt − θ)`, `θ ~ vonMises(0, κ)` and `δ_n ~ χ²_k`. The orthogonal
/// complement of the sine span is left untouched.
pub fn generative_map<R: Rng + ?Sized>(cfg: &GenModelConfig, rng: &mut R) -> Result<SymMatrix> {
    cfg.validate()?;
    let q = cfg.dim;
    let theta = sample_von_mises(0.0, cfg.vonmises_kappa, rng);
    let weights: Vec<f64> = (0..cfg.n_terms)
        .map(|_| {
            if cfg.concentration.is_infinite() {
                1.0
            } else {
                sample_chi2(cfg.concentration, rng) / cfg.concentration
            }
        })
        .collect();

    let grid = midpoint_grid(q);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_terms);
    for n in 1..=cfg.n_terms {
        let mut v: Vec<f64> = grid
            .iter()
            .map(|&t| libm::sin(2.0 * PI * n as f64 * t - theta))
            .collect();
        let original = libm::sqrt(dot(&v, &v));
        // Gram–Schmidt, twice for stability.
        for _ in 0..2 {
            for b in &basis {
                let p = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let len = libm::sqrt(dot(&v, &v));
        if !(len > 1e-8 * original) {
            return Err(Error::DegenerateBasis { term: n });
        }
        v.iter_mut().for_each(|x| *x /= len);
        basis.push(v);
    }

    let mut t = Mat::identity(q);
    for (phi, &w) in basis.iter().zip(&weights) {
        let c = w - 1.0;
        for i in 0..q {
            for j in 0..q {
                t[(i, j)] += c * phi[i] * phi[j];
            }
        }
    }
    Ok(SymMatrix::symmetric_part(t))
}

/// Draws `K = cfg.groups` generative maps and returns them with the
/// covariances `T_j · origin · T_j`, whose Fréchet mean is `origin` whenever
/// the maps average to the identity.
pub fn make_barycentric_family<R: Rng + ?Sized>(
    cfg: &GenModelConfig,
    origin: &CovOperator,
    rng: &mut R,
) -> Result<(Vec<SymMatrix>, Vec<CovOperator>)> {
    make_barycentric_family_with_retries(cfg, origin, rng, SYMMETRIZE_RETRIES)
}

pub fn make_barycentric_family_with_retries<R: Rng + ?Sized>(
    cfg: &GenModelConfig,
    origin: &CovOperator,
    rng: &mut R,
    retries: usize,
) -> Result<(Vec<SymMatrix>, Vec<CovOperator>)> {
    cfg.validate()?;
    if origin.dim() != cfg.dim {
        return Err(Error::DimMismatch {
            expected: cfg.dim,
            found: origin.dim(),
        });
    }
    let eig = eig_of(origin)?;
    if !(eig.values[0] > 0.0) || *eig.values.last().unwrap() <= PSD_REL_TOL * eig.values[0] {
        return Err(Error::InvalidInput("origin covariance must be full rank".into()));
    }
    let k = cfg.groups;
    let maps = if cfg.exact_mean_identity {
        let mut found = None;
        for _ in 0..retries.max(1) {
            let mut maps = (0..k - 1)
                .map(|_| generative_map(cfg, rng))
                .collect::<Result<Vec<_>>>()?;
            let mut last = Mat::identity(cfg.dim).scale(k as f64);
            for t in &maps {
                last = last.sub(t);
            }
            let last = SymMatrix::symmetric_part(last);
            let min = *eig_of(&last)?.values.last().unwrap();
            if min >= 0.0 {
                maps.push(last);
                found = Some(maps);
                break;
            }
        }
        found.ok_or(Error::CannotSymmetrize { attempts: retries.max(1) })?
    } else {
        (0..k)
            .map(|_| generative_map(cfg, rng))
            .collect::<Result<Vec<_>>>()?
    };
    let covs = maps.iter().map(|t| origin.congruence(t)).collect();
    Ok((maps, covs))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal moved into `Q`.
pub fn haar_orthogonal<R: Rng + ?Sized>(q: usize, rng: &mut R) -> Mat {
    let g = Mat::from_fn(q, q, |_, _| rng.sample(StandardNormal));
    let (qm, r) = qr(&g);
    Mat::from_fn(q, q, |i, j| {
        if r[(j, j)] < 0.0 {
            -qm[(i, j)]
        } else {
            qm[(i, j)]
        }
    })
}

/// `U diag(1, 2⁻⁴, …, q⁻⁴) Uᵀ` with `U` Haar-random.
pub fn origin_covariance<R: Rng + ?Sized>(q: usize, rng: &mut R) -> CovOperator {
    let u = haar_orthogonal(q, rng);
    let spectrum: Vec<f64> = (1..=q).map(|n| libm::pow(n as f64, -4.0)).collect();
    CovOperator::psd_by_construction(Mat::congruence_diag(&u, &spectrum))
}

/// `n` independent rows `cov^{1/2} z`, `z` standard normal.
pub fn sample_gaussian_curves<R: Rng + ?Sized>(
    cov: &CovOperator,
    n: usize,
    rng: &mut R,
) -> Result<Mat> {
    if n == 0 {
        return Err(Error::InvalidInput("number of curves must be positive".into()));
    }
    let root = sqrt_psd(cov)?;
    let z = Mat::from_fn(n, cov.dim(), |_, _| rng.sample(StandardNormal));
    // Row i is (root · z_i)ᵀ = z_iᵀ · root since the root is symmetric.
    Ok(z.matmul(&root))
}

/// Orthogonal `R` minimising `‖S₁^{1/2} − S₂^{1/2} R‖_2`: the polar factor of
/// `(S₂^{1/2})ᵀ S₁^{1/2}`.
pub fn procrustes_align(s1: &CovOperator, s2: &CovOperator) -> Result<Mat> {
    if s1.dim() != s2.dim() {
        return Err(Error::DimMismatch {
            expected: s1.dim(),
            found: s2.dim(),
        });
    }
    let r1 = sqrt_psd(s1)?;
    let r2 = sqrt_psd(s2)?;
    let dec = svd(&r2.t_matmul(&r1));
    Ok(dec.u.matmul_t(&dec.v))
}

/// Perturbed covariance `Σ(γ)`.
///
/// Geodesic: `B Bᵀ` with `B = Σ_m^{1/2} + γ(Σ_f^{1/2} R − Σ_m^{1/2})` and `R`
/// from [`procrustes_align`]. Additive: `(1 + γ) Σ_m`.
pub fn perturb(
    base_m: &CovOperator,
    base_f: Option<&CovOperator>,
    cfg: &PerturbConfig,
) -> Result<CovOperator> {
    if !(cfg.gamma >= 0.0) || !cfg.gamma.is_finite() {
        return Err(Error::InvalidInput(alloc::format!(
            "gamma = {} must be finite and non-negative",
            cfg.gamma
        )));
    }
    match cfg.kind {
        PerturbKind::Additive => Ok(base_m.scale(1.0 + cfg.gamma)),
        PerturbKind::Geodesic => {
            let base_f = base_f.ok_or_else(|| {
                Error::InvalidInput("geodesic perturbation needs a second base covariance".into())
            })?;
            let r = procrustes_align(base_m, base_f)?;
            let mh = sqrt_psd(base_m)?;
            let fh = sqrt_psd(base_f)?;
            let mut b = mh.as_mat().scale(1.0 - cfg.gamma);
            b.axpy(cfg.gamma, &fh.matmul(&r));
            Ok(CovOperator::psd_by_construction(b.matmul_t(&b)))
        }
    }
}

/// `k1` perturbed covariances followed by `k2` copies of `base_m`.
pub fn perturbed_family(
    base_m: &CovOperator,
    base_f: Option<&CovOperator>,
    cfg: &PerturbConfig,
) -> Result<Vec<CovOperator>> {
    let perturbed = perturb(base_m, base_f, cfg)?;
    let mut out = vec![perturbed; cfg.k1];
    out.extend(core::iter::repeat(base_m.clone()).take(cfg.k2));
    Ok(out)
}

/// Two smooth synthetic covariances on a `q`-point midpoint grid, standing in
/// for a pair of growth-curve covariances. The first is a long-range
/// exponential kernel with variance increasing in `t`, so that a handful of
/// components carry almost all of the variance, as for smoothed growth
/// curves. The second is a squared-exponential kernel with a different
/// envelope plus a short-range term. Both are scaled by `1/q`.
pub fn growth_style_bases(q: usize) -> (CovOperator, CovOperator) {
    let grid = midpoint_grid(q);
    let scale = 1.0 / q as f64;
    let m = Mat::from_fn(q, q, |i, j| {
        let (s, t) = (grid[i], grid[j]);
        scale * (1.0 + 2.0 * s) * (1.0 + 2.0 * t) * libm::exp(-(s - t).abs())
    });
    let f = Mat::from_fn(q, q, |i, j| {
        let (s, t) = (grid[i], grid[j]);
        let d = s - t;
        let smooth = (1.5 + s) * (1.5 + t) * libm::exp(-d * d / (2.0 * 0.15 * 0.15));
        scale * (smooth + 0.5 * libm::exp(-d.abs() / 0.1))
    });
    (
        CovOperator::psd_by_construction(m),
        CovOperator::psd_by_construction(f),
    )
}
