//! Symmetric and positive semi-definite matrix algebra.
//!
//! [`SymMatrix`] holds tangent vectors and transport maps, [`CovOperator`]
//! holds covariances. Both symmetrize on construction; `CovOperator`
//! additionally clips eigenvalues inside the relative band
//! [`PSD_REL_TOL`]` · λ_max` to zero and rejects anything more negative.

use alloc::vec::Vec;
use core::ops::Deref;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Mat};

/// Relative eigenvalue threshold used everywhere a kernel has to be decided:
/// PSD clipping, pseudo-inverses and full-rank checks.
pub const PSD_REL_TOL: f64 = 1e-10;

/// Which operator norm to measure a symmetric matrix with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NormKind {
    /// Largest absolute eigenvalue.
    Operator,
    /// Square root of the sum of squared eigenvalues.
    HilbertSchmidt,
    /// Sum of absolute eigenvalues (nuclear norm).
    Trace,
}

/// A symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct SymMatrix(Mat);

impl SymMatrix {
    /// Validates near-symmetry (`|a_ij - a_ji| <= 1e-12 · max(1, max|a|)`)
    /// and averages with the transpose.
    pub fn new(mut m: Mat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimMismatch {
                expected: m.rows(),
                found: m.cols(),
            });
        }
        if !m.is_finite() {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let tol = 1e-12 * m.max_abs().max(1.0);
        let asym = m.asymmetry();
        if asym > tol {
            return Err(Error::InvalidInput(alloc::format!(
                "matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        m.symmetrize();
        Ok(SymMatrix(m))
    }

    /// Symmetric part of any square matrix, without the tolerance check.
    pub fn symmetric_part(mut m: Mat) -> Self {
        assert!(m.is_square());
        m.symmetrize();
        SymMatrix(m)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Mat::identity(n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Mat::zeros(n, n))
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        SymMatrix(Mat::from_diag(diag))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn add(&self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(self.0.add(&rhs.0))
    }

    pub fn sub(&self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(self.0.sub(&rhs.0))
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(self.0.scale(s))
    }

    /// `self - I`.
    pub fn minus_identity(&self) -> SymMatrix {
        let mut m = self.0.clone();
        m.add_diag(-1.0);
        SymMatrix(m)
    }
}

impl Deref for SymMatrix {
    type Target = Mat;

    fn deref(&self) -> &Mat {
        &self.0
    }
}

/// A covariance: symmetric positive semi-definite matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct CovOperator(Mat);

impl CovOperator {
    /// Validates symmetry and positive semi-definiteness. Eigenvalues within
    /// `-PSD_REL_TOL · λ_max` of zero are clipped to zero.
    pub fn new(m: Mat) -> Result<Self> {
        Self::from_sym(SymMatrix::new(m)?)
    }

    pub fn from_sym(s: SymMatrix) -> Result<Self> {
        let eig = sym_eig(&s)?;
        let max = eig.values.first().copied().unwrap_or(0.0);
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min >= 0.0 {
            return Ok(CovOperator(s.0));
        }
        if min < -PSD_REL_TOL * max.max(0.0) {
            return Err(Error::NotPsd {
                min_eig: min,
                max_eig: max,
            });
        }
        let clipped: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0)).collect();
        Ok(CovOperator(Mat::congruence_diag(&eig.vectors, &clipped)))
    }

    /// For matrices that are PSD by construction, such as `T Σ T` or a
    /// sample covariance; only symmetrizes.
    pub(crate) fn psd_by_construction(mut m: Mat) -> Self {
        m.symmetrize();
        CovOperator(m)
    }

    pub fn identity(n: usize) -> Self {
        CovOperator(Mat::identity(n))
    }

    pub fn zeros(n: usize) -> Self {
        CovOperator(Mat::zeros(n, n))
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        if let Some(&bad) = diag.iter().find(|&&d| !(d >= 0.0) || !d.is_finite()) {
            return Err(Error::NotPsd {
                min_eig: bad,
                max_eig: diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            });
        }
        Ok(CovOperator(Mat::from_diag(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn as_sym(&self) -> SymMatrix {
        SymMatrix(self.0.clone())
    }

    /// `c · self` for `c >= 0`.
    pub fn scale(&self, c: f64) -> CovOperator {
        assert!(c >= 0.0, "covariances can only be scaled by non-negative factors");
        CovOperator(self.0.scale(c))
    }

    /// `t · self · tᵀ`, which stays PSD for any square `t`.
    pub fn congruence(&self, t: &Mat) -> CovOperator {
        CovOperator::psd_by_construction(t.matmul(&self.0).matmul_t(t))
    }
}

impl Deref for CovOperator {
    type Target = Mat;

    fn deref(&self) -> &Mat {
        &self.0
    }
}

/// Eigendecomposition `S = V diag(λ) Vᵀ` with eigenvalues descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigDecomp {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, one per column.
    pub vectors: Mat,
}

impl EigDecomp {
    /// `V f(diag(λ)) Vᵀ`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Mat {
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        Mat::congruence_diag(&self.vectors, &mapped)
    }
}

/// Symmetric eigendecomposition. For repeated eigenvalues any orthonormal
/// basis of the eigenspace may be returned; the result is deterministic for
/// a given input.
pub fn sym_eig(s: &SymMatrix) -> Result<EigDecomp> {
    eig_of(s.as_mat())
}

pub(crate) fn eig_of(m: &Mat) -> Result<EigDecomp> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let (values, vectors) = symmetric_eigen(m);
    Ok(EigDecomp { values, vectors })
}

/// The unique PSD square root.
pub fn sqrt_psd(s: &CovOperator) -> Result<CovOperator> {
    let eig = eig_of(s)?;
    check_psd(&eig.values)?;
    Ok(CovOperator(eig.apply(|l| libm::sqrt(l.max(0.0)))))
}

pub(crate) fn check_psd(values: &[f64]) -> Result<()> {
    let max = values.first().copied().unwrap_or(0.0);
    let min = values.last().copied().unwrap_or(0.0);
    if min < -PSD_REL_TOL * max.max(0.0) {
        return Err(Error::NotPsd {
            min_eig: min,
            max_eig: max,
        });
    }
    Ok(())
}

/// Moore–Penrose inverse of `sqrt_psd(s)`. Eigenvalues at or below
/// `rel_tol · λ_max` are treated as zero.
pub fn pinv_sqrt(s: &CovOperator, rel_tol: f64) -> Result<SymMatrix> {
    let eig = eig_of(s)?;
    check_psd(&eig.values)?;
    let max = eig.values.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return Ok(SymMatrix::zeros(s.dim()));
    }
    let cutoff = rel_tol * max;
    Ok(SymMatrix(eig.apply(|l| {
        if l > cutoff {
            1.0 / libm::sqrt(l)
        } else {
            0.0
        }
    })))
}

/// Operator, Hilbert–Schmidt or trace norm of a symmetric matrix.
pub fn norm(s: &SymMatrix, which: NormKind) -> f64 {
    match which {
        // Frobenius equals the Hilbert–Schmidt norm and needs no spectrum.
        NormKind::HilbertSchmidt => s.frobenius_norm(),
        NormKind::Operator | NormKind::Trace => {
            let (values, _) = symmetric_eigen(s.as_mat());
            norm_from_spectrum(&values, which)
        }
    }
}

pub(crate) fn norm_from_spectrum(values: &[f64], which: NormKind) -> f64 {
    match which {
        NormKind::Operator => values.iter().fold(0.0, |m, l| m.max(l.abs())),
        NormKind::HilbertSchmidt => libm::sqrt(values.iter().map(|l| l * l).sum()),
        NormKind::Trace => values.iter().map(|l| l.abs()).sum(),
    }
}
