//! Principal component analysis on the tangent space at the Fréchet mean.
//!
//! Tangent vectors are the transport deviations `Δ_j = t_j − I`, with inner
//! product `⟨A, B⟩_Σ = trace(A Σ B)`. PCA under this inner product equals
//! Hilbert–Schmidt PCA of `Δ_j Σ^{1/2}`; the latter is solved through the
//! K×K Gram matrix, which never needs `Σ^{1/2}` explicitly because
//! `trace((Δ_i Σ^{1/2})ᵀ Δ_j Σ^{1/2}) = trace(Δ_i Σ Δ_j)`.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Mat};
use crate::spd::{eig_of, CovOperator, SymMatrix, PSD_REL_TOL};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TangentPcaResult {
    /// One per input deviation, descending; at most K−1 are nonzero.
    pub eigenvalues: Vec<f64>,
    /// Σ-orthonormal eigen-operators for the nonzero eigenvalues.
    pub components: Vec<SymMatrix>,
    /// `K × M`, `scores[(j, m)] = ⟨Δ_j, E_m⟩_Σ`.
    pub scores: Mat,
    pub mean: CovOperator,
    pub variance_proportions: Vec<f64>,
}

impl TangentPcaResult {
    pub fn num_components(&self) -> usize {
        self.components.len()
    }
}

/// `⟨A, B⟩_Σ = trace(A Σ B)`.
pub fn sigma_inner(a: &SymMatrix, b: &SymMatrix, mean: &CovOperator) -> Result<f64> {
    for m in [a.as_mat(), b.as_mat()] {
        if m.rows() != mean.dim() {
            return Err(Error::DimMismatch {
                expected: mean.dim(),
                found: m.rows(),
            });
        }
    }
    Ok(a.matmul(mean).frobenius_dot(b))
}

/// Tangent-space PCA of the deviations at `mean`.
pub fn tangent_pca(deviations: &[SymMatrix], mean: &CovOperator) -> Result<TangentPcaResult> {
    let k = deviations.len();
    if k == 0 {
        return Err(Error::InvalidInput("no deviations".into()));
    }
    for d in deviations {
        if d.dim() != mean.dim() {
            return Err(Error::DimMismatch {
                expected: mean.dim(),
                found: d.dim(),
            });
        }
    }
    let weighted: Vec<Mat> = deviations.iter().map(|d| d.matmul(mean)).collect();
    let mut gram = Mat::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let g = weighted[i].frobenius_dot(&deviations[j]) / k as f64;
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let (values, vectors) = symmetric_eigen(&gram);
    let max = values[0].max(0.0);
    let cutoff = PSD_REL_TOL * max;

    let mut eigenvalues = vec![0.0; k];
    let mut components = Vec::new();
    for (m, &ell) in values.iter().enumerate() {
        if !(max > 0.0) || ell <= cutoff {
            break;
        }
        eigenvalues[m] = ell;
        let mut e = Mat::zeros(mean.dim(), mean.dim());
        for (j, d) in deviations.iter().enumerate() {
            e.axpy(vectors[(j, m)], d);
        }
        let e = SymMatrix::symmetric_part(e);
        let len = libm::sqrt(sigma_inner(&e, &e, mean)?);
        components.push(e.scale(1.0 / len));
    }

    let mut scores = Mat::zeros(k, components.len());
    for (m, comp) in components.iter_mut().enumerate() {
        let mut column: Vec<f64> = weighted
            .iter()
            .map(|w| w.frobenius_dot(comp))
            .collect();
        // Largest-magnitude score is made positive.
        let lead = column
            .iter()
            .copied()
            .fold(0.0f64, |acc, s| if s.abs() > acc.abs() { s } else { acc });
        if lead < 0.0 {
            *comp = comp.scale(-1.0);
            column.iter_mut().for_each(|s| *s = -*s);
        }
        for (j, s) in column.into_iter().enumerate() {
            scores[(j, m)] = s;
        }
    }

    let total: f64 = eigenvalues.iter().sum();
    let variance_proportions = eigenvalues
        .iter()
        .map(|&l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    Ok(TangentPcaResult {
        eigenvalues,
        components,
        scores,
        mean: mean.clone(),
        variance_proportions,
    })
}

/// Range `[t_min, t_max]` of steps for which `I + t·E` stays PSD. Either end
/// may be infinite.
pub fn admissible_range(component: &SymMatrix) -> Result<(f64, f64)> {
    let eig = eig_of(component)?;
    let lmax = eig.values.first().copied().unwrap_or(0.0);
    let lmin = eig.values.last().copied().unwrap_or(0.0);
    let t_max = if lmin < 0.0 { 1.0 / -lmin } else { f64::INFINITY };
    let t_min = if lmax > 0.0 { -1.0 / lmax } else { f64::NEG_INFINITY };
    Ok((t_min, t_max))
}

/// `(I + tE) Σ (I + tE)`, the geodesic from `mean` in direction `E`.
pub fn geodesic_retract(mean: &CovOperator, component: &SymMatrix, t: f64) -> Result<CovOperator> {
    if component.dim() != mean.dim() {
        return Err(Error::DimMismatch {
            expected: mean.dim(),
            found: component.dim(),
        });
    }
    if !t.is_finite() {
        return Err(Error::InvalidInput("step must be finite".into()));
    }
    let (t_min, t_max) = admissible_range(component)?;
    // Relative slack so that the boundary itself counts as admissible.
    let slack = 1e-12;
    if t > t_max * (1.0 + slack) {
        return Err(Error::StepOutsideCone { max_abs_t: t_max });
    }
    if t < t_min * (1.0 + slack) {
        return Err(Error::StepOutsideCone { max_abs_t: -t_min });
    }
    let mut step = component.scale(t).into_mat();
    step.add_diag(1.0);
    Ok(mean.congruence(&step))
}

/// Covariances along the geodesic of one principal component, one per
/// step in `ts`.
pub fn principal_mode_samples(
    result: &TangentPcaResult,
    component_index: usize,
    ts: &[f64],
) -> Result<Vec<CovOperator>> {
    let component = result.components.get(component_index).ok_or_else(|| {
        Error::InvalidInput(alloc::format!(
            "component {component_index} requested but only {} available",
            result.components.len()
        ))
    })?;
    ts.iter()
        .map(|&t| geodesic_retract(&result.mean, component, t))
        .collect()
}
