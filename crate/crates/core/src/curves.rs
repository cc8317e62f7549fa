//! Grouped curve samples and the common-basis reduction that makes their
//! covariances full rank.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::spd::{eig_of, PSD_REL_TOL};

/// K labelled groups of curves sampled on a common grid. Group `j` is an
/// `n_j × q` matrix with one curve per row.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CurveGroupSet {
    labels: Vec<String>,
    groups: Vec<Mat>,
    grid: Option<Vec<f64>>,
}

impl CurveGroupSet {
    /// Checks that labels are unique, every group has at least two curves and
    /// all groups (and the grid, if given) share the same length `q`.
    pub fn new(labels: Vec<String>, groups: Vec<Mat>, grid: Option<Vec<f64>>) -> Result<Self> {
        if labels.len() != groups.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} groups",
                labels.len(),
                groups.len()
            )));
        }
        if groups.is_empty() {
            return Err(Error::InvalidInput("no groups".into()));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate group label '{l}'")));
            }
        }
        let q = groups[0].cols();
        if q == 0 {
            return Err(Error::InvalidInput("curves have no sample points".into()));
        }
        for (label, g) in labels.iter().zip(&groups) {
            if g.cols() != q {
                return Err(Error::InvalidInput(format!(
                    "group '{label}' has curves of length {}, expected {q}",
                    g.cols()
                )));
            }
            if g.rows() < 2 {
                return Err(Error::InsufficientData(format!(
                    "group '{label}' has {} curve(s); at least 2 are required",
                    g.rows()
                )));
            }
            if !g.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "group '{label}' contains non-finite values"
                )));
            }
        }
        if let Some(grid) = &grid {
            if grid.len() != q {
                return Err(Error::DimMismatch {
                    expected: q,
                    found: grid.len(),
                });
            }
        }
        Ok(CurveGroupSet {
            labels,
            groups,
            grid,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn groups(&self) -> &[Mat] {
        &self.groups
    }

    pub fn grid(&self) -> Option<&[f64]> {
        self.grid.as_deref()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Number of sample points per curve.
    pub fn dim(&self) -> usize {
        self.groups[0].cols()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Mat::rows).collect()
    }

    pub fn total_curves(&self) -> usize {
        self.groups.iter().map(Mat::rows).sum()
    }

    /// All curves stacked in group order.
    pub fn pooled(&self) -> Mat {
        let q = self.dim();
        let mut data = Vec::with_capacity(self.total_curves() * q);
        for g in &self.groups {
            data.extend_from_slice(g.as_slice());
        }
        Mat::from_vec(self.total_curves(), q, data).expect("consistent shapes")
    }
}

/// How many pooled principal directions [`basis_reduce`] keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RankPolicy {
    FixedRank(usize),
    /// Smallest rank capturing this fraction of the pooled trace.
    Energy(f64),
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::Energy(1.0 - 1e-8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisReduction {
    /// Curves expressed in the retained basis (`n_j × m` per group).
    pub reduced: CurveGroupSet,
    /// `q × m`, orthonormal columns.
    pub basis: Mat,
    /// Set when the policy asked for more directions than the pooled data
    /// support; the rank was lowered to the pooled rank.
    pub rank_capped: bool,
    pub pooled_rank: usize,
}

/// Projects every curve onto the leading eigenvectors of the pooled
/// within-group covariance, so that the pooled covariance of the reduced
/// curves is full rank.
pub fn basis_reduce(groups: &CurveGroupSet, policy: RankPolicy) -> Result<BasisReduction> {
    let q = groups.dim();
    let mut centered = Vec::with_capacity(groups.total_curves() * q);
    for g in groups.groups() {
        let means = column_means(g);
        for i in 0..g.rows() {
            centered.extend(g.row(i).iter().zip(&means).map(|(x, m)| x - m));
        }
    }
    let centered = Mat::from_vec(groups.total_curves(), q, centered)?;
    let mut pooled = centered.t_matmul(&centered);
    pooled.symmetrize();
    let eig = eig_of(&pooled)?;
    let max = eig.values[0];
    if !(max > 0.0) {
        return Err(Error::Degenerate(
            "group-centred curves are identically zero".into(),
        ));
    }
    let pooled_rank = eig
        .values
        .iter()
        .take_while(|&&l| l > PSD_REL_TOL * max)
        .count();

    let (m, rank_capped) = match policy {
        RankPolicy::FixedRank(m) => {
            if m == 0 {
                return Err(Error::InvalidInput("fixed rank must be at least 1".into()));
            }
            if m > pooled_rank {
                (pooled_rank, true)
            } else {
                (m, false)
            }
        }
        RankPolicy::Energy(tau) => {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "energy threshold {tau} outside (0, 1]"
                )));
            }
            let total: f64 = eig.values.iter().map(|l| l.max(0.0)).sum();
            let mut acc = 0.0;
            let mut m = eig.values.len();
            for (i, l) in eig.values.iter().enumerate() {
                acc += l.max(0.0);
                if acc >= tau * total {
                    m = i + 1;
                    break;
                }
            }
            (m.min(pooled_rank), false)
        }
    };

    let basis = Mat::from_fn(q, m, |i, j| eig.vectors[(i, j)]);
    let reduced_groups = groups.groups().iter().map(|g| g.matmul(&basis)).collect();
    let reduced = CurveGroupSet::new(
        groups.labels().to_vec(),
        reduced_groups,
        None,
    )?;
    Ok(BasisReduction {
        reduced,
        basis,
        rank_capped,
        pooled_rank,
    })
}

pub(crate) fn column_means(m: &Mat) -> Vec<f64> {
    let mut means = alloc::vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (acc, x) in means.iter_mut().zip(m.row(i)) {
            *acc += x;
        }
    }
    let n = m.rows() as f64;
    means.iter_mut().for_each(|x| *x /= n);
    means
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn labels(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("g{i}")).collect()
    }

    #[test]
    fn validation() {
        let g = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!(CurveGroupSet::new(labels(2), vec![g.clone(), g.clone()], None).is_ok());
        assert!(matches!(
            CurveGroupSet::new(vec!["a".to_string(), "a".to_string()], vec![g.clone(), g.clone()], None),
            Err(Error::InvalidInput(_))
        ));
        let single = Mat::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!(matches!(
            CurveGroupSet::new(labels(2), vec![g.clone(), single], None),
            Err(Error::InsufficientData(_))
        ));
        let wide = Mat::zeros(2, 3);
        assert!(CurveGroupSet::new(labels(2), vec![g.clone(), wide], None).is_err());
        assert!(CurveGroupSet::new(labels(1), vec![g], Some(vec![0.0])).is_err());
    }

    #[test]
    fn reduces_rank_two_data_exactly() {
        // q = 5, every curve lies in span{u, v}.
        let u = [1.0, 2.0, 0.0, -1.0, 0.5];
        let v = [0.0, 1.0, 1.0, 1.0, -2.0];
        let coef = [[1.0, 0.3], [-0.4, 2.0], [0.7, -1.1], [2.2, 0.1], [-1.5, -0.6], [0.2, 0.9]];
        let curve = |a: f64, b: f64| -> Vec<f64> { (0..5).map(|i| a * u[i] + b * v[i]).collect() };
        let g1 = Mat::from_rows(&coef[..3].iter().map(|c| curve(c[0], c[1])).collect::<Vec<_>>()).unwrap();
        let g2 = Mat::from_rows(&coef[3..].iter().map(|c| curve(c[0], c[1])).collect::<Vec<_>>()).unwrap();
        let set = CurveGroupSet::new(labels(2), vec![g1.clone(), g2], None).unwrap();
        let red = basis_reduce(&set, RankPolicy::FixedRank(2)).unwrap();
        assert_eq!(red.reduced.dim(), 2);
        assert_eq!(red.pooled_rank, 2);
        assert!(!red.rank_capped);
        let back = red.reduced.groups()[0].matmul_t(&red.basis);
        assert!(back.sub(&g1).max_abs() < 1e-10);

        let capped = basis_reduce(&set, RankPolicy::FixedRank(4)).unwrap();
        assert!(capped.rank_capped);
        assert_eq!(capped.reduced.dim(), 2);
    }

    #[test]
    fn full_energy_keeps_everything() {
        let g1 = Mat::from_fn(6, 3, |i, j| libm::sin((i * 3 + j) as f64 * 0.7));
        let g2 = Mat::from_fn(5, 3, |i, j| libm::cos((i * 5 + j) as f64 * 1.1));
        let set = CurveGroupSet::new(labels(2), vec![g1, g2], None).unwrap();
        let red = basis_reduce(&set, RankPolicy::Energy(1.0)).unwrap();
        assert_eq!(red.basis.cols(), 3);
        assert!(red.basis.t_matmul(&red.basis).sub(&Mat::identity(3)).max_abs() < 1e-12);
    }

    #[test]
    fn zero_centred_data_is_degenerate() {
        let g = Mat::from_rows(&[[1.0, 2.0], [1.0, 2.0]]).unwrap();
        let set = CurveGroupSet::new(labels(2), vec![g.clone(), g], None).unwrap();
        assert!(matches!(
            basis_reduce(&set, RankPolicy::default()),
            Err(Error::Degenerate(_))
        ));
    }
}
