#![allow(dead_code)]

use covtransport_core::{CovOperator, Mat, SymMatrix};
use proptest::prelude::*;

/// `A Aᵀ + ridge·I` for a random square `A` with entries in [−2, 2].
pub fn spd(q: usize, ridge: f64) -> impl Strategy<Value = CovOperator> {
    prop::collection::vec(-2.0..2.0f64, q * q).prop_map(move |v| {
        let a = Mat::from_vec(q, q, v).unwrap();
        let mut s = a.matmul_t(&a);
        s.add_diag(ridge);
        CovOperator::new(s).unwrap()
    })
}

/// Random PSD matrix of rank at most `rank`.
pub fn low_rank_psd(q: usize, rank: usize) -> impl Strategy<Value = CovOperator> {
    prop::collection::vec(-2.0..2.0f64, q * rank).prop_map(move |v| {
        let a = Mat::from_vec(q, rank, v).unwrap();
        CovOperator::new(a.matmul_t(&a)).unwrap()
    })
}

pub fn symmetric(q: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-3.0..3.0f64, q * q)
        .prop_map(move |v| SymMatrix::symmetric_part(Mat::from_vec(q, q, v).unwrap()))
}

pub fn rel_diff(a: &Mat, b: &Mat) -> f64 {
    a.sub(b).frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}
