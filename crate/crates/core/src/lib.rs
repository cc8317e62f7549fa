#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![warn(missing_debug_implementations)]

//! Optimal-transport analysis of covariance operators.
//!
//! Covariances of K groups of curves are compared through the optimal
//! transport maps of the corresponding centred Gaussian measures. The maps
//! are taken from the Fréchet mean of the covariances under the
//! Bures–Wasserstein (Procrustes) metric; their deviations from the identity
//! drive a permutation test of equality, and, on the tangent space at the
//! mean, a principal component analysis of the covariances.
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the
//! command-line tool live in the `covtransport` crate.
//!
//! # Features
//! - `std`: implements `std::error::Error` through `thiserror`.
//! - `parallel`: evaluates permutation replicates on the rayon pool. Results
//!   are bit-identical to sequential evaluation.
//! - `serde`: `Serialize`/`Deserialize` for configuration and result types.

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod anova;
pub mod curves;
mod error;
pub mod linalg;
pub mod simgen;
pub mod spd;
pub mod tangent;
pub mod transport;

pub use crate::anova::{
    baseline_sqrt_test, empirical_covariance, permutation_test, test_statistic, AnovaConfig,
    AnovaResult, Centering, Combine, Denominator,
};
pub use crate::curves::{basis_reduce, BasisReduction, CurveGroupSet, RankPolicy};
pub use crate::error::{Error, Result};
pub use crate::linalg::Mat;
pub use crate::spd::{
    norm, pinv_sqrt, sqrt_psd, sym_eig, CovOperator, EigDecomp, NormKind, SymMatrix,
    PSD_REL_TOL,
};
pub use crate::tangent::{
    admissible_range, geodesic_retract, principal_mode_samples, sigma_inner, tangent_pca, TangentPcaResult,
};
pub use crate::transport::{
    bw_distance, frechet_mean, optimal_map, transport_deviations, DescentConfig, InitStrategy,
    TransportResult,
};

/// Maps `f` over `items`, on the rayon pool when the `parallel` feature is
/// enabled. Output order always matches input order.
#[cfg(feature = "parallel")]
pub(crate) fn ordered_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> alloc::vec::Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn ordered_map<T, U>(items: &[T], f: impl Fn(&T) -> U) -> alloc::vec::Vec<U> {
    items.iter().map(f).collect()
}

/// Deterministic RNG for draw `stream` under `seed`: a ChaCha8 generator
/// keyed by the seed, positioned on its own stream. Distinct streams never
/// overlap, so replicates can be evaluated in any order.
pub fn stream_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
