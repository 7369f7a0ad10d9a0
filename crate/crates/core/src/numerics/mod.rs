//! Dense complex linear algebra, special functions and seeded random streams.
//!
//! All matrices are [`CMatrix`] = `nalgebra::DMatrix<Complex64>`, which stores
//! entries in **column-major** order. Every module in the crate builds on this
//! one type; nothing transposes storage behind the caller's back.

mod linalg;
mod reduce;
mod rng;
mod special;
pub mod tol;

pub use linalg::{
    assert_finite, complete_orthonormal, frobenius, herm_evd, hermitian_deviation, identity,
    is_semi_unitary, log_det_hpd, qr_positive, qr_positive_avoiding, semi_unitary_error, solve_hpd,
    trace, zeros, HermEvd, Qr, RankPolicy,
};
pub use reduce::{pairwise_sum, pairwise_sum_by};
pub use rng::{complex_gaussian, gaussian_matrix, SeedStream};
pub use special::{gamma_fn, ln_factorial};

pub use num_complex::Complex64;

/// Dense complex matrix, column-major.
pub type CMatrix = nalgebra::DMatrix<Complex64>;

/// Dense complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;
