//! Repo-wide numerical tolerances. Change them here and nowhere else.

/// Max-abs deviation of `A - A^H` accepted as Hermitian.
pub const HERMITIAN: f64 = 1e-10;

/// Max-abs deviation of `Q^H Q - I` accepted as semi-unitary.
pub const SEMI_UNITARY: f64 = 1e-10;

/// Relative Frobenius error allowed in an eigendecomposition reconstruction.
pub const EVD_RECONSTRUCTION: f64 = 1e-9;

/// Residual column norm under which a QR column counts as degenerate.
pub const RANK: f64 = 1e-12;

/// Smallest admissible `lambda_min / lambda_max` for an HPD solve.
pub const HPD_RECIPROCAL_CONDITION: f64 = 1e-12;

/// Eigenvalue floor applied before inverting an MSE matrix.
pub const MSE_EIGEN_FLOOR: f64 = 1e-12;

/// Gap kept between a clamped distortion and its upper limit `(M - N) / M`.
pub const GAMMA_CLAMP_MARGIN: f64 = 1e-9;

/// Relative tolerance on the transmit power constraint `tr(P P^H) = rho`.
pub const POWER: f64 = 1e-9;
