//! True channel generation, subspace extraction and the quantization-error
//! decomposition `H~ = H^ X Y + S Z`.

use log::warn;

use crate::error::{Error, Result};
use crate::numerics::{
    gaussian_matrix, herm_evd, identity, qr_positive, qr_positive_avoiding, semi_unitary_error,
    tol, CMatrix, RankPolicy, SeedStream,
};

/// One user's `M x N` channel together with its `N`-dimensional subspace and
/// the matching (unordered) nonzero eigenvalues of `H H^H`.
#[derive(Debug, Clone)]
pub struct UserChannel {
    pub h: CMatrix,
    pub h_sub: CMatrix,
    pub eigvals: Vec<f64>,
}

impl UserChannel {
    /// Extract the subspace of an arbitrary `M x N` channel matrix.
    pub fn from_matrix(h: CMatrix) -> Result<Self> {
        let (m, n) = h.shape();
        if m < n || n == 0 {
            return Err(Error::config(format!("channel must be tall, got {m}x{n}")));
        }
        let evd = herm_evd(&(&h * h.adjoint()))?;
        // keep the N dominant eigenpairs, in the order the solver produced them
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| evd.values[b].total_cmp(&evd.values[a]));
        let mut keep = order[..n].to_vec();
        keep.sort_unstable();
        let h_sub = evd.vectors.select_columns(&keep);
        let eigvals = keep.iter().map(|&i| evd.values[i]).collect();
        Ok(Self { h, h_sub, eigvals })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.h.shape()
    }
}

/// Draw an `M x N` channel with i.i.d. unit-variance complex Gaussian entries.
pub fn gen_channel(m: usize, n: usize, stream: SeedStream) -> Result<UserChannel> {
    if m < n || n == 0 {
        return Err(Error::config(format!(
            "gen_channel requires M >= N >= 1, got M={m}, N={n}"
        )));
    }
    let mut rng = stream.rng();
    UserChannel::from_matrix(gaussian_matrix(&mut rng, m, n, 1.0))
}

/// Components of `H~ = H^ X Y + S Z`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Unitary `N x N`.
    pub x: CMatrix,
    /// Upper-triangular `N x N`, non-negative real diagonal.
    pub y: CMatrix,
    /// Semi-unitary `M x N` basis inside the left nullspace of `H^`.
    pub s: CMatrix,
    /// Upper-triangular `N x N`, non-negative real diagonal.
    pub z: CMatrix,
}

impl Decomposition {
    pub fn reconstruct(&self, h_hat: &CMatrix) -> CMatrix {
        h_hat * &self.x * &self.y + &self.s * &self.z
    }

    /// `tr(Z^H Z)`, equal to the chordal distance between `H~` and `H^`.
    pub fn distortion(&self) -> f64 {
        self.z.iter().map(|z| z.norm_sqr()).sum()
    }
}

pub(crate) fn require_semi_unitary(q: &CMatrix, what: &str) -> Result<()> {
    let err = semi_unitary_error(q);
    if q.nrows() < q.ncols() || err > tol::SEMI_UNITARY {
        return Err(Error::validation(format!(
            "{what} must be semi-unitary (max |Q^H Q - I| = {err:.3e})"
        )));
    }
    Ok(())
}

/// Project `h_sub` onto the column space and the left nullspace of `h_hat`
/// and QR-factor each part.
///
/// Degenerate projections (a residual column below the rank tolerance) are
/// completed with an arbitrary orthonormal direction and a zero diagonal in
/// the triangular factor. Completions of `S` stay orthogonal to `h_hat`.
pub fn decompose(h_sub: &CMatrix, h_hat: &CMatrix) -> Result<Decomposition> {
    if h_sub.shape() != h_hat.shape() {
        return Err(Error::validation(format!(
            "decompose shape mismatch: {:?} vs {:?}",
            h_sub.shape(),
            h_hat.shape()
        )));
    }
    require_semi_unitary(h_sub, "channel subspace")?;
    require_semi_unitary(h_hat, "quantized subspace")?;
    let m = h_hat.nrows();

    // H^ H^^H H~ = H^ (H^^H H~) and H^ is semi-unitary, so QR of the inner
    // N x N coefficient gives the in-span factors directly.
    let inner = h_hat.adjoint() * h_sub;
    let xy = qr_positive(&inner, RankPolicy::Tolerate)?;

    let residual = (identity(m) - h_hat * h_hat.adjoint()) * h_sub;
    let sz = qr_positive_avoiding(&residual, Some(h_hat), RankPolicy::Tolerate)?;

    Ok(Decomposition {
        x: xy.q,
        y: xy.r,
        s: sz.q,
        z: sz.r,
    })
}

/// How out-of-range distortion values are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaPolicy {
    #[default]
    Strict,
    /// Clamp into `[0, (M - N)/M - margin]` and log a warning.
    Clamp,
}

/// Validate a per-column distortion `gamma` against `[0, (M - N)/M]`.
pub fn check_gamma(m: usize, n: usize, gamma: f64, policy: GammaPolicy) -> Result<f64> {
    if !gamma.is_finite() {
        return Err(Error::domain(format!("gamma must be finite, got {gamma}")));
    }
    let upper = (m as f64 - n as f64) / m as f64;
    if (0.0..=upper).contains(&gamma) && (m > n || gamma == 0.0) {
        return Ok(gamma);
    }
    match policy {
        GammaPolicy::Strict => Err(Error::domain(format!(
            "gamma = {gamma} outside [0, {upper}] for M={m}, N={n}"
        ))),
        GammaPolicy::Clamp => {
            let clamped = gamma.clamp(0.0, (upper - tol::GAMMA_CLAMP_MARGIN).max(0.0));
            warn!("clamping gamma {gamma} to {clamped} (M={m}, N={n})");
            Ok(clamped)
        }
    }
}

/// Mean coefficients of the model `H ≈ delta * H^ + eta * O`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustCoefficients {
    pub delta: f64,
    pub eta: f64,
}

impl RobustCoefficients {
    pub fn new(m: usize, n: usize, gamma: f64, policy: GammaPolicy) -> Result<Self> {
        let gamma = check_gamma(m, n, gamma, policy)?;
        let mf = m as f64;
        let spill = if gamma == 0.0 {
            0.0
        } else {
            mf * mf * gamma / (mf - n as f64)
        };
        Ok(Self {
            delta: (mf - spill).max(0.0).sqrt(),
            eta: spill.sqrt(),
        })
    }
}

/// Draw a channel from the approximate model `delta * H^ + eta * O` with
/// `O` i.i.d. `CN(0, 1/M)`.
pub fn synth_channel(
    h_hat: &CMatrix,
    gamma: f64,
    stream: SeedStream,
    policy: GammaPolicy,
) -> Result<CMatrix> {
    let (m, n) = h_hat.shape();
    let c = RobustCoefficients::new(m, n, gamma, policy)?;
    let mut rng = stream.rng();
    let o = gaussian_matrix(&mut rng, m, n, 1.0 / m as f64);
    Ok(h_hat.scale(c.delta) + o.scale(c.eta))
}
