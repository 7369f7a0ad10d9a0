//! Achievable rates on true channels, closed-form MMSE rate bounds and flop
//! counts.

use crate::error::{Error, Result};
use crate::numerics::{log_det_hpd, CMatrix};
use crate::precoders::PrecoderOutput;

/// One cell of an experiment: mean sum rate of a scheme at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRecord {
    pub scheme: String,
    pub snr_db: f64,
    pub b: u32,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub sum_rate_mean: f64,
    pub sum_rate_stderr: f64,
    pub seed: u64,
}

fn gram_plus_noise(g: &CMatrix, sigma2: f64) -> CMatrix {
    let mut a = g * g.adjoint();
    for i in 0..a.nrows() {
        a[(i, i)] += sigma2;
    }
    a
}

/// Rate of user `k` in bits/s/Hz, treating interference as noise:
/// `log2 det(A_all + s I) - log2 det(A_int + s I)` with `A = H_k^H P P^H H_k`
/// restricted to all or to the other users' streams.
pub fn user_rate(h_k: &CMatrix, out: &PrecoderOutput, k: usize, sigma2: f64) -> Result<f64> {
    let users = out.users();
    if k >= users {
        return Err(Error::validation(format!(
            "user index {k} out of range for {users} users"
        )));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::validation(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    if h_k.nrows() != out.p.nrows() {
        return Err(Error::validation(format!(
            "channel has {} rows, precoder has {}",
            h_k.nrows(),
            out.p.nrows()
        )));
    }
    let n = out.streams;
    let g_all = h_k.adjoint() * &out.p;
    let mut g_int = CMatrix::zeros(h_k.ncols(), n * (users - 1));
    for (slot, j) in (0..users).filter(|&j| j != k).enumerate() {
        g_int
            .columns_mut(slot * n, n)
            .copy_from(&g_all.columns(j * n, n));
    }
    let total = log_det_hpd(&gram_plus_noise(&g_all, sigma2))?;
    let interference = log_det_hpd(&gram_plus_noise(&g_int, sigma2))?;
    Ok(((total - interference) / std::f64::consts::LN_2).max(0.0))
}

/// Sum over users of [`user_rate`], with `channels[k]` the true `M x N` channel.
pub fn sum_rate(channels: &[CMatrix], out: &PrecoderOutput, sigma2: f64) -> Result<f64> {
    if channels.len() != out.users() {
        return Err(Error::validation(format!(
            "{} channels for {} precoder blocks",
            channels.len(),
            out.users()
        )));
    }
    channels
        .iter()
        .enumerate()
        .map(|(k, h)| user_rate(h, out, k, sigma2))
        .sum()
}

/// Low-SNR per-user MMSE rate approximation:
/// `N log2(1 + rho K (1 - gamma) / (rho K - rho + K))`.
pub fn bound_low(rho: f64, k: usize, n: usize, gamma: f64) -> f64 {
    let (kf, nf) = (k as f64, n as f64);
    nf * (1.0 + rho * kf * (1.0 - gamma) / (rho * kf - rho + kf)).log2()
}

/// High-SNR per-user MMSE rate approximation:
/// `N log2(1 + rho / (K + rho K gamma))`.
pub fn bound_high(rho: f64, k: usize, n: usize, gamma: f64) -> f64 {
    let (kf, nf) = (k as f64, n as f64);
    nf * (1.0 + rho / (kf + rho * kf * gamma)).log2()
}

/// Limit of [`bound_high`] as `rho -> inf`.
pub fn saturation_rate(k: usize, n: usize, gamma: f64) -> f64 {
    n as f64 * (1.0 + 1.0 / (k as f64 * gamma)).log2()
}

/// Flops of one robust MMSE precoder evaluation.
pub fn flops_rmmse(m: usize, n: usize, k: usize) -> f64 {
    let (m, n, k) = (m as f64, n as f64, k as f64);
    m.powi(3)
        + m * m * (2.0 * n * k + 0.5 * k + 1.0)
        + m * (3.0 * n * n * k + 3.0 * n * k - 0.5 * k + 3.0)
        - 2.0 / 3.0 * k * (n.powi(3) + 1.0)
}

/// Flops of one robust WMMSE iteration, split by block update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationFlops {
    pub filter: f64,
    pub weights: f64,
    pub precoder: f64,
}

impl IterationFlops {
    pub fn total(&self) -> f64 {
        self.filter + self.weights + self.precoder
    }
}

pub fn flops_rwmmse_iter(m: usize, n: usize, k: usize) -> IterationFlops {
    let (m, n, k) = (m as f64, n as f64, k as f64);
    let nk = n * k;
    IterationFlops {
        filter: nk * (2.0 * m * m + 5.0 * m * n + 2.0 * m + 3.0 * n * n - 2.5 * n + 1.5),
        weights: nk * (5.0 * n * n - n + 2.0),
        precoder: m.powi(3)
            + 4.0 * m * m * nk
            + 5.0 * m * nk * nk
            + m * nk
            + 3.0 * m
            + 4.0 * nk.powi(3)
            - 2.5 * nk * nk
            + 1.5 * nk
            - 2.0,
    }
}
