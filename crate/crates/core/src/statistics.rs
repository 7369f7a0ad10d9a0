//! Second-order statistics of quantized channels and Monte Carlo checks of
//! the expectation identities the robust precoders rely on.

use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::channel::{check_gamma, decompose, gen_channel, require_semi_unitary, GammaPolicy};
use crate::error::{Error, Result};
use crate::numerics::{
    complex_gaussian, frobenius, gaussian_matrix, identity, pairwise_sum, pairwise_sum_by,
    qr_positive, qr_positive_avoiding, CMatrix, Complex64, RankPolicy, SeedStream,
};
use crate::quantize::quantize_rvq;

/// `R^o = M (1 - M gamma / (M - N)) H^ H^^H + (M N gamma / (M - N)) I_M`.
#[derive(Debug, Clone)]
pub struct SecondOrder {
    pub r: CMatrix,
    pub gamma: f64,
    pub m: usize,
    pub n: usize,
}

pub fn second_order(h_hat: &CMatrix, gamma: f64, policy: GammaPolicy) -> Result<SecondOrder> {
    require_semi_unitary(h_hat, "quantized subspace")?;
    let (m, n) = h_hat.shape();
    let gamma = check_gamma(m, n, gamma, policy)?;
    let (mf, nf) = (m as f64, n as f64);
    let (in_span, floor) = if gamma == 0.0 {
        (mf, 0.0)
    } else {
        (
            mf * (1.0 - mf * gamma / (mf - nf)),
            mf * nf * gamma / (mf - nf),
        )
    };
    let mut r = (h_hat * h_hat.adjoint()).scale(in_span);
    for i in 0..m {
        r[(i, i)] += floor;
    }
    Ok(SecondOrder { r, gamma, m, n })
}

/// Where the quantized subspace of each draw comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackSource {
    /// Fresh `B`-bit RVQ codebook per user and trial.
    Rvq(u32),
    /// The codebook contains the channel subspace itself (infinite-rate
    /// proxy), fed back in a uniformly random basis.
    Exact,
}

/// Result of comparing the empirical conditional covariance with `R^o`.
#[derive(Debug, Clone)]
pub struct GapReport {
    pub m: usize,
    pub n: usize,
    pub trials: usize,
    /// `||R_emp - R^o(E, gamma_hat)||_F / ||R_emp||_F`.
    pub gap: f64,
    /// Empirical per-column distortion used for `R^o`.
    pub gamma_hat: f64,
    /// Empirical covariance in the canonical frame.
    pub r_emp: CMatrix,
    /// `||E_perp^H R_emp E||_F / ||R_emp||_F`.
    pub cross_ratio: f64,
    /// Mean squared z-score of the cross-block entries (1 when the block is pure noise).
    pub cross_chi2_per_dof: f64,
    pub cross_dof: usize,
    /// Mean singular value of `Z Y^H` and its standard error.
    pub omega_mean: f64,
    pub omega_stderr: f64,
}

impl GapReport {
    /// `sqrt(gamma (1 - gamma))` evaluated at the empirical distortion.
    pub fn omega_bound(&self) -> f64 {
        (self.gamma_hat * (1.0 - self.gamma_hat)).sqrt()
    }

    /// Cross block consistent with zero: chi-square per degree of freedom
    /// within three of its standard deviations of 1.
    pub fn cross_block_vanishes(&self) -> bool {
        self.cross_chi2_per_dof <= 1.0 + 3.0 * (2.0 / self.cross_dof as f64).sqrt()
    }
}

const PARTS: [fn(Complex64) -> f64; 2] = [|z| z.re, |z| z.im];

struct GapTrial {
    rotated: CMatrix,
    d2: f64,
    omega: f64,
}

/// Unitary `Q` with `Q H^ = E` (first `N` columns of the identity).
fn canonical_rotation(h_hat: &CMatrix) -> Result<CMatrix> {
    let (m, n) = h_hat.shape();
    let complement =
        qr_positive_avoiding(&CMatrix::zeros(m, m - n), Some(h_hat), RankPolicy::Tolerate)?.q;
    let mut u = CMatrix::zeros(m, m);
    u.columns_mut(0, n).copy_from(h_hat);
    u.columns_mut(n, m - n).copy_from(&complement);
    Ok(u.adjoint())
}

/// Normalized Frobenius gap between the empirical conditional covariance
/// `E[H H^H | H^]` and `R^o`.
///
/// Each draw is rotated by the unitary mapping its quantized subspace to the
/// canonical `E`; the statistics are rotation invariant, so averaging in that
/// frame estimates the conditional covariance without binning by codeword.
pub fn gap_vs_empirical(
    m: usize,
    n: usize,
    k: usize,
    source: FeedbackSource,
    trials: usize,
    stream: SeedStream,
) -> Result<GapReport> {
    if trials < 100 {
        return Err(Error::config(format!(
            "gap_vs_empirical needs at least 100 trials, got {trials}"
        )));
    }
    if m <= n || k == 0 {
        return Err(Error::config(format!(
            "gap_vs_empirical needs M > N and K >= 1, got M={m}, N={n}, K={k}"
        )));
    }
    let samples: Vec<GapTrial> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rotated = CMatrix::zeros(m, m);
            let mut d2 = 0.0;
            let mut omega = 0.0;
            for u in 0..k {
                let ch = gen_channel(m, n, stream.child(&[t as u64, u as u64, 0]))?;
                let h_hat = match source {
                    FeedbackSource::Rvq(bits) => {
                        quantize_rvq(&ch.h_sub, bits, stream.child(&[t as u64, u as u64, 1]))?.h_hat
                    }
                    FeedbackSource::Exact => {
                        let mut rng = stream.child(&[t as u64, u as u64, 1]).rng();
                        let basis = qr_positive(
                            &gaussian_matrix(&mut rng, n, n, 1.0),
                            RankPolicy::Tolerate,
                        )?
                        .q;
                        &ch.h_sub * basis
                    }
                };
                let q = canonical_rotation(&h_hat)?;
                let qh = &q * &ch.h;
                rotated += &qh * qh.adjoint();
                let dec = decompose(&ch.h_sub, &h_hat)?;
                d2 += dec.distortion();
                let zy = &dec.z * dec.y.adjoint();
                omega += zy.singular_values().sum() / n as f64;
            }
            Ok(GapTrial {
                rotated: rotated.unscale(k as f64),
                d2: d2 / k as f64,
                omega: omega / k as f64,
            })
        })
        .collect::<Result<_>>()?;

    let tf = trials as f64;
    let mats: Vec<CMatrix> = samples.iter().map(|s| s.rotated.clone()).collect();
    let r_emp = pairwise_sum_by(&mats, CMatrix::zeros(m, m), |a, b| a + b).unscale(tf);
    let d2s: Vec<f64> = samples.iter().map(|s| s.d2).collect();
    let gamma_hat = (pairwise_sum(&d2s) / tf / n as f64).clamp(0.0, (m - n) as f64 / m as f64);

    let mut e = CMatrix::zeros(m, n);
    for i in 0..n {
        e[(i, i)] = Complex64::new(1.0, 0.0);
    }
    let r_o = second_order(&e, gamma_hat, GammaPolicy::Clamp)?.r;
    let norm = frobenius(&r_emp);
    let gap = frobenius(&(&r_emp - &r_o)) / norm;

    // cross block E_perp^H R E: rows n.., cols ..n
    let cross = r_emp.view((n, 0), (m - n, n)).into_owned();
    let mut chi2 = 0.0;
    let mut dof = 0;
    for j in 0..n {
        for i in n..m {
            for part in PARTS {
                let xs: Vec<f64> = mats.iter().map(|s| part(s[(i, j)])).collect();
                let (mean, se) = mean_and_stderr(&xs);
                if se > 0.0 {
                    chi2 += (mean / se).powi(2);
                    dof += 1;
                }
            }
        }
    }

    let omegas: Vec<f64> = samples.iter().map(|s| s.omega).collect();
    let (omega_mean, omega_stderr) = mean_and_stderr(&omegas);

    Ok(GapReport {
        m,
        n,
        trials,
        gap,
        gamma_hat,
        cross_ratio: frobenius(&cross) / norm,
        cross_chi2_per_dof: if dof > 0 { chi2 / dof as f64 } else { 0.0 },
        cross_dof: dof,
        r_emp,
        omega_mean,
        omega_stderr,
    })
}

pub(crate) fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let t = xs.len() as f64;
    let mean = pairwise_sum(xs) / t;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    (mean, (pairwise_sum(&dev) / (t - 1.0) / t).sqrt())
}

/// Monte Carlo check of a matrix expectation identity.
#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub name: String,
    pub trials: usize,
    pub target: CMatrix,
    /// Sample means of each side being compared with `target`.
    pub sides: Vec<CMatrix>,
    /// Largest `|mean - target| / stderr` over entries, real and imaginary parts.
    pub max_z: f64,
    /// Family-wise threshold on `max_z`.
    pub threshold: f64,
    pub pass: bool,
}

impl IdentityReport {
    pub const CSV_HEADER: &'static str = "identity,trials,max_z,threshold,pass";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{}",
            self.name, self.trials, self.max_z, self.threshold, self.pass
        )
    }
}

/// Two-sided per-entry z threshold whose family-wise false-alarm rate over
/// `tests` independent entries equals that of a single `3 sigma` test
/// (Sidak correction).
pub fn family_z_threshold(tests: usize) -> f64 {
    let unit = Normal::new(0.0, 1.0).expect("standard normal");
    if tests <= 1 {
        return 3.0;
    }
    let alpha = 2.0 * unit.cdf(-3.0);
    let per_test = 1.0 - (1.0 - alpha).powf(1.0 / tests as f64);
    -unit.inverse_cdf(per_test / 2.0)
}

/// Sample mean per entry, the largest z-score and how many entries were scored.
fn entry_z(draws: &[CMatrix], target: &CMatrix) -> (CMatrix, f64, usize) {
    let (r, c) = target.shape();
    let t = draws.len() as f64;
    let mean = pairwise_sum_by(draws, CMatrix::zeros(r, c), |a, b| a + b).unscale(t);
    let mut max_z: f64 = 0.0;
    let mut tests = 0;
    for j in 0..c {
        for i in 0..r {
            for part in PARTS {
                let xs: Vec<f64> = draws.iter().map(|d| part(d[(i, j)])).collect();
                let (m, se) = mean_and_stderr(&xs);
                let diff = (m - part(target[(i, j)])).abs();
                let z = if se > 0.0 {
                    tests += 1;
                    diff / se
                } else if diff <= 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                };
                max_z = max_z.max(z);
            }
        }
    }
    (mean, max_z, tests)
}

/// For Haar-unitary `X` and independent `Y` with `E[Y Y^H] = diag(lambda)`,
/// both `E[Y^H X^H X Y]` and `E[X Y Y^H X^H]` equal `(sum(lambda) / N) I`.
///
/// `Y` has independent entries with row `n` of variance `lambda_n / N`.
pub fn verify_lemma2(lambda: &[f64], trials: usize, stream: SeedStream) -> Result<IdentityReport> {
    let n = lambda.len();
    if n == 0 || lambda.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::config(
            "lambda must be a non-empty, non-negative vector",
        ));
    }
    if trials < 10_000 {
        return Err(Error::config(format!(
            "verify_lemma2 needs at least 10^4 trials, got {trials}"
        )));
    }
    let draws: Vec<(CMatrix, CMatrix)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream.child(&[t as u64]).rng();
            let x = qr_positive(&gaussian_matrix(&mut rng, n, n, 1.0), RankPolicy::Tolerate)
                .expect("tolerant QR")
                .q;
            let y = CMatrix::from_fn(n, n, |i, _| {
                complex_gaussian(&mut rng, lambda[i] / n as f64)
            });
            let xy = &x * &y;
            (xy.adjoint() * &xy, &xy * xy.adjoint())
        })
        .collect();
    let target = identity(n).scale(lambda.iter().sum::<f64>() / n as f64);
    let lhs: Vec<CMatrix> = draws.iter().map(|d| d.0.clone()).collect();
    let rhs: Vec<CMatrix> = draws.iter().map(|d| d.1.clone()).collect();
    let (lm, lz, lt) = entry_z(&lhs, &target);
    let (rm, rz, rt) = entry_z(&rhs, &target);
    let max_z = lz.max(rz);
    let threshold = family_z_threshold(lt + rt);
    Ok(IdentityReport {
        name: format!("lemma2_n{n}"),
        trials,
        target,
        sides: vec![lm, rm],
        max_z,
        threshold,
        pass: max_z <= threshold,
    })
}

/// Closed form `diag(Theta diag^{-1}(X))` of `E[Y^H X Y]` for `Y` with
/// independent zero-mean entries of variance `Theta[(n, m)]`.
pub fn lemma4_closed_form(x: &CMatrix, theta: &DMatrix<f64>) -> CMatrix {
    let n = theta.nrows();
    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = (0..x.nrows()).map(|j| x[(j, j)] * theta[(i, j)]).sum();
    }
    out
}

pub fn verify_lemma4(
    x: &CMatrix,
    theta: &DMatrix<f64>,
    trials: usize,
    stream: SeedStream,
) -> Result<IdentityReport> {
    let m = x.nrows();
    let n = theta.nrows();
    if x.ncols() != m || theta.ncols() != m {
        return Err(Error::config(format!(
            "X must be M x M and Theta N x M, got X {:?}, Theta {:?}",
            x.shape(),
            theta.shape()
        )));
    }
    if theta.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::config("Theta must be non-negative"));
    }
    if trials < 10_000 {
        return Err(Error::config(format!(
            "verify_lemma4 needs at least 10^4 trials, got {trials}"
        )));
    }
    let draws: Vec<CMatrix> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream.child(&[t as u64]).rng();
            let y = CMatrix::from_fn(m, n, |r, c| complex_gaussian(&mut rng, theta[(c, r)]));
            y.adjoint() * x * &y
        })
        .collect();
    let target = lemma4_closed_form(x, theta);
    let (mean, max_z, tests) = entry_z(&draws, &target);
    let threshold = family_z_threshold(tests);
    Ok(IdentityReport {
        name: format!("lemma4_m{m}_n{n}"),
        trials,
        target,
        sides: vec![mean],
        max_z,
        threshold,
        pass: max_z <= threshold,
    })
}
