//! Random vector quantization (RVQ) of channel subspaces on the Grassmannian.

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{gen_channel, require_semi_unitary};
use crate::error::{Error, Result};
use crate::numerics::{
    gamma_fn, gaussian_matrix, ln_factorial, pairwise_sum, qr_positive, CMatrix, RankPolicy,
    SeedStream,
};

/// Largest codebook size accepted, in bits.
pub const MAX_BITS: u32 = 24;

#[derive(Debug, Clone)]
pub struct Codebook {
    pub m: usize,
    pub n: usize,
    pub bits: u32,
    pub words: Vec<CMatrix>,
    pub seed: SeedStream,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Feedback seen by the transmitter for one user.
#[derive(Debug, Clone)]
pub struct QuantizedCsi {
    pub index: usize,
    pub h_hat: CMatrix,
    /// Chordal distance between the channel subspace and the chosen word.
    pub d2: f64,
}

fn check_bits(bits: u32) -> Result<()> {
    if bits > MAX_BITS {
        return Err(Error::config(format!(
            "feedback bits {bits} exceed the guard of {MAX_BITS}"
        )));
    }
    Ok(())
}

/// Semi-unitary factor of an i.i.d. complex Gaussian `M x N` draw.
pub fn draw_codeword<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize) -> CMatrix {
    let g = gaussian_matrix(rng, m, n, 1.0);
    match qr_positive(&g, RankPolicy::Strict) {
        Ok(qr) => qr.q,
        // probability-zero event; keep the word semi-unitary anyway
        Err(_) => {
            qr_positive(&g, RankPolicy::Tolerate)
                .expect("tolerant QR cannot fail")
                .q
        }
    }
}

pub fn gen_rvq(m: usize, n: usize, bits: u32, stream: SeedStream) -> Result<Codebook> {
    check_bits(bits)?;
    if m < n || n == 0 {
        return Err(Error::config(format!(
            "codebook requires M >= N >= 1, got M={m}, N={n}"
        )));
    }
    let mut rng = stream.rng();
    let words = (0..1usize << bits)
        .map(|_| draw_codeword(&mut rng, m, n))
        .collect();
    Ok(Codebook {
        m,
        n,
        bits,
        words,
        seed: stream,
    })
}

/// `N - ||A^H C||_F^2` without input validation; `a_adj` is `A^H`.
fn chordal_from_adjoint(a_adj: &CMatrix, c: &CMatrix) -> f64 {
    let n = c.ncols() as f64;
    let overlap: f64 = (a_adj * c).iter().map(|z| z.norm_sqr()).sum();
    (n - overlap).clamp(0.0, n)
}

/// Chordal distance `N - tr(A^H C C^H A)` between two semi-unitary matrices.
pub fn chordal_d2(a: &CMatrix, c: &CMatrix) -> Result<f64> {
    if a.shape() != c.shape() {
        return Err(Error::validation(format!(
            "shape mismatch {:?} vs {:?}",
            a.shape(),
            c.shape()
        )));
    }
    require_semi_unitary(a, "chordal_d2 lhs")?;
    require_semi_unitary(c, "chordal_d2 rhs")?;
    Ok(chordal_from_adjoint(&a.adjoint(), c))
}

/// Minimum-chordal-distance search; ties go to the lowest index.
pub fn quantize(h_sub: &CMatrix, cb: &Codebook) -> Result<QuantizedCsi> {
    if h_sub.shape() != (cb.m, cb.n) {
        return Err(Error::validation(format!(
            "channel is {:?} but codebook words are {}x{}",
            h_sub.shape(),
            cb.m,
            cb.n
        )));
    }
    require_semi_unitary(h_sub, "channel subspace")?;
    let adj = h_sub.adjoint();
    let mut best = (0usize, f64::INFINITY);
    for (i, w) in cb.words.iter().enumerate() {
        let d = chordal_from_adjoint(&adj, w);
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(QuantizedCsi {
        index: best.0,
        h_hat: cb.words[best.0].clone(),
        d2: best.1,
    })
}

/// Quantize against a fresh RVQ codebook drawn from `stream` without
/// materializing it. Returns exactly what `quantize(h_sub, &gen_rvq(..))` would.
pub fn quantize_rvq(h_sub: &CMatrix, bits: u32, stream: SeedStream) -> Result<QuantizedCsi> {
    check_bits(bits)?;
    require_semi_unitary(h_sub, "channel subspace")?;
    let (m, n) = h_sub.shape();
    let adj = h_sub.adjoint();
    let mut rng = stream.rng();
    let mut best: Option<QuantizedCsi> = None;
    for i in 0..1usize << bits {
        let w = draw_codeword(&mut rng, m, n);
        let d = chordal_from_adjoint(&adj, &w);
        if best.as_ref().is_none_or(|b| d < b.d2) {
            best = Some(QuantizedCsi {
                index: i,
                h_hat: w,
                d2: d,
            });
        }
    }
    Ok(best.expect("codebook has at least one word"))
}

/// Monte Carlo estimate of the total distortion `xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionEstimate {
    pub xi: f64,
    pub stderr: f64,
    /// Per-column distortion `xi / N`.
    pub gamma: f64,
    pub trials: usize,
}

/// Average minimum chordal distance over fresh channels and fresh per-user
/// RVQ codebooks. Each trial contributes the mean over its `K` users.
pub fn distortion_empirical(
    m: usize,
    n: usize,
    k: usize,
    bits: u32,
    trials: usize,
    stream: SeedStream,
) -> Result<DistortionEstimate> {
    if trials == 0 || k == 0 {
        return Err(Error::config(
            "distortion_empirical needs trials >= 1 and K >= 1",
        ));
    }
    check_bits(bits)?;
    let per_trial: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut acc = 0.0;
            for u in 0..k {
                let ch = gen_channel(m, n, stream.child(&[t as u64, u as u64, 0]))?;
                let q = quantize_rvq(&ch.h_sub, bits, stream.child(&[t as u64, u as u64, 1]))?;
                acc += q.d2;
            }
            Ok(acc / k as f64)
        })
        .collect::<Result<_>>()?;
    Ok(summarize(&per_trial, n))
}

fn summarize(samples: &[f64], n: usize) -> DistortionEstimate {
    let t = samples.len() as f64;
    let mean = pairwise_sum(samples) / t;
    let dev: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
    let var = if samples.len() > 1 {
        pairwise_sum(&dev) / (t - 1.0)
    } else {
        0.0
    };
    DistortionEstimate {
        xi: mean,
        stderr: (var / t).sqrt(),
        gamma: mean / n as f64,
        trials: samples.len(),
    }
}

/// High-resolution RVQ distortion approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormDistortion {
    pub xi: f64,
    pub gamma: f64,
    /// Exponent `T = N^2 (K - 1)`.
    pub t: u64,
    /// `ln C` with `C = (1/T!) prod_{i=1}^{N} (M-i)! / (N-i)!`.
    pub ln_c: f64,
}

/// `xi_bar = Gamma(1/T)/T * C^(-1/T) * 2^(-B/T)`.
pub fn distortion_closed(m: usize, n: usize, k: usize, bits: u32) -> Result<ClosedFormDistortion> {
    if k < 2 {
        return Err(Error::domain(format!(
            "closed-form distortion needs K >= 2 (T = 0 for K = {k})"
        )));
    }
    if n == 0 || m < n {
        return Err(Error::domain(format!(
            "closed-form distortion needs M >= N >= 1, got M={m}, N={n}"
        )));
    }
    let t = (n * n * (k - 1)) as u64;
    let ln_c = (1..=n)
        .map(|i| ln_factorial((m - i) as u64) - ln_factorial((n - i) as u64))
        .sum::<f64>()
        - ln_factorial(t);
    let tf = t as f64;
    let xi = gamma_fn(1.0 / tf)? / tf * (-ln_c / tf).exp() * (-(bits as f64) / tf).exp2();
    Ok(ClosedFormDistortion {
        xi,
        gamma: xi / n as f64,
        t,
        ln_c,
    })
}
