use super::{check_power_args, concat_blocks, PrecoderOutput, Scheme};
use crate::channel::{require_semi_unitary, GammaPolicy};
use crate::error::{Error, Result};
use crate::numerics::{qr_positive, qr_positive_avoiding, solve_hpd, CMatrix, RankPolicy};
use crate::statistics::second_order;

fn check_subspaces(h_hat: &[CMatrix]) -> Result<(usize, usize)> {
    let first = h_hat
        .first()
        .ok_or_else(|| Error::validation("at least one user is required"))?;
    let (m, n) = first.shape();
    for (k, h) in h_hat.iter().enumerate() {
        if h.shape() != (m, n) {
            return Err(Error::validation(format!(
                "user {k} subspace is {:?}, expected {m}x{n}",
                h.shape()
            )));
        }
        require_semi_unitary(h, "quantized subspace")?;
    }
    Ok((m, n))
}

/// Equal power per stream: each semi-unitary block is scaled by
/// `sqrt(rho / (N K))`, which is `sqrt(rho / M)` when `M = N K`.
fn equal_power(blocks: Vec<CMatrix>, rho: f64, scheme: Scheme) -> Result<PrecoderOutput> {
    let n = blocks[0].ncols();
    let scale = (rho / (n * blocks.len()) as f64).sqrt();
    let p = concat_blocks(&blocks)?.scale(scale);
    Ok(PrecoderOutput {
        p,
        streams: n,
        scheme,
        iterations: 0,
    })
}

/// Per-user semi-unitary factor of an unnormalized precoder.
fn block_subspaces(p_check: &CMatrix, n: usize) -> Result<Vec<CMatrix>> {
    (0..p_check.ncols() / n)
        .map(|k| {
            Ok(qr_positive(
                &p_check.columns(k * n, n).into_owned(),
                RankPolicy::Tolerate,
            )?
            .q)
        })
        .collect()
}

/// Maximum ratio transmission along each quantized subspace.
pub fn mrt(h_hat: &[CMatrix], rho: f64) -> Result<PrecoderOutput> {
    check_subspaces(h_hat)?;
    check_power_args(rho, 1.0)?;
    equal_power(h_hat.to_vec(), rho, Scheme::Mrt)
}

/// Block diagonalization: user `k` transmits inside the left nullspace of
/// every other user's quantized subspace. The basis is the QR factor of the
/// user's own subspace projected onto that nullspace.
pub fn bd(h_hat: &[CMatrix], rho: f64) -> Result<PrecoderOutput> {
    let (m, n) = check_subspaces(h_hat)?;
    check_power_args(rho, 1.0)?;
    let k_users = h_hat.len();
    if m < n * k_users {
        return Err(Error::config(format!(
            "block diagonalization is infeasible for M={m} < N*K={}",
            n * k_users
        )));
    }
    let mut blocks = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let others: Vec<CMatrix> = h_hat
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, h)| h.clone())
            .collect();
        let block = if others.is_empty() {
            h_hat[k].clone()
        } else {
            let basis = qr_positive(&concat_blocks(&others)?, RankPolicy::Tolerate)?.q;
            let projected = &h_hat[k] - &basis * (basis.adjoint() * &h_hat[k]);
            qr_positive_avoiding(&projected, Some(&basis), RankPolicy::Tolerate)?.q
        };
        blocks.push(block);
    }
    equal_power(blocks, rho, Scheme::Bd)
}

/// Regularized channel inversion `(G G^H + (M sigma2 / rho) I)^{-1} G`, then
/// per-user subspace extraction and equal power.
pub fn mmse(g: &CMatrix, streams: usize, rho: f64, sigma2: f64) -> Result<PrecoderOutput> {
    check_power_args(rho, sigma2)?;
    let m = g.nrows();
    if streams == 0 || !g.ncols().is_multiple_of(streams) {
        return Err(Error::validation(format!(
            "{} columns do not split into blocks of {streams}",
            g.ncols()
        )));
    }
    let mut gram = g * g.adjoint();
    let reg = m as f64 * sigma2 / rho;
    for i in 0..m {
        gram[(i, i)] += reg;
    }
    let p_check = solve_hpd(&gram, g)?;
    equal_power(block_subspaces(&p_check, streams)?, rho, Scheme::Mmse)
}

/// `sum_j R_j^o` over all users.
pub fn robust_second_order_sum(
    h_hat: &[CMatrix],
    gamma: f64,
    policy: GammaPolicy,
) -> Result<CMatrix> {
    let (m, _) = check_subspaces(h_hat)?;
    let mut r = CMatrix::zeros(m, m);
    for h in h_hat {
        r += second_order(h, gamma, policy)?.r;
    }
    Ok(r)
}

/// Robust MMSE: the Gram matrix of the channel estimate is replaced by the
/// second-order statistic of the quantized channels.
pub fn rmmse(
    h_hat: &[CMatrix],
    gamma: f64,
    rho: f64,
    sigma2: f64,
    policy: GammaPolicy,
) -> Result<PrecoderOutput> {
    check_power_args(rho, sigma2)?;
    let (m, n) = check_subspaces(h_hat)?;
    let mut a = robust_second_order_sum(h_hat, gamma, policy)?;
    let reg = m as f64 * sigma2 / rho;
    for i in 0..m {
        a[(i, i)] += reg;
    }
    let p_check = solve_hpd(&a, &concat_blocks(h_hat)?)?;
    equal_power(block_subspaces(&p_check, n)?, rho, Scheme::Rmmse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{frobenius, identity, Complex64, SeedStream};
    use crate::quantize::{chordal_d2, draw_codeword};

    fn users(m: usize, n: usize, k: usize, seed: u64) -> Vec<CMatrix> {
        let mut rng = SeedStream::new(seed, 5).rng();
        (0..k).map(|_| draw_codeword(&mut rng, m, n)).collect()
    }

    fn scaled(h: &[CMatrix], s: f64) -> CMatrix {
        concat_blocks(h).unwrap().scale(s)
    }

    /// Mutually orthogonal users: disjoint coordinate blocks of a random unitary.
    fn orthogonal_users(m: usize, n: usize, seed: u64) -> Vec<CMatrix> {
        let u = draw_codeword(&mut SeedStream::new(seed, 6).rng(), m, m);
        (0..m / n)
            .map(|k| u.columns(k * n, n).into_owned())
            .collect()
    }

    #[test]
    fn power_constraint_holds_everywhere() {
        let h = users(8, 2, 4, 1);
        for rho in [1e-3, 1.0, 10.0, 1e3, 1e5] {
            for out in [
                mrt(&h, rho).unwrap(),
                bd(&h, rho).unwrap(),
                mmse(&scaled(&h, 8f64.sqrt()), 2, rho, 1.0).unwrap(),
                rmmse(&h, 0.3, rho, 1.0, GammaPolicy::Strict).unwrap(),
            ] {
                assert!(
                    out.satisfies_power(rho),
                    "{} at rho {rho}: {}",
                    out.scheme,
                    out.power()
                );
            }
        }
    }

    #[test]
    fn single_user_mrt_spans_channel() {
        let h = users(4, 2, 1, 2);
        let out = mrt(&h, 2.0).unwrap();
        assert!(frobenius(&(out.block(0) - h[0].scale(1.0))) < 1e-14);
    }

    #[test]
    fn mmse_tends_to_mrt_at_low_power() {
        let h = users(8, 2, 4, 3);
        let a = mrt(&h, 1e-6).unwrap();
        let b = mmse(&scaled(&h, 8f64.sqrt()), 2, 1e-6, 1.0).unwrap();
        let s = (1e-6f64 / 8.0).sqrt();
        for k in 0..4 {
            let d = chordal_d2(&a.block(k).unscale(s), &b.block(k).unscale(s)).unwrap();
            assert!(d <= 1e-3, "user {k}: {d}");
        }
    }

    #[test]
    fn bd_nulls_other_users() {
        let h = users(8, 2, 4, 4);
        let out = bd(&h, 1.0).unwrap();
        for k in 0..4 {
            for j in (0..4).filter(|&j| j != k) {
                assert!(frobenius(&(h[j].adjoint() * out.block(k))) < 1e-10);
            }
        }
    }

    #[test]
    fn bd_equals_mrt_for_orthogonal_users() {
        let h = orthogonal_users(8, 2, 5);
        let a = bd(&h, 1.0).unwrap();
        let s = (1.0f64 / 8.0).sqrt();
        for k in 0..4 {
            assert!(chordal_d2(&a.block(k).unscale(s), &h[k]).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn bd_rejects_overloaded() {
        let h = users(4, 2, 3, 6);
        assert!(matches!(bd(&h, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn mmse_tends_to_bd_at_high_power() {
        let h = orthogonal_users(8, 2, 7);
        let a = bd(&h, 1e9).unwrap();
        let b = mmse(&scaled(&h, 8f64.sqrt()), 2, 1e9, 1.0).unwrap();
        let s = (1e9f64 / 8.0).sqrt();
        for k in 0..4 {
            assert!(chordal_d2(&a.block(k).unscale(s), &b.block(k).unscale(s)).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn rmmse_without_distortion_is_mmse() {
        for seed in 0..20 {
            let h = users(8, 2, 4, 100 + seed);
            for rho in [0.1, 10.0, 1000.0] {
                let a = rmmse(&h, 0.0, rho, 1.0, GammaPolicy::Strict).unwrap();
                let b = mmse(&scaled(&h, 8f64.sqrt()), 2, rho, 1.0).unwrap();
                let s = (rho / 8.0).sqrt();
                for k in 0..4 {
                    assert!(
                        chordal_d2(&a.block(k).unscale(s), &b.block(k).unscale(s)).unwrap() <= 1e-9
                    );
                }
            }
        }
    }

    /// Independent dense evaluation of the robust covariance and the
    /// regularized inverse, written entry by entry.
    fn rmmse_oracle(h: &[CMatrix], gamma: f64, rho: f64, sigma2: f64) -> Vec<CMatrix> {
        let (m, n) = h[0].shape();
        let (mf, nf) = (m as f64, n as f64);
        let c1 = mf * (1.0 - mf * gamma / (mf - nf));
        let c2 = mf * nf * gamma / (mf - nf);
        let mut a = nalgebra::DMatrix::<Complex64>::zeros(m, m);
        for r in 0..m {
            for c in 0..m {
                let mut v = Complex64::new(0.0, 0.0);
                for hk in h {
                    for s in 0..n {
                        v += hk[(r, s)] * hk[(c, s)].conj() * c1;
                    }
                    if r == c {
                        v += c2;
                    }
                }
                if r == c {
                    v += mf * sigma2 / rho;
                }
                a[(r, c)] = v;
            }
        }
        let inv = a.try_inverse().unwrap();
        h.iter()
            .map(|hk| {
                let blk = &inv * hk;
                // Gram-Schmidt on two columns
                let mut q = blk.clone();
                let c0 = q.column(0).into_owned();
                let q0 = c0.unscale(c0.norm());
                let c1v = q.column(1).into_owned();
                let proj = q0.dotc(&c1v);
                let r1 = &c1v - &q0 * proj;
                let q1 = r1.unscale(r1.norm());
                q.set_column(0, &q0);
                q.set_column(1, &q1);
                q
            })
            .collect()
    }

    #[test]
    fn rmmse_matches_independent_oracle() {
        let h = users(4, 2, 2, 42);
        let out = rmmse(&h, 0.2, 10.0, 1.0, GammaPolicy::Strict).unwrap();
        let want = rmmse_oracle(&h, 0.2, 10.0, 1.0);
        let s = (10.0f64 / 4.0).sqrt();
        for k in 0..2 {
            assert!(frobenius(&(out.block(k).unscale(s) - &want[k])) < 1e-10);
        }
    }

    #[test]
    fn argument_checks() {
        let h = users(4, 2, 2, 9);
        assert!(mmse(&scaled(&h, 2.0), 2, 1.0, 0.0).is_err());
        assert!(rmmse(&h, 0.2, -1.0, 1.0, GammaPolicy::Strict).is_err());
        assert!(mrt(&[identity(3).scale(2.0)], 1.0).is_err());
    }
}
