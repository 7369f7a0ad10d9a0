use nalgebra::linalg::{Cholesky, SymmetricEigen};

use super::{tol, CMatrix, CVector, Complex64};
use crate::error::{Error, Result};

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(a: &CMatrix) -> Complex64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

pub fn assert_finite(a: &CMatrix, what: &str) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical(format!("{what} has non-finite entries")))
    }
}

/// `max |A - A^H|`, scaled by `max(1, max |A|)`.
pub fn hermitian_deviation(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut dev: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev / scale
}

/// `max |Q^H Q - I|`.
pub fn semi_unitary_error(q: &CMatrix) -> f64 {
    let g = q.adjoint() * q;
    let mut err: f64 = 0.0;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    err
}

pub fn is_semi_unitary(q: &CMatrix) -> bool {
    q.nrows() >= q.ncols() && semi_unitary_error(q) <= tol::SEMI_UNITARY
}

fn check_square(a: &CMatrix, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::validation(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

fn check_hermitian(a: &CMatrix, what: &str) -> Result<()> {
    check_square(a, what)?;
    assert_finite(a, what)?;
    let dev = hermitian_deviation(a);
    if dev > tol::HERMITIAN {
        return Err(Error::validation(format!(
            "{what} is not Hermitian (max |A - A^H| = {dev:.3e})"
        )));
    }
    Ok(())
}

/// Eigendecomposition `A = U diag(values) U^H` of a Hermitian matrix.
/// Eigenvalues come back in solver order, not sorted.
#[derive(Debug, Clone)]
pub struct HermEvd {
    pub vectors: CMatrix,
    pub values: Vec<f64>,
}

impl HermEvd {
    pub fn reconstruct(&self) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(l);
        }
        scaled * self.vectors.adjoint()
    }
}

pub fn herm_evd(a: &CMatrix) -> Result<HermEvd> {
    check_hermitian(a, "herm_evd input")?;
    let sym = (a + a.adjoint()).scale(0.5);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numerical("Hermitian eigensolver did not converge"))?;
    Ok(HermEvd {
        vectors: eig.eigenvectors,
        values: eig.eigenvalues.iter().copied().collect(),
    })
}

/// What to do when a QR column is (numerically) linearly dependent on the
/// previous ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankPolicy {
    Strict,
    /// Replace the degenerate `Q` column by an arbitrary orthonormal
    /// completion and set the matching diagonal entry of `R` to zero.
    Tolerate,
}

/// Thin QR with `R` upper triangular and `diag(R)` real, non-negative.
#[derive(Debug, Clone)]
pub struct Qr {
    pub q: CMatrix,
    pub r: CMatrix,
    /// Indices of columns that were replaced by a completion.
    pub degenerate: Vec<usize>,
}

pub fn qr_positive(a: &CMatrix, policy: RankPolicy) -> Result<Qr> {
    qr_positive_avoiding(a, None, policy)
}

/// [`qr_positive`] whose `Q` columns are additionally kept orthogonal to the
/// columns of `avoid` (assumed orthonormal). Components of `A` along `avoid`
/// are discarded, so reconstruction only holds when `A` is already
/// orthogonal to `avoid`.
pub fn qr_positive_avoiding(
    a: &CMatrix,
    avoid: Option<&CMatrix>,
    policy: RankPolicy,
) -> Result<Qr> {
    let (m, n) = a.shape();
    let n_avoid = avoid.map_or(0, |u| u.ncols());
    if n + n_avoid > m {
        return Err(Error::validation(format!(
            "qr_positive needs rows >= cols, got {m}x{n} (+{n_avoid} excluded directions)"
        )));
    }
    assert_finite(a, "qr_positive input")?;

    let fixed: Vec<CVector> = avoid.map_or_else(Vec::new, |u| {
        u.column_iter().map(|c| c.into_owned()).collect()
    });
    let mut qs: Vec<CVector> = Vec::with_capacity(n);
    let mut r = CMatrix::zeros(n, n);
    let mut degenerate = Vec::new();

    for j in 0..n {
        let col = a.column(j).into_owned();
        let scale = col.norm().max(1.0);
        let mut v = col;
        // two Gram-Schmidt passes keep Q orthonormal to working precision
        for _ in 0..2 {
            for (i, q) in qs.iter().enumerate() {
                let c = q.dotc(&v);
                v.axpy(-c, q, Complex64::new(1.0, 0.0));
                r[(i, j)] += c;
            }
            for u in &fixed {
                let c = u.dotc(&v);
                v.axpy(-c, u, Complex64::new(1.0, 0.0));
            }
        }
        let norm = v.norm();
        if norm <= tol::RANK * scale {
            if policy == RankPolicy::Strict {
                return Err(Error::RankDeficient { column: j, norm });
            }
            let mut basis = fixed.clone();
            basis.extend(qs.iter().cloned());
            qs.push(complete_orthonormal(&basis, m));
            degenerate.push(j);
        } else {
            r[(j, j)] = Complex64::new(norm, 0.0);
            qs.push(v.unscale(norm));
        }
    }

    let q = CMatrix::from_columns(&qs);
    Ok(Qr { q, r, degenerate })
}

/// Unit vector orthogonal to every vector in `basis`, built from the
/// standard basis direction with the largest residual.
pub fn complete_orthonormal(basis: &[CVector], m: usize) -> CVector {
    let project_out = |mut v: CVector| {
        for _ in 0..2 {
            for b in basis {
                let c = b.dotc(&v);
                v.axpy(-c, b, Complex64::new(1.0, 0.0));
            }
        }
        v
    };
    let mut best: Option<(f64, CVector)> = None;
    for i in 0..m {
        let mut e = CVector::zeros(m);
        e[i] = Complex64::new(1.0, 0.0);
        let v = project_out(e);
        let nv = v.norm();
        if best.as_ref().is_none_or(|(b, _)| nv > *b + 1e-12) {
            best = Some((nv, v));
        }
    }
    let (nv, v) = best.expect("m >= 1");
    v.unscale(nv)
}

fn cholesky_checked(a: &CMatrix, what: &str) -> Result<Cholesky<Complex64, nalgebra::Dyn>> {
    check_hermitian(a, what)?;
    let sym = (a + a.adjoint()).scale(0.5);
    let chol = Cholesky::new(sym).ok_or(Error::IllConditioned {
        condition: f64::INFINITY,
    })?;
    let diag: Vec<f64> = (0..a.nrows()).map(|i| chol.l_dirty()[(i, i)].re).collect();
    let lo = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = diag.iter().copied().fold(0.0, f64::max);
    // (max l_ii / min l_ii)^2 underestimates cond(A) but tracks it closely for
    // the diagonally dominant systems used here
    let condition = if lo > 0.0 {
        (hi / lo).powi(2)
    } else {
        f64::INFINITY
    };
    if !(condition * tol::HPD_RECIPROCAL_CONDITION < 1.0) {
        return Err(Error::IllConditioned { condition });
    }
    Ok(chol)
}

/// Solve `A X = B` for Hermitian positive-definite `A`.
pub fn solve_hpd(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::validation(format!(
            "solve_hpd dimension mismatch: A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let chol = cholesky_checked(a, "solve_hpd matrix")?;
    let x = chol.solve(b);
    assert_finite(&x, "solve_hpd solution")?;
    Ok(x)
}

/// Natural log-determinant of a Hermitian positive-definite matrix.
pub fn log_det_hpd(a: &CMatrix) -> Result<f64> {
    check_hermitian(a, "log_det_hpd matrix")?;
    let sym = (a + a.adjoint()).scale(0.5);
    let chol = Cholesky::new(sym)
        .ok_or_else(|| Error::numerical("matrix is not positive definite in log-determinant"))?;
    let l = chol.l_dirty();
    Ok((0..a.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}
