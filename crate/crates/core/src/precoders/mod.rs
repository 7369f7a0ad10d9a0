//! Downlink precoders: MRT, block diagonalization, (robust) MMSE and the
//! (robust) weighted-MMSE iteration.

mod closed_form;
pub mod wmmse;

use std::fmt;
use std::str::FromStr;

pub use closed_form::{bd, mmse, mrt, rmmse, robust_second_order_sum};
pub use wmmse::{
    one_step_vs_rmmse, wmmse_iterate, IterState, StepReport, WmmseProblem, WmmseRun, WmmseSolver,
};

use crate::error::{Error, Result};
use crate::numerics::{frobenius, tol, CMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Mrt,
    Bd,
    Mmse,
    Wmmse,
    Rmmse,
    Rwmmse,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Mrt,
        Scheme::Bd,
        Scheme::Mmse,
        Scheme::Wmmse,
        Scheme::Rmmse,
        Scheme::Rwmmse,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Mrt => "mrt",
            Scheme::Bd => "bd",
            Scheme::Mmse => "mmse",
            Scheme::Wmmse => "wmmse",
            Scheme::Rmmse => "rmmse",
            Scheme::Rwmmse => "rwmmse",
        }
    }

    pub fn is_iterative(self) -> bool {
        matches!(self, Scheme::Wmmse | Scheme::Rwmmse)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config(format!("unknown scheme '{s}'")))
    }
}

/// Concatenated precoder `P = [P_1 ... P_K]`, each block `M x N`.
#[derive(Debug, Clone)]
pub struct PrecoderOutput {
    pub p: CMatrix,
    /// Streams per user, `N`.
    pub streams: usize,
    pub scheme: Scheme,
    /// Iterations run; 0 for closed-form schemes.
    pub iterations: usize,
}

impl PrecoderOutput {
    pub fn users(&self) -> usize {
        self.p.ncols() / self.streams
    }

    pub fn block(&self, k: usize) -> CMatrix {
        self.p.columns(k * self.streams, self.streams).into_owned()
    }

    pub fn blocks(&self) -> Vec<CMatrix> {
        (0..self.users()).map(|k| self.block(k)).collect()
    }

    /// `tr(P P^H)`.
    pub fn power(&self) -> f64 {
        frobenius(&self.p).powi(2)
    }

    pub fn satisfies_power(&self, rho: f64) -> bool {
        ((self.power() - rho) / rho).abs() <= tol::POWER
    }
}

/// Stack equal-width blocks side by side.
pub fn concat_blocks(blocks: &[CMatrix]) -> Result<CMatrix> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::validation("no user blocks"))?;
    let (m, n) = first.shape();
    if blocks.iter().any(|b| b.shape() != (m, n)) {
        return Err(Error::validation("user blocks must share one shape"));
    }
    let mut out = CMatrix::zeros(m, n * blocks.len());
    for (k, b) in blocks.iter().enumerate() {
        out.columns_mut(k * n, n).copy_from(b);
    }
    Ok(out)
}

pub(crate) fn check_power_args(rho: f64, sigma2: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::validation(format!(
            "transmit power must be positive, got {rho}"
        )));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::validation(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    Ok(())
}
