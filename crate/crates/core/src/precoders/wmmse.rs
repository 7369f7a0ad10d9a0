//! Block-coordinate weighted-MMSE iteration over receive filters, weights and
//! the precoder. With `eta = 0` it is the conventional algorithm; with the
//! robust coefficients it takes conditional expectations over the unknown
//! quantization error.

use log::debug;

use super::{check_power_args, concat_blocks, rmmse, PrecoderOutput, Scheme};
use crate::channel::{GammaPolicy, RobustCoefficients};
use crate::error::{Error, Result};
use crate::numerics::{
    frobenius, herm_evd, identity, qr_positive, solve_hpd, tol, trace, CMatrix, RankPolicy,
};
use crate::quantize::chordal_d2;

/// Inputs of one weighted-MMSE design.
#[derive(Debug, Clone)]
pub struct WmmseProblem {
    /// Effective channel `[H_1 ... H_K]`, `M x NK`.
    pub heff: CMatrix,
    pub streams: usize,
    pub delta: f64,
    pub eta: f64,
    /// Per-user rate weights `mu_k`.
    pub weights: Vec<f64>,
    pub rho: f64,
    pub sigma2: f64,
    pub scheme: Scheme,
}

impl WmmseProblem {
    /// Treat `g` as the true channel: `delta = 1`, `eta = 0`.
    pub fn conventional(g: CMatrix, streams: usize, rho: f64, sigma2: f64) -> Result<Self> {
        Self::new(g, streams, 1.0, 0.0, rho, sigma2, Scheme::Wmmse)
    }

    /// Robust design on quantized subspaces with per-column distortion `gamma`.
    pub fn robust(
        h_hat: &[CMatrix],
        gamma: f64,
        rho: f64,
        sigma2: f64,
        policy: GammaPolicy,
    ) -> Result<Self> {
        let g = concat_blocks(h_hat)?;
        let (m, n) = h_hat[0].shape();
        let c = RobustCoefficients::new(m, n, gamma, policy)?;
        Self::new(g, n, c.delta, c.eta, rho, sigma2, Scheme::Rwmmse)
    }

    pub fn new(
        heff: CMatrix,
        streams: usize,
        delta: f64,
        eta: f64,
        rho: f64,
        sigma2: f64,
        scheme: Scheme,
    ) -> Result<Self> {
        check_power_args(rho, sigma2)?;
        if streams == 0 || heff.ncols() == 0 || !heff.ncols().is_multiple_of(streams) {
            return Err(Error::validation(format!(
                "{} columns do not split into blocks of {streams}",
                heff.ncols()
            )));
        }
        if !(delta >= 0.0 && eta >= 0.0 && delta.is_finite() && eta.is_finite()) {
            return Err(Error::validation(format!(
                "delta and eta must be finite and non-negative, got {delta}, {eta}"
            )));
        }
        let users = heff.ncols() / streams;
        Ok(Self {
            heff,
            streams,
            delta,
            eta,
            weights: vec![1.0; users],
            rho,
            sigma2,
            scheme,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.users() {
            return Err(Error::validation(format!(
                "{} weights for {} users",
                weights.len(),
                self.users()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::validation("weights must be positive and finite"));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn users(&self) -> usize {
        self.heff.ncols() / self.streams
    }

    pub fn antennas(&self) -> usize {
        self.heff.nrows()
    }

    fn h(&self, k: usize) -> CMatrix {
        self.heff
            .columns(k * self.streams, self.streams)
            .into_owned()
    }

    /// Equal-power MRT along each user's effective channel subspace.
    pub fn mrt_init(&self) -> Result<CMatrix> {
        let blocks = (0..self.users())
            .map(|k| Ok(qr_positive(&self.h(k), RankPolicy::Tolerate)?.q))
            .collect::<Result<Vec<_>>>()?;
        let scale = (self.rho / self.heff.ncols() as f64).sqrt();
        Ok(concat_blocks(&blocks)?.scale(scale))
    }

    fn check_precoder(&self, p: &CMatrix) -> Result<()> {
        if p.shape() != self.heff.shape() {
            return Err(Error::validation(format!(
                "precoder is {:?}, expected {:?}",
                p.shape(),
                self.heff.shape()
            )));
        }
        Ok(())
    }

    /// `Phi_k` scalar: `tr(P P^H) / M`.
    fn phi_user(&self, p: &CMatrix) -> f64 {
        frobenius(p).powi(2) / self.antennas() as f64
    }

    /// MMSE receive filters `D_k = delta P_k^H H_k F_k^{-1}`.
    pub fn receive_filters(&self, p: &CMatrix) -> Result<Vec<CMatrix>> {
        self.check_precoder(p)?;
        let n = self.streams;
        let load = self.eta * self.eta * self.phi_user(p) + self.sigma2;
        (0..self.users())
            .map(|k| {
                let hk = self.h(k);
                let hp = hk.adjoint() * p;
                let mut f = (&hp * hp.adjoint()).scale(self.delta * self.delta);
                for i in 0..n {
                    f[(i, i)] += load;
                }
                let pk = p.columns(k * n, n);
                // D_k = delta (F_k^{-1} H_k^H P_k)^H since F_k is Hermitian.
                let rhs = (hk.adjoint() * pk).scale(self.delta);
                Ok(solve_hpd(&f, &rhs)?.adjoint())
            })
            .collect()
    }

    /// Conditional MSE matrices for arbitrary filters `D`.
    pub fn mse_matrices(&self, p: &CMatrix, d: &[CMatrix]) -> Result<Vec<CMatrix>> {
        self.check_precoder(p)?;
        self.check_blocks(d, "receive filters")?;
        let n = self.streams;
        let phi = self.eta * self.eta * self.phi_user(p) + self.sigma2;
        Ok((0..self.users())
            .map(|k| {
                let hp = self.h(k).adjoint() * p;
                let dh = &d[k] * &hp;
                let cross = dh.columns(k * n, n).scale(self.delta);
                (&dh * dh.adjoint()).scale(self.delta * self.delta)
                    + (&d[k] * d[k].adjoint()).scale(phi)
                    - &cross
                    - cross.adjoint()
                    + identity(n)
            })
            .collect())
    }

    /// `I - delta D_k H_k^H P_k`, the MSE at the MMSE filters.
    pub fn mmse_matrices(&self, p: &CMatrix, d: &[CMatrix]) -> Result<Vec<CMatrix>> {
        self.check_precoder(p)?;
        self.check_blocks(d, "receive filters")?;
        let n = self.streams;
        Ok((0..self.users())
            .map(|k| {
                let e = identity(n)
                    - (&d[k] * self.h(k).adjoint() * p.columns(k * n, n)).scale(self.delta);
                (&e + e.adjoint()).scale(0.5)
            })
            .collect())
    }

    /// `W_k = mu_k E_k^{-1}` with the eigenvalues of `E_k` floored.
    pub fn weight_matrices(&self, mse: &[CMatrix]) -> Result<Vec<CMatrix>> {
        self.check_blocks(mse, "MSE matrices")?;
        mse.iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(k, (e, &mu))| {
                let evd = herm_evd(e)?;
                let mut v = evd.vectors.clone();
                for (j, &l) in evd.values.iter().enumerate() {
                    if !l.is_finite() {
                        return Err(Error::numerical(format!(
                            "MSE block {k} has a non-finite eigenvalue"
                        )));
                    }
                    if l < tol::MSE_EIGEN_FLOOR {
                        debug!("flooring MSE eigenvalue {l:e} of user {k}");
                    }
                    v.column_mut(j)
                        .scale_mut(1.0 / l.max(tol::MSE_EIGEN_FLOOR).sqrt());
                }
                Ok((&v * v.adjoint()).scale(mu))
            })
            .collect()
    }

    /// Lagrangian precoder update followed by power normalization.
    pub fn precoder_update(&self, d: &[CMatrix], w: &[CMatrix]) -> Result<CMatrix> {
        self.check_blocks(d, "receive filters")?;
        self.check_blocks(w, "weights")?;
        let m = self.antennas();
        let mut t = CMatrix::zeros(m, m);
        let mut rhs = CMatrix::zeros(m, self.heff.ncols());
        let (mut leak, mut noise) = (0.0, 0.0);
        for k in 0..self.users() {
            let hd = self.h(k) * d[k].adjoint();
            let hdw = &hd * &w[k];
            t += (&hdw * hd.adjoint()).scale(self.delta * self.delta);
            rhs.columns_mut(k * self.streams, self.streams)
                .copy_from(&hdw.scale(self.delta));
            let dwd = trace(&(d[k].adjoint() * &w[k] * &d[k])).re;
            leak += dwd;
            noise += dwd;
        }
        let diag = self.eta * self.eta * leak / m as f64 + self.sigma2 / self.rho * noise;
        for i in 0..m {
            t[(i, i)] += diag;
        }
        let p_bar = solve_hpd(&t, &rhs)?;
        let norm = frobenius(&p_bar);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::numerical(format!(
                "unnormalized precoder has norm {norm}"
            )));
        }
        Ok(p_bar.scale((self.rho).sqrt() / norm))
    }

    /// `sum_k tr(W_k E_k)`.
    pub fn weighted_mse(&self, w: &[CMatrix], mse: &[CMatrix]) -> f64 {
        w.iter().zip(mse).map(|(w, e)| trace(&(w * e)).re).sum()
    }

    /// `sum_k [tr(W_k E_k) - mu_k ln det W_k]`, the function minimized by
    /// every block update.
    pub fn surrogate(&self, w: &[CMatrix], mse: &[CMatrix]) -> Result<f64> {
        let mut acc = self.weighted_mse(w, mse);
        for (wk, &mu) in w.iter().zip(&self.weights) {
            acc -= mu * crate::numerics::log_det_hpd(wk)?;
        }
        Ok(acc)
    }

    fn check_blocks(&self, blocks: &[CMatrix], what: &str) -> Result<()> {
        let n = self.streams;
        if blocks.len() != self.users() || blocks.iter().any(|b| b.shape() != (n, n)) {
            return Err(Error::validation(format!(
                "expected {} {what} of size {n}x{n}",
                self.users()
            )));
        }
        Ok(())
    }
}

/// Filters, weights and objective computed at one precoder.
#[derive(Debug, Clone)]
pub struct IterState {
    pub d: Vec<CMatrix>,
    pub w: Vec<CMatrix>,
    /// `sum_k tr(W_k E_k)` at the MMSE filters.
    pub objective: f64,
    /// Objective including the `-mu ln det W` term.
    pub surrogate: f64,
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub state: IterState,
    /// `||P_new - P_old||_F / ||P_old||_F`.
    pub rel_change: f64,
}

/// Stateful driver exposing one iteration at a time.
#[derive(Debug, Clone)]
pub struct WmmseSolver {
    pub problem: WmmseProblem,
    pub p: CMatrix,
    pub iterations: usize,
}

impl WmmseSolver {
    pub fn new(problem: WmmseProblem, p_init: CMatrix) -> Result<Self> {
        problem.check_precoder(&p_init)?;
        let power = frobenius(&p_init).powi(2);
        if ((power - problem.rho) / problem.rho).abs() > tol::POWER {
            return Err(Error::validation(format!(
                "initial precoder has power {power}, expected {}",
                problem.rho
            )));
        }
        Ok(Self {
            problem,
            p: p_init,
            iterations: 0,
        })
    }

    pub fn state(&self) -> Result<IterState> {
        let pr = &self.problem;
        let d = pr.receive_filters(&self.p)?;
        let e = pr.mmse_matrices(&self.p, &d)?;
        let w = pr.weight_matrices(&e)?;
        let objective = pr.weighted_mse(&w, &e);
        let surrogate = pr.surrogate(&w, &e)?;
        if !(objective.is_finite() && surrogate.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite objective at iteration {}",
                self.iterations
            )));
        }
        Ok(IterState {
            d,
            w,
            objective,
            surrogate,
        })
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let state = self.state()?;
        let p_new = self
            .problem
            .precoder_update(&state.d, &state.w)
            .map_err(|e| {
                Error::numerical(format!(
                    "precoder update at iteration {}: {e}",
                    self.iterations
                ))
            })?;
        let rel_change = frobenius(&(&p_new - &self.p)) / frobenius(&self.p);
        self.p = p_new;
        self.iterations += 1;
        Ok(StepReport { state, rel_change })
    }

    pub fn output(&self) -> PrecoderOutput {
        PrecoderOutput {
            p: self.p.clone(),
            streams: self.problem.streams,
            scheme: self.problem.scheme,
            iterations: self.iterations,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WmmseRun {
    pub output: PrecoderOutput,
    /// Relative precoder change of each iteration.
    pub rel_changes: Vec<f64>,
    /// Surrogate objective before each iteration.
    pub surrogates: Vec<f64>,
    pub converged: bool,
}

impl WmmseRun {
    /// First iteration (1-based) whose relative change fell below `tol`.
    pub fn iterations_to(&self, tol: f64) -> Option<usize> {
        self.rel_changes
            .iter()
            .position(|&c| c < tol)
            .map(|i| i + 1)
    }
}

pub fn wmmse_iterate(
    problem: WmmseProblem,
    p_init: CMatrix,
    max_iter: usize,
    tol: f64,
) -> Result<WmmseRun> {
    if max_iter == 0 {
        return Err(Error::validation("max_iter must be at least 1"));
    }
    let mut solver = WmmseSolver::new(problem, p_init)?;
    let mut rel_changes = Vec::with_capacity(max_iter);
    let mut surrogates = Vec::with_capacity(max_iter);
    let mut converged = false;
    while solver.iterations < max_iter {
        let report = solver.step()?;
        rel_changes.push(report.rel_change);
        surrogates.push(report.state.surrogate);
        if report.rel_change < tol {
            converged = true;
            break;
        }
    }
    Ok(WmmseRun {
        output: solver.output(),
        rel_changes,
        surrogates,
        converged,
    })
}

/// Per-user chordal distance between the subspaces of one robust iteration
/// from MRT and the closed-form robust MMSE precoder.
pub fn one_step_vs_rmmse(
    h_hat: &[CMatrix],
    gamma: f64,
    rho: f64,
    sigma2: f64,
    policy: GammaPolicy,
) -> Result<Vec<f64>> {
    let prob = WmmseProblem::robust(h_hat, gamma, rho, sigma2, policy)?;
    let p0 = prob.mrt_init()?;
    let one = wmmse_iterate(prob, p0, 1, 0.0)?.output;
    let closed = rmmse(h_hat, gamma, rho, sigma2, policy)?;
    (0..h_hat.len())
        .map(|k| {
            let a = qr_positive(&one.block(k), RankPolicy::Tolerate)?.q;
            let b = qr_positive(&closed.block(k), RankPolicy::Tolerate)?.q;
            chordal_d2(&a, &b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_matrix, SeedStream};
    use crate::quantize::draw_codeword;
    use crate::statistics::{lemma4_closed_form, verify_lemma4};
    use nalgebra::DMatrix;

    fn robust_problem(seed: u64, rho: f64, gamma: f64) -> WmmseProblem {
        let mut rng = SeedStream::new(seed, 11).rng();
        let h: Vec<CMatrix> = (0..4).map(|_| draw_codeword(&mut rng, 8, 2)).collect();
        WmmseProblem::robust(&h, gamma, rho, 1.0, GammaPolicy::Strict).unwrap()
    }

    fn random_power_precoder(prob: &WmmseProblem, seed: u64) -> CMatrix {
        let mut rng = SeedStream::new(seed, 12).rng();
        let p = gaussian_matrix(&mut rng, prob.antennas(), prob.heff.ncols(), 1.0);
        p.scale(prob.rho.sqrt() / frobenius(&p))
    }

    #[test]
    fn filters_minimize_conditional_mse() {
        let prob = robust_problem(1, 10.0, 0.1);
        let p = random_power_precoder(&prob, 1);
        let d = prob.receive_filters(&p).unwrap();
        let general = prob.mse_matrices(&p, &d).unwrap();
        let short = prob.mmse_matrices(&p, &d).unwrap();
        let mut rng = SeedStream::new(2, 0).rng();
        for k in 0..prob.users() {
            assert!(frobenius(&(&general[k] - &short[k])) < 1e-10);
            let mut bumped = d.clone();
            bumped[k] += gaussian_matrix(&mut rng, 2, 2, 1e-3);
            let worse = prob.mse_matrices(&p, &bumped).unwrap();
            assert!(trace(&worse[k]).re > trace(&general[k]).re);
        }
    }

    #[test]
    fn fixed_weight_descent() {
        for trial in 0..100u64 {
            let rho = [1.0, 10.0, 100.0, 1000.0][trial as usize % 4];
            let prob = robust_problem(100 + trial, rho, 0.05 + 0.002 * trial as f64);
            let p_old = random_power_precoder(&prob, trial);
            let d_old = prob.receive_filters(&p_old).unwrap();
            let w = prob
                .weight_matrices(&prob.mmse_matrices(&p_old, &d_old).unwrap())
                .unwrap();
            let before = prob.weighted_mse(&w, &prob.mse_matrices(&p_old, &d_old).unwrap());
            let p_new = prob.precoder_update(&d_old, &w).unwrap();
            let d_new = prob.receive_filters(&p_new).unwrap();
            let after = prob.weighted_mse(&w, &prob.mse_matrices(&p_new, &d_new).unwrap());
            assert!(
                after <= before + 1e-8 * before.abs().max(1.0),
                "trial {trial}: {before} -> {after}"
            );
        }
    }

    #[test]
    fn full_loop_surrogate_is_monotone() {
        for trial in 0..20u64 {
            let prob = robust_problem(300 + trial, 1000.0, 0.1);
            let p0 = prob.mrt_init().unwrap();
            let run = wmmse_iterate(prob, p0, 30, 0.0).unwrap();
            for pair in run.surrogates.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-8 * pair[0].abs().max(1.0),
                    "{pair:?}"
                );
            }
        }
    }

    #[test]
    fn output_meets_power_constraint() {
        for rho in [0.1, 10.0, 1e4] {
            let prob = robust_problem(7, rho, 0.2);
            let p0 = prob.mrt_init().unwrap();
            let run = wmmse_iterate(prob, p0, 50, 1e-6).unwrap();
            assert!(run.output.satisfies_power(rho));
            assert_eq!(run.output.scheme, Scheme::Rwmmse);
        }
    }

    #[test]
    fn single_user_single_stream_is_dominant_direction() {
        let mut rng = SeedStream::new(21, 0).rng();
        for _ in 0..10 {
            let h = gaussian_matrix(&mut rng, 4, 1, 1.0);
            let prob = WmmseProblem::conventional(h.clone(), 1, 5.0, 1.0).unwrap();
            let p0 = random_power_precoder(&prob, 3);
            let run = wmmse_iterate(prob, p0, 500, 1e-12).unwrap();
            let dir = h.unscale(frobenius(&h));
            let p = run.output.p.unscale(frobenius(&run.output.p));
            assert!(chordal_d2(&p, &dir).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn leakage_term_matches_expectation_identity() {
        // E[D O^H P P^H O D^H] with O entries of variance 1/M equals D Phi D^H.
        let prob = robust_problem(5, 10.0, 0.2);
        let p = prob.mrt_init().unwrap();
        let d = prob.receive_filters(&p).unwrap();
        let m = prob.antennas();
        let theta = DMatrix::from_element(2, m, 1.0 / m as f64);
        let x = &p * p.adjoint();
        let phi = lemma4_closed_form(&x, &theta);
        assert!(frobenius(&(&phi - identity(2).scale(prob.phi_user(&p)))) < 1e-12);
        let report = verify_lemma4(&x, &theta, 20_000, SeedStream::new(5, 99)).unwrap();
        assert!(report.pass, "max_z {}", report.max_z);
        let mapped = &d[0] * &report.sides[0] * d[0].adjoint();
        let target = &d[0] * &phi * d[0].adjoint();
        assert!(frobenius(&(&mapped - &target)) <= 0.05 * frobenius(&target));
    }

    #[test]
    fn conventional_has_no_leakage() {
        let mut rng = SeedStream::new(8, 0).rng();
        let h: Vec<CMatrix> = (0..4).map(|_| draw_codeword(&mut rng, 8, 2)).collect();
        let g = concat_blocks(&h).unwrap().scale(8f64.sqrt());
        let a = WmmseProblem::conventional(g, 2, 100.0, 1.0).unwrap();
        let b = WmmseProblem::robust(&h, 0.0, 100.0, 1.0, GammaPolicy::Strict).unwrap();
        assert_eq!(a.eta, 0.0);
        let ra = wmmse_iterate(a.clone(), a.mrt_init().unwrap(), 40, 1e-8).unwrap();
        let rb = wmmse_iterate(b.clone(), b.mrt_init().unwrap(), 40, 1e-8).unwrap();
        assert!(frobenius(&(&ra.output.p - &rb.output.p)) < 1e-8 * frobenius(&ra.output.p));
    }

    #[test]
    fn one_step_diagnostic_reports_distances() {
        let mut rng = SeedStream::new(9, 0).rng();
        let h: Vec<CMatrix> = (0..4).map(|_| draw_codeword(&mut rng, 8, 2)).collect();
        let d = one_step_vs_rmmse(&h, 0.1, 100.0, 1.0, GammaPolicy::Strict).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.iter().all(|&x| (0.0..=2.0 + 1e-12).contains(&x)));
    }

    #[test]
    fn rejects_bad_inputs() {
        let prob = robust_problem(1, 1.0, 0.1);
        let p0 = prob.mrt_init().unwrap();
        assert!(wmmse_iterate(prob.clone(), p0.clone(), 0, 1e-4).is_err());
        assert!(wmmse_iterate(prob.clone(), p0.scale(2.0), 5, 1e-4).is_err());
        assert!(prob.clone().with_weights(vec![1.0; 3]).is_err());
        assert!(prob.with_weights(vec![1.0, 0.0, 1.0, 1.0]).is_err());
    }
}
