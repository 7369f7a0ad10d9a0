use rayon::prelude::*;

use super::{
    cell_gamma, design, feedback, fmt_sig, run_experiment, snr_to_rho, trial_channels,
    with_workers, wmmse_problem, CsiMode, ExperimentConfig, SIGMA2, SIG_DIGITS,
};
use crate::error::{Error, Result};
use crate::evaluate::{bound_high, bound_low, sum_rate, RateRecord};
use crate::numerics::{CMatrix, SeedStream};
use crate::precoders::{Scheme, WmmseSolver};
use crate::statistics::{gap_vs_empirical, mean_and_stderr, FeedbackSource};

pub const FIGURES: [&str; 8] = [
    "fig1", "fig2", "fig3", "fig4", "fig5a", "fig5b", "fig6", "fig7",
];

/// Iterations traced for the convergence figure.
const TRACE_ITERATIONS: usize = 30;
/// Relative precoder change counted as converged in the trace.
const TRACE_THRESHOLD: f64 = 1e-3;

fn snr_range(lo: i32, hi: i32, step: usize) -> Vec<f64> {
    (lo..=hi).step_by(step).map(f64::from).collect()
}

/// Canned configuration of one figure.
pub fn figure_recipe(name: &str) -> Result<ExperimentConfig> {
    let base = ExperimentConfig::default();
    let cfg = match name {
        "fig1" => ExperimentConfig {
            snr_db: snr_range(-10, 40, 5),
            schemes: vec![Scheme::Mrt, Scheme::Bd, Scheme::Mmse],
            ..base
        },
        "fig2" => ExperimentConfig {
            bits: vec![4, 6, 8, 10],
            schemes: vec![Scheme::Rmmse],
            ..base
        },
        "fig3" => ExperimentConfig {
            csi_mode: CsiMode::Perfect,
            snr_db: snr_range(0, 30, 5),
            ..base
        },
        "fig4" => ExperimentConfig {
            snr_db: vec![30.0],
            schemes: vec![Scheme::Rmmse, Scheme::Rwmmse],
            ..base
        },
        "fig5a" => ExperimentConfig {
            snr_db: snr_range(0, 30, 5),
            ..base
        },
        "fig5b" => ExperimentConfig {
            m: 16,
            k: vec![8],
            snr_db: snr_range(0, 30, 5),
            ..base
        },
        "fig6" => ExperimentConfig {
            bits: vec![2, 4, 6, 8, 10, 12],
            snr_db: vec![10.0, 30.0],
            ..base
        },
        "fig7" => ExperimentConfig {
            k: (2..=8).collect(),
            snr_db: vec![10.0],
            schemes: Scheme::ALL
                .into_iter()
                .filter(|&s| s != Scheme::Bd)
                .collect(),
            overloaded: true,
            ..base
        },
        _ => {
            return Err(Error::config(format!(
                "unknown figure '{name}' (expected one of {})",
                FIGURES.join(", ")
            )))
        }
    };
    Ok(cfg)
}

/// Rate records plus the figure-specific side table, if any.
#[derive(Debug, Clone)]
pub struct FigureOutput {
    pub name: String,
    pub records: Vec<RateRecord>,
    /// `(file suffix, CSV text)`.
    pub extra: Option<(String, String)>,
}

pub fn run_figure(name: &str, cfg: &ExperimentConfig) -> Result<FigureOutput> {
    figure_recipe(name)?;
    let (records, extra) = match name {
        "fig1" => (with_bounds(cfg, run_experiment(cfg)?)?, None),
        "fig2" => (Vec::new(), Some(("gap".to_string(), gap_table(cfg)?))),
        "fig4" => {
            let snr = *cfg
                .snr_db
                .first()
                .ok_or_else(|| Error::config("fig4 needs one SNR"))?;
            let report = convergence_trace(cfg, snr, TRACE_ITERATIONS, TRACE_THRESHOLD)?;
            (
                report.records(cfg, snr),
                Some(("convergence".to_string(), report.csv())),
            )
        }
        _ => (run_experiment(cfg)?, None),
    };
    Ok(FigureOutput {
        name: name.to_string(),
        records,
        extra,
    })
}

/// Append sum-rate versions of the low- and high-SNR MMSE approximations.
fn with_bounds(cfg: &ExperimentConfig, mut records: Vec<RateRecord>) -> Result<Vec<RateRecord>> {
    for &k in &cfg.k {
        for &b in &cfg.bits {
            let gamma = cell_gamma(cfg, k, b)?;
            for &snr in &cfg.snr_db {
                let rho = snr_to_rho(snr);
                for (tag, v) in [
                    ("bound_low", bound_low(rho, k, cfg.n, gamma)),
                    ("bound_high", bound_high(rho, k, cfg.n, gamma)),
                ] {
                    records.push(RateRecord {
                        scheme: tag.to_string(),
                        snr_db: snr,
                        b,
                        m: cfg.m,
                        n: cfg.n,
                        k,
                        trials: cfg.trials,
                        sum_rate_mean: k as f64 * v,
                        sum_rate_stderr: 0.0,
                        seed: cfg.root_seed,
                    });
                }
            }
        }
    }
    Ok(records)
}

fn gap_table(cfg: &ExperimentConfig) -> Result<String> {
    let mut out =
        String::from("M,N,K,B,trials,gap,gamma_hat,cross_chi2_per_dof,omega_mean,omega_bound\n");
    for m in [cfg.m, 2 * cfg.m] {
        let k = m / cfg.n;
        for &b in &cfg.bits {
            let stream = SeedStream::new(cfg.root_seed, 0).child(&[4, m as u64, b as u64]);
            let r = with_workers(cfg.workers, || {
                gap_vs_empirical(m, cfg.n, k, FeedbackSource::Rvq(b), cfg.trials, stream)
            })??;
            out.push_str(&format!(
                "{m},{},{k},{b},{},{},{},{},{},{}\n",
                cfg.n,
                cfg.trials,
                fmt_sig(r.gap, SIG_DIGITS),
                fmt_sig(r.gamma_hat, SIG_DIGITS),
                fmt_sig(r.cross_chi2_per_dof, SIG_DIGITS),
                fmt_sig(r.omega_mean, SIG_DIGITS),
                fmt_sig(r.omega_bound(), SIG_DIGITS)
            ));
        }
    }
    Ok(out)
}

/// Mean robust WMMSE sum rate after each iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePoint {
    /// 0 is the MRT initialization.
    pub iteration: usize,
    pub sum_rate_mean: f64,
    pub sum_rate_stderr: f64,
    /// Mean relative precoder change of this iteration (0 at iteration 0).
    pub rel_change_mean: f64,
    /// Fraction of trials whose relative change has dropped below the
    /// threshold at or before this iteration.
    pub converged_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub trials: usize,
    pub b: u32,
    pub k: usize,
    pub threshold: f64,
    pub points: Vec<ConvergencePoint>,
    pub rmmse_mean: f64,
    pub rmmse_stderr: f64,
    /// First iteration (1-based) of each trial below the threshold.
    pub first_below: Vec<Option<usize>>,
}

impl ConvergenceReport {
    pub fn final_point(&self) -> &ConvergencePoint {
        self.points.last().expect("at least the initial point")
    }

    /// Share of trials that met the threshold within `iterations`.
    pub fn fraction_within(&self, iterations: usize) -> f64 {
        let hits = self
            .first_below
            .iter()
            .filter(|f| f.is_some_and(|i| i <= iterations))
            .count();
        hits as f64 / self.first_below.len() as f64
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(
            "iteration,rwmmse_sum_rate_mean,rwmmse_sum_rate_stderr,rmmse_sum_rate_mean,rmmse_sum_rate_stderr,rel_change_mean,converged_fraction\n",
        );
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.iteration,
                fmt_sig(p.sum_rate_mean, SIG_DIGITS),
                fmt_sig(p.sum_rate_stderr, SIG_DIGITS),
                fmt_sig(self.rmmse_mean, SIG_DIGITS),
                fmt_sig(self.rmmse_stderr, SIG_DIGITS),
                fmt_sig(p.rel_change_mean, SIG_DIGITS),
                fmt_sig(p.converged_fraction, SIG_DIGITS)
            ));
        }
        out
    }

    fn records(&self, cfg: &ExperimentConfig, snr_db: f64) -> Vec<RateRecord> {
        let last = self.final_point();
        [
            ("rmmse", self.rmmse_mean, self.rmmse_stderr),
            ("rwmmse", last.sum_rate_mean, last.sum_rate_stderr),
        ]
        .into_iter()
        .map(|(tag, mean, se)| RateRecord {
            scheme: tag.to_string(),
            snr_db,
            b: self.b,
            m: cfg.m,
            n: cfg.n,
            k: self.k,
            trials: self.trials,
            sum_rate_mean: mean,
            sum_rate_stderr: se,
            seed: cfg.root_seed,
        })
        .collect()
    }
}

struct TraceTrial {
    rates: Vec<f64>,
    changes: Vec<f64>,
    rmmse: f64,
}

/// Run the robust iteration for exactly `iterations` steps on every trial
/// of the first `(K, B)` cell, recording the sum rate after each step.
pub fn convergence_trace(
    cfg: &ExperimentConfig,
    snr_db: f64,
    iterations: usize,
    threshold: f64,
) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let (k, b) = (cfg.k[0], cfg.bits[0]);
    let gamma = cell_gamma(cfg, k, b)?;
    let rho = snr_to_rho(snr_db);
    let trace = |t: usize| -> Result<TraceTrial> {
        let channels = trial_channels(cfg, k, t)?;
        let truth: Vec<CMatrix> = channels.iter().map(|c| c.h.clone()).collect();
        let h_hat = feedback(cfg, &channels, b, t)?;
        let rmmse = sum_rate(
            &truth,
            &design(cfg, Scheme::Rmmse, &h_hat, gamma, rho)?,
            SIGMA2,
        )?;
        let prob = wmmse_problem(cfg, Scheme::Rwmmse, &h_hat, gamma, rho)?;
        let p0 = prob.mrt_init()?;
        let mut solver = WmmseSolver::new(prob, p0)?;
        let mut rates = vec![sum_rate(&truth, &solver.output(), SIGMA2)?];
        let mut changes = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            changes.push(solver.step()?.rel_change);
            rates.push(sum_rate(&truth, &solver.output(), SIGMA2)?);
        }
        Ok(TraceTrial {
            rates,
            changes,
            rmmse,
        })
    };
    let trials: Vec<TraceTrial> = with_workers(cfg.workers, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(trace)
            .collect::<Result<Vec<_>>>()
    })??;

    let first_below: Vec<Option<usize>> = trials
        .iter()
        .map(|tr| {
            tr.changes
                .iter()
                .position(|&c| c < threshold)
                .map(|i| i + 1)
        })
        .collect();
    let points = (0..=iterations)
        .map(|i| {
            let rates: Vec<f64> = trials.iter().map(|tr| tr.rates[i]).collect();
            let (mean, se) = mean_and_stderr(&rates);
            let rel_change_mean = if i == 0 {
                0.0
            } else {
                mean_and_stderr(
                    &trials
                        .iter()
                        .map(|tr| tr.changes[i - 1])
                        .collect::<Vec<_>>(),
                )
                .0
            };
            let hits = first_below
                .iter()
                .filter(|f| f.is_some_and(|j| j <= i))
                .count();
            ConvergencePoint {
                iteration: i,
                sum_rate_mean: mean,
                sum_rate_stderr: se,
                rel_change_mean,
                converged_fraction: hits as f64 / trials.len() as f64,
            }
        })
        .collect();
    let (rmmse_mean, rmmse_stderr) =
        mean_and_stderr(&trials.iter().map(|tr| tr.rmmse).collect::<Vec<_>>());
    Ok(ConvergenceReport {
        trials: cfg.trials,
        b,
        k,
        threshold,
        points,
        rmmse_mean,
        rmmse_stderr,
        first_below,
    })
}
