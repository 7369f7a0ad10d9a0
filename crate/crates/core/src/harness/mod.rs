//! Deterministic, trial-parallel Monte Carlo driver and figure recipes.
//!
//! Random streams are keyed by `(purpose, K, [B,] trial, user)` under the
//! root seed, so channels are shared across every `B`, SNR and scheme of a
//! run and results do not depend on the number of worker threads.

mod config;
mod csv;
mod recipes;

use std::collections::HashMap;

use log::info;
use rayon::prelude::*;

pub use config::{CsiMode, ExperimentConfig, GammaMode};
pub use csv::{
    emit_csv, fmt_sig, format_records, parse_records, record_row, write_text, RATE_HEADER,
    SIG_DIGITS,
};
pub use recipes::{
    convergence_trace, figure_recipe, run_figure, ConvergencePoint, ConvergenceReport,
    FigureOutput, FIGURES,
};

use crate::channel::{gen_channel, GammaPolicy, UserChannel};
use crate::error::{Error, Result};
use crate::evaluate::{sum_rate, RateRecord};
use crate::numerics::{CMatrix, SeedStream};
use crate::precoders::{
    bd, concat_blocks, mmse, mrt, rmmse, wmmse_iterate, PrecoderOutput, Scheme, WmmseProblem,
};
use crate::quantize::{distortion_closed, distortion_empirical, quantize_rvq};
use crate::statistics::mean_and_stderr;

const TAG_CHANNEL: u64 = 1;
const TAG_CODEBOOK: u64 = 2;
const TAG_GAMMA: u64 = 3;

pub fn snr_to_rho(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

/// Noise variance of every experiment.
pub const SIGMA2: f64 = 1.0;

pub(crate) fn root_stream(cfg: &ExperimentConfig) -> SeedStream {
    SeedStream::new(cfg.root_seed, 0)
}

/// True channels of trial `t` in a `K`-user cell.
pub fn trial_channels(
    cfg: &ExperimentConfig,
    k_users: usize,
    t: usize,
) -> Result<Vec<UserChannel>> {
    let root = root_stream(cfg);
    (0..k_users)
        .map(|u| {
            gen_channel(
                cfg.m,
                cfg.n,
                root.child(&[TAG_CHANNEL, k_users as u64, t as u64, u as u64]),
            )
        })
        .collect()
}

/// Subspaces known at the transmitter for one trial.
pub fn feedback(
    cfg: &ExperimentConfig,
    channels: &[UserChannel],
    bits: u32,
    t: usize,
) -> Result<Vec<CMatrix>> {
    let root = root_stream(cfg);
    let k_users = channels.len() as u64;
    channels
        .iter()
        .enumerate()
        .map(|(u, ch)| match cfg.csi_mode {
            CsiMode::Perfect => Ok(ch.h_sub.clone()),
            CsiMode::Quantized => {
                let s = root.child(&[TAG_CODEBOOK, k_users, bits as u64, t as u64, u as u64]);
                Ok(quantize_rvq(&ch.h_sub, bits, s)?.h_hat)
            }
        })
        .collect()
}

/// Distortion used by the robust schemes in one `(K, B)` cell.
pub fn cell_gamma(cfg: &ExperimentConfig, k_users: usize, bits: u32) -> Result<f64> {
    if cfg.csi_mode == CsiMode::Perfect {
        return Ok(0.0);
    }
    let k_nom = cfg.distortion_k(k_users);
    match cfg.gamma_mode {
        GammaMode::ClosedForm => Ok(distortion_closed(cfg.m, cfg.n, k_nom, bits)?.gamma),
        GammaMode::Override(g) => Ok(g),
        GammaMode::Empirical => {
            let s = root_stream(cfg).child(&[TAG_GAMMA, k_users as u64, bits as u64]);
            Ok(distortion_empirical(cfg.m, cfg.n, k_nom, bits, cfg.gamma_trials, s)?.gamma)
        }
    }
}

fn policy(cfg: &ExperimentConfig) -> GammaPolicy {
    if cfg.clamp_gamma {
        GammaPolicy::Clamp
    } else {
        GammaPolicy::Strict
    }
}

fn wmmse_problem(
    cfg: &ExperimentConfig,
    scheme: Scheme,
    h_hat: &[CMatrix],
    gamma: f64,
    rho: f64,
) -> Result<WmmseProblem> {
    let prob = match scheme {
        Scheme::Wmmse => {
            let g = concat_blocks(h_hat)?.scale((cfg.m as f64).sqrt());
            WmmseProblem::conventional(g, cfg.n, rho, SIGMA2)?
        }
        _ => WmmseProblem::robust(h_hat, gamma, rho, SIGMA2, policy(cfg))?,
    };
    match &cfg.weights {
        Some(w) => prob.with_weights(w.clone()),
        None => Ok(prob),
    }
}

/// Precoder of one scheme from the transmitter-side subspaces.
pub fn design(
    cfg: &ExperimentConfig,
    scheme: Scheme,
    h_hat: &[CMatrix],
    gamma: f64,
    rho: f64,
) -> Result<PrecoderOutput> {
    match scheme {
        Scheme::Mrt => mrt(h_hat, rho),
        Scheme::Bd => bd(h_hat, rho),
        Scheme::Mmse => mmse(
            &concat_blocks(h_hat)?.scale((cfg.m as f64).sqrt()),
            cfg.n,
            rho,
            SIGMA2,
        ),
        Scheme::Rmmse => rmmse(h_hat, gamma, rho, SIGMA2, policy(cfg)),
        Scheme::Wmmse | Scheme::Rwmmse => {
            let prob = wmmse_problem(cfg, scheme, h_hat, gamma, rho)?;
            let p0 = prob.mrt_init()?;
            Ok(wmmse_iterate(prob, p0, cfg.max_iter, cfg.tol)?.output)
        }
    }
}

fn pool(workers: Option<usize>) -> Result<Option<rayon::ThreadPool>> {
    workers
        .map(|w| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::config(format!("cannot start {w} workers: {e}")))
        })
        .transpose()
}

/// Run `f` on the configured worker pool.
pub(crate) fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T> {
    Ok(match pool(workers)? {
        Some(p) => p.install(f),
        None => f(),
    })
}

/// Sum rates of every `(B, SNR, scheme)` combination in one trial, in
/// `B`-major, then SNR, then scheme order.
fn trial_rates(
    cfg: &ExperimentConfig,
    k_users: usize,
    gammas: &[f64],
    t: usize,
) -> Result<Vec<f64>> {
    let channels = trial_channels(cfg, k_users, t)?;
    let truth: Vec<CMatrix> = channels.iter().map(|c| c.h.clone()).collect();
    let mut rates = Vec::with_capacity(cfg.bits.len() * cfg.snr_db.len() * cfg.schemes.len());
    for (bi, &bits) in cfg.bits.iter().enumerate() {
        let h_hat = feedback(cfg, &channels, bits, t)?;
        for &snr in &cfg.snr_db {
            let rho = snr_to_rho(snr);
            for &scheme in &cfg.schemes {
                let out = design(cfg, scheme, &h_hat, gammas[bi], rho)?;
                rates.push(sum_rate(&truth, &out, SIGMA2)?);
            }
        }
    }
    Ok(rates)
}

/// Mean sum rate and its standard error for every cell of the sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RateRecord>> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut gamma_cache: HashMap<(usize, u32), f64> = HashMap::new();
    for &k_users in &cfg.k {
        let gammas = cfg
            .bits
            .iter()
            .map(|&b| {
                if let Some(&g) = gamma_cache.get(&(cfg.distortion_k(k_users), b)) {
                    return Ok(g);
                }
                let g = with_workers(cfg.workers, || cell_gamma(cfg, k_users, b))??;
                gamma_cache.insert((cfg.distortion_k(k_users), b), g);
                Ok(g)
            })
            .collect::<Result<Vec<f64>>>()?;
        info!(
            "K={k_users}: gamma per B = {gammas:?}, {} trials",
            cfg.trials
        );
        let per_trial: Vec<Vec<f64>> = with_workers(cfg.workers, || {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| trial_rates(cfg, k_users, &gammas, t))
                .collect::<Result<Vec<_>>>()
        })??;
        let mut idx = 0;
        for &b in &cfg.bits {
            for &snr in &cfg.snr_db {
                for &scheme in &cfg.schemes {
                    let xs: Vec<f64> = per_trial.iter().map(|r| r[idx]).collect();
                    let (mean, stderr) = mean_and_stderr(&xs);
                    records.push(RateRecord {
                        scheme: scheme.tag().to_string(),
                        snr_db: snr,
                        b,
                        m: cfg.m,
                        n: cfg.n,
                        k: k_users,
                        trials: cfg.trials,
                        sum_rate_mean: mean,
                        sum_rate_stderr: stderr,
                        seed: cfg.root_seed,
                    });
                    idx += 1;
                }
            }
        }
    }
    Ok(records)
}

/// Record of `scheme` at one operating point, if present.
pub fn find_record<'a>(
    records: &'a [RateRecord],
    scheme: &str,
    snr_db: f64,
    b: u32,
    k: usize,
) -> Option<&'a RateRecord> {
    records
        .iter()
        .find(|r| r.scheme == scheme && r.snr_db == snr_db && r.b == b && r.k == k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            m: 4,
            n: 2,
            k: vec![2],
            bits: vec![3, 5],
            snr_db: vec![0.0, 20.0],
            trials: 6,
            ..Default::default()
        }
    }

    #[test]
    fn one_record_per_cell() {
        let cfg = small();
        let recs = run_experiment(&cfg).unwrap();
        assert_eq!(recs.len(), 2 * 2 * 6);
        assert!(recs
            .iter()
            .all(|r| r.sum_rate_mean > 0.0 && r.sum_rate_stderr >= 0.0 && r.trials == 6));
        assert!(find_record(&recs, "rwmmse", 20.0, 5, 2).is_some());
    }

    #[test]
    fn config_errors_come_first() {
        let cfg = ExperimentConfig {
            k: vec![2, 3],
            overloaded: true,
            ..small()
        };
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn perfect_csi_uses_zero_distortion() {
        let cfg = ExperimentConfig {
            csi_mode: CsiMode::Perfect,
            ..small()
        };
        assert_eq!(cell_gamma(&cfg, 2, 5).unwrap(), 0.0);
        let ch = trial_channels(&cfg, 2, 0).unwrap();
        let fb = feedback(&cfg, &ch, 5, 0).unwrap();
        assert_eq!(fb[0], ch[0].h_sub);
    }

    #[test]
    fn channels_shared_across_bits() {
        let cfg = small();
        let a = trial_channels(&cfg, 2, 3).unwrap();
        let b = trial_channels(&cfg, 2, 3).unwrap();
        assert_eq!(a[1].h, b[1].h);
        let c = trial_channels(&cfg, 2, 4).unwrap();
        assert_ne!(a[1].h, c[1].h);
    }

    #[test]
    fn snr_conversion() {
        assert_eq!(snr_to_rho(0.0), 1.0);
        assert!((snr_to_rho(30.0) - 1000.0).abs() < 1e-9);
    }
}
