use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::precoders::Scheme;
use crate::quantize::MAX_BITS;

/// Where the per-column distortion fed to the robust precoders comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaMode {
    /// `xi_bar / N` from the RVQ closed form.
    ClosedForm,
    /// Monte Carlo estimate per `(K, B)` cell.
    Empirical,
    Override(f64),
}

impl FromStr for GammaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "closed_form" | "closed-form" => Ok(Self::ClosedForm),
            "empirical" => Ok(Self::Empirical),
            other => {
                let value = other.strip_prefix("override:").unwrap_or(other);
                value
                    .trim()
                    .parse::<f64>()
                    .map(Self::Override)
                    .map_err(|_| Error::config(format!("unknown gamma_mode '{s}'")))
            }
        }
    }
}

impl fmt::Display for GammaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ClosedForm => f.write_str("closed_form"),
            Self::Empirical => f.write_str("empirical"),
            Self::Override(g) => write!(f, "override:{g}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiMode {
    /// RVQ feedback of the channel subspace.
    Quantized,
    /// The transmitter knows the channel subspace exactly; `gamma = 0`.
    Perfect,
}

impl FromStr for CsiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "quantized" => Ok(Self::Quantized),
            "perfect" => Ok(Self::Perfect),
            _ => Err(Error::config(format!("unknown csi_mode '{s}'"))),
        }
    }
}

impl fmt::Display for CsiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Quantized => "quantized",
            Self::Perfect => "perfect",
        })
    }
}

/// Everything a Monte Carlo run needs. `k`, `bits` and `snr_db` are sweep
/// lists; every combination becomes one output cell per scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub k: Vec<usize>,
    pub bits: Vec<u32>,
    pub snr_db: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub trials: usize,
    pub root_seed: u64,
    pub gamma_mode: GammaMode,
    /// Trials behind each empirical `gamma` estimate.
    pub gamma_trials: usize,
    pub csi_mode: CsiMode,
    pub max_iter: usize,
    pub tol: f64,
    pub clamp_gamma: bool,
    /// Allow `M != N K` (user-count sweeps).
    pub overloaded: bool,
    /// Rate weights of the iterative schemes; all ones when absent.
    pub weights: Option<Vec<f64>>,
    /// Worker threads; the global pool when absent.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 8,
            n: 2,
            k: vec![4],
            bits: vec![10],
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            schemes: Scheme::ALL.to_vec(),
            trials: 5000,
            root_seed: 1,
            gamma_mode: GammaMode::ClosedForm,
            gamma_trials: 2000,
            csi_mode: CsiMode::Quantized,
            max_iter: 100,
            tol: 1e-4,
            clamp_gamma: false,
            overloaded: false,
            weights: None,
            workers: None,
        }
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::config(format!("bad value '{s}' for {key}")))
        })
        .collect()
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::config(format!("bad value '{value}' for {key}")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::config(format!("bad boolean '{value}' for {key}"))),
    }
}

impl ExperimentConfig {
    /// Parse a flat `key = value` file on top of the defaults. `#` starts a
    /// comment; lists are comma separated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::config(format!("line {}: {msg}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.to_ascii_lowercase().as_str() {
            "m" => self.m = scalar(key, value)?,
            "n" => self.n = scalar(key, value)?,
            "k" => self.k = list(key, value)?,
            "b" | "bits" => self.bits = list(key, value)?,
            "snr_db" | "snr" => self.snr_db = list(key, value)?,
            "schemes" => self.schemes = list(key, value)?,
            "trials" => self.trials = scalar(key, value)?,
            "root_seed" | "seed" => self.root_seed = scalar(key, value)?,
            "gamma_mode" => self.gamma_mode = value.parse()?,
            "gamma_trials" => self.gamma_trials = scalar(key, value)?,
            "csi_mode" => self.csi_mode = value.parse()?,
            "max_iter" => self.max_iter = scalar(key, value)?,
            "tol" => self.tol = scalar(key, value)?,
            "clamp_gamma" => self.clamp_gamma = flag(key, value)?,
            "overloaded" => self.overloaded = flag(key, value)?,
            "weights" => self.weights = Some(list(key, value)?),
            "workers" => self.workers = Some(scalar(key, value)?),
            _ => return Err(Error::config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Reject inconsistent or infeasible settings before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m <= self.n {
            return Err(Error::config(format!(
                "need M > N >= 1, got M={}, N={}",
                self.m, self.n
            )));
        }
        if self.k.is_empty()
            || self.bits.is_empty()
            || self.snr_db.is_empty()
            || self.schemes.is_empty()
        {
            return Err(Error::config("K, B, snr_db and schemes must be non-empty"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be positive"));
        }
        for &k in &self.k {
            if k == 0 {
                return Err(Error::config("K must be positive"));
            }
            if !self.overloaded && self.m != self.n * k {
                return Err(Error::config(format!(
                    "M = N K is required (M={}, N={}, K={k}); set overloaded = true for user sweeps",
                    self.m, self.n
                )));
            }
        }
        if self.overloaded && self.schemes.contains(&Scheme::Bd) {
            return Err(Error::config(
                "BD is not defined in the overloaded user sweep",
            ));
        }
        if let Some(&b) = self.bits.iter().find(|&&b| b > MAX_BITS) {
            return Err(Error::config(format!(
                "B={b} exceeds the supported maximum of {MAX_BITS}"
            )));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("snr_db values must be finite"));
        }
        if self.max_iter == 0 || !(self.tol >= 0.0) {
            return Err(Error::config(
                "max_iter must be positive and tol non-negative",
            ));
        }
        if self.gamma_mode == GammaMode::Empirical && self.gamma_trials == 0 {
            return Err(Error::config(
                "gamma_trials must be positive in empirical mode",
            ));
        }
        if let GammaMode::Override(g) = self.gamma_mode {
            if !g.is_finite() {
                return Err(Error::config("gamma override must be finite"));
            }
        }
        if let Some(w) = &self.weights {
            if let Some(&k) = self.k.iter().find(|&&k| k != w.len()) {
                return Err(Error::config(format!(
                    "{} weights given for K={k}",
                    w.len()
                )));
            }
            if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::config("weights must be positive"));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers must be positive"));
        }
        Ok(())
    }

    /// The `K` that sets the closed-form distortion exponent; the nominal
    /// `M / N` in overloaded sweeps, where the distortion of a single user's
    /// feedback does not depend on how many users share the cell.
    pub fn distortion_k(&self, k: usize) -> usize {
        if self.overloaded {
            self.m / self.n
        } else {
            k
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_key() {
        let cfg = ExperimentConfig::parse(
            "# comment\nM = 16\nN=2\nK = 8\nB = 4, 6 ,8\nsnr_db = -10, 0.5\nschemes = mmse,RWMMSE\n\
             trials = 12\nroot_seed = 99\ngamma_mode = override:0.25\ngamma_trials = 7\ncsi_mode = perfect\n\
             max_iter = 9\ntol = 1e-6\nclamp_gamma = yes\noverloaded = false\nweights = 1,1,1,1,1,1,1,2\nworkers = 3\n",
        )
        .unwrap();
        assert_eq!((cfg.m, cfg.n, cfg.k.clone()), (16, 2, vec![8]));
        assert_eq!(cfg.bits, vec![4, 6, 8]);
        assert_eq!(cfg.snr_db, vec![-10.0, 0.5]);
        assert_eq!(cfg.schemes, vec![Scheme::Mmse, Scheme::Rwmmse]);
        assert_eq!(
            (cfg.trials, cfg.root_seed, cfg.gamma_trials, cfg.max_iter),
            (12, 99, 7, 9)
        );
        assert_eq!(cfg.gamma_mode, GammaMode::Override(0.25));
        assert_eq!(cfg.csi_mode, CsiMode::Perfect);
        assert_eq!(cfg.tol, 1e-6);
        assert!(cfg.clamp_gamma && !cfg.overloaded);
        assert_eq!(cfg.weights.as_ref().unwrap()[7], 2.0);
        assert_eq!(cfg.workers, Some(3));
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_garbage() {
        assert!(ExperimentConfig::parse("M 8").is_err());
        assert!(ExperimentConfig::parse("colour = red").is_err());
        assert!(ExperimentConfig::parse("schemes = zf").is_err());
        assert!(ExperimentConfig::parse("gamma_mode = sometimes").is_err());
        assert!(ExperimentConfig::parse("trials = -1").is_err());
    }

    #[test]
    fn validation_rules() {
        let mut cfg = ExperimentConfig {
            k: vec![3],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.overloaded = true;
        assert!(
            cfg.validate().is_err(),
            "BD must be rejected when overloaded"
        );
        cfg.schemes.retain(|&s| s != Scheme::Bd);
        cfg.validate().unwrap();
        assert_eq!(cfg.distortion_k(3), 4);
        let bad_weights = ExperimentConfig {
            weights: Some(vec![1.0; 3]),
            ..Default::default()
        };
        assert!(bad_weights.validate().is_err());
        let too_many_bits = ExperimentConfig {
            bits: vec![30],
            ..Default::default()
        };
        assert!(too_many_bits.validate().is_err());
    }

    #[test]
    fn gamma_mode_round_trip() {
        for mode in [
            GammaMode::ClosedForm,
            GammaMode::Empirical,
            GammaMode::Override(0.125),
        ] {
            assert_eq!(mode.to_string().parse::<GammaMode>().unwrap(), mode);
        }
        assert_eq!(
            "0.3".parse::<GammaMode>().unwrap(),
            GammaMode::Override(0.3)
        );
    }
}
