use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use lfmimo::evaluate::{flops_rmmse, flops_rwmmse_iter};
use lfmimo::harness::{
    emit_csv, figure_recipe, format_records, run_experiment, run_figure, write_text,
    ExperimentConfig,
};
use lfmimo::numerics::{gaussian_matrix, identity, Complex64, SeedStream};
use lfmimo::statistics::{verify_lemma2, verify_lemma4, IdentityReport};
use lfmimo::{Error, Result};

#[derive(Parser)]
#[command(
    name = "lfmimo",
    version,
    about = "Limited-feedback MU-MIMO precoding experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Monte Carlo trials per cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Root seed of all random streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated per-user rate weights for the iterative schemes.
    #[arg(long)]
    weights: Option<String>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.root_seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        if let Some(w) = &self.weights {
            cfg.set("weights", w)?;
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep from a key = value config file or a figure recipe.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        figure: Option<String>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Regenerate the data behind one figure (fig1 .. fig7).
    Figure {
        name: String,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Monte Carlo checks of the expectation identities.
    Verify {
        #[arg(long, default_value_t = 20_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flop counts of the robust precoders.
    Flops {
        #[arg(long, default_value_t = 8)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        k: usize,
    },
}

fn load_config(config: Option<&Path>, figure: Option<&str>) -> Result<ExperimentConfig> {
    match (config, figure) {
        (Some(_), Some(_)) => Err(Error::Config(
            "--config and --figure are mutually exclusive".into(),
        )),
        (Some(path), None) => ExperimentConfig::from_file(path),
        (None, Some(name)) => figure_recipe(name),
        (None, None) => Err(Error::Config("run needs --config or --figure".into())),
    }
}

fn verify(trials: usize, seed: u64) -> Result<Vec<IdentityReport>> {
    let root = SeedStream::new(seed, 0);
    let mut rng = root.child(&[0]).rng();
    let x_random = gaussian_matrix(&mut rng, 6, 6, 1.0);
    let x_diag = DMatrix::from_fn(4, 4, |i, j| {
        if i == j {
            Complex64::new(1.0 + i as f64, 0.5)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    Ok(vec![
        verify_lemma2(&[1.0, 1.0], trials, root.child(&[1]))?,
        verify_lemma2(&[2.0, 0.0], trials, root.child(&[2]))?,
        verify_lemma2(&[0.4, 1.3, 2.3], trials, root.child(&[3]))?,
        verify_lemma4(
            &identity(8),
            &DMatrix::from_element(2, 8, 1.0 / 8.0),
            trials,
            root.child(&[4]),
        )?,
        verify_lemma4(
            &x_diag,
            &DMatrix::from_fn(2, 4, |i, j| 0.1 * (1 + i + j) as f64),
            trials,
            root.child(&[5]),
        )?,
        verify_lemma4(
            &x_random,
            &DMatrix::from_fn(3, 6, |i, j| 0.05 * (1 + i * j) as f64),
            trials,
            root.child(&[6]),
        )?,
    ])
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            figure,
            out,
            overrides,
        } => {
            let mut cfg = load_config(config.as_deref(), figure.as_deref())?;
            overrides.apply(&mut cfg)?;
            let records = match figure.as_deref() {
                Some(name) => run_figure(name, &cfg)?.records,
                None => run_experiment(&cfg)?,
            };
            match out {
                Some(path) => emit_csv(&records, &path)?,
                None => print!("{}", format_records(&records)),
            }
        }
        Command::Figure {
            name,
            out,
            overrides,
        } => {
            let mut cfg = figure_recipe(&name)?;
            overrides.apply(&mut cfg)?;
            let result = run_figure(&name, &cfg)?;
            let main = out.join(format!("{name}.csv"));
            if !result.records.is_empty() {
                emit_csv(&result.records, &main)?;
                println!("{}", main.display());
            }
            if let Some((suffix, text)) = &result.extra {
                let side = out.join(format!("{name}_{suffix}.csv"));
                write_text(&side, text)?;
                println!("{}", side.display());
            }
        }
        Command::Verify { trials, seed, out } => {
            let reports = verify(trials, seed)?;
            let mut table = format!("{}\n", IdentityReport::CSV_HEADER);
            for r in &reports {
                table.push_str(&r.csv_row());
                table.push('\n');
            }
            print!("{table}");
            if let Some(path) = out {
                write_text(&path, &table)?;
            }
            let failed: Vec<&str> = reports
                .iter()
                .filter(|r| !r.pass)
                .map(|r| r.name.as_str())
                .collect();
            if !failed.is_empty() {
                return Err(Error::Numerical(format!(
                    "identity checks failed: {}",
                    failed.join(" ")
                )));
            }
        }
        Command::Flops { m, n, k } => {
            if m == 0 || n == 0 || k == 0 {
                return Err(Error::Config("M, N and K must be positive".into()));
            }
            let it = flops_rwmmse_iter(m, n, k);
            println!("M,N,K,rmmse,rwmmse_filter,rwmmse_weights,rwmmse_precoder,rwmmse_iteration");
            println!(
                "{m},{n},{k},{},{},{},{},{}",
                flops_rmmse(m, n, k),
                it.filter,
                it.weights,
                it.precoder,
                it.total()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} msg={:?}", e.kind(), e.to_string());
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use lfmimo::harness::FIGURES;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn figure_names_resolve() {
        for name in FIGURES {
            assert!(load_config(None, Some(name)).is_ok());
        }
        assert!(load_config(None, None).is_err());
    }
}
