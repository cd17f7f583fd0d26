//! Argument parsing and exit-code mapping.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, TStar};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "prognos", version, about = "Failure-mode diagnosis and remaining-life prediction from multi-sensor degradation signals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded simulation dataset with ground truth.
    Simulate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the offline mixture model: failure-mode labels and sensor selection.
    FitOffline {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Choose (lambda, alpha) by k-fold cross-validation.
    Cv {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Diagnose and predict remaining life for the test units of a data directory.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// One observation time for every test unit.
        #[arg(long, conflicts_with = "percentile")]
        t_star: Option<f64>,
        /// Life percentages (comma-separated or repeated); needs test_ttf.csv.
        #[arg(long, value_delimiter = ',')]
        percentile: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Relative errors and summaries of a prediction run.
    Evaluate {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Convert C-MAPSS text files into the canonical CSV layout.
    IngestCmapss {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        rul: PathBuf,
        /// Keep raw sensor values instead of z-normalizing.
        #[arg(long)]
        no_normalize: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Markdown summary and plot tables for a directory of runs.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Defaults to `<run>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Applies overrides and re-validates.
fn checked(cfg: RunConfig) -> CliResult<RunConfig> {
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { out, common } => {
            let cfg = checked(load(&common)?)?;
            commands::simulate(&cfg, out)?;
        }
        Command::FitOffline { data, k, lambda, alpha, out, common } => {
            let mut cfg = load(&common)?;
            if let Some(k) = k {
                cfg.k = k;
            }
            if let Some(l) = lambda {
                cfg.offline.lambda = l;
            }
            if let Some(a) = alpha {
                cfg.offline.alpha = a;
            }
            commands::fit_offline(&checked(cfg)?, data, out)?;
        }
        Command::Cv { data, folds, k, out, common } => {
            let mut cfg = load(&common)?;
            if let Some(f) = folds {
                cfg.cv.folds = f;
            }
            if let Some(k) = k {
                cfg.k = k;
            }
            commands::cv(&checked(cfg)?, data, out)?;
        }
        Command::Predict { model, data, t_star, percentile, out, common } => {
            let cfg = checked(load(&common)?)?;
            let when = match (t_star, percentile.is_empty()) {
                (Some(t), _) => TStar::Fixed(t),
                (None, false) => TStar::Percentiles(percentile),
                (None, true) => TStar::LastObserved,
            };
            commands::predict(&cfg, model, data, when, out)?;
        }
        Command::Evaluate { preds, truth, out, common } => {
            let cfg = checked(load(&common)?)?;
            commands::evaluate(&cfg, &preds, &truth, out)?;
        }
        Command::IngestCmapss { train, test, rul, no_normalize, out, common } => {
            let mut cfg = load(&common)?;
            if no_normalize {
                cfg.cmapss.normalize = false;
            }
            commands::ingest_cmapss(&checked(cfg)?, &train, &test, &rul, out)?;
        }
        Command::Report { run, out, common } => {
            let cfg = checked(load(&common)?)?;
            commands::report(&cfg, &run, out)?;
        }
    }
    Ok(())
}

/// Parses, runs and returns the process exit code. Failures print a
/// readable line and then a JSON record on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::usage(e.kind().to_string());
            eprintln!("{}", err.json_record());
            return err.kind.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("prognos: {e}");
            eprintln!("{}", e.json_record());
            e.kind.exit_code()
        }
    }
}
