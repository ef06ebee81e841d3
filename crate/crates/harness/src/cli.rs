//! The `sosp` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad input, 3 internal
//! inconsistency (a reported descent direction did not decrease the risk,
//! or a self-test failed).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use sosp_core::{sosp_check, Activation, Dims, LogCoshLoss, LossModel, SquaredLoss, TesterConfig};

use crate::adam::{adam_train, AdamConfig};
use crate::construct::{construct_boundary_fosp, ConstructionSpec, SlopePlacement};
use crate::datagen::{generate_dataset, init_params};
use crate::io::{read_dataset, read_json, read_params, write_dataset, write_json, write_params, IoError, ReportFile};
use crate::stats::{run_many, Aggregate, RunConfig};
use crate::suite::{is_internal, run_all, Budget};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Environment variable that overrides every `--seed`.
pub const SEED_VAR: &str = "SOSP_SEED";

#[derive(Parser, Debug)]
#[command(name = "sosp", version, about = "Local-minimum and second-order stationarity tests for one-hidden-layer ReLU-like networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossChoice {
    Squared,
    LogCosh,
}

impl LossChoice {
    fn model(self) -> &'static dyn LossModel {
        match self {
            LossChoice::Squared => &SquaredLoss,
            LossChoice::LogCosh => &LogCoshLoss,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Placement {
    Interior,
    Upper,
    Lower,
    DoublyFlat,
}

impl From<Placement> for SlopePlacement {
    fn from(p: Placement) -> Self {
        match p {
            Placement::Interior => SlopePlacement::Interior,
            Placement::Upper => SlopePlacement::Upper,
            Placement::Lower => SlopePlacement::Lower,
            Placement::DoublyFlat => SlopePlacement::DoublyFlat,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify a point as local minimum, SOSP, or give a descent direction.
    Check {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Report file; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "squared")]
        loss: LossChoice,
        /// JSON tester configuration; missing fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Snap samples with |preactivation| below this onto the boundary.
        #[arg(long)]
        boundary_tol: Option<f64>,
    },
    /// Train with full-batch Adam and save the parameters.
    Train {
        /// Existing dataset; a standard-normal one is generated otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        dx: usize,
        #[arg(long, default_value_t = 1)]
        dh: usize,
        #[arg(long, default_value_t = 1)]
        dy: usize,
        #[arg(long, default_value_t = 1000)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        decay_period: Option<usize>,
        /// Negative slope of a leaky activation; plain ReLU when omitted.
        #[arg(long)]
        leak: Option<f64>,
        #[arg(long)]
        params_out: PathBuf,
        /// Where to write the generated dataset.
        #[arg(long)]
        data_out: Option<PathBuf>,
    },
    /// Boundary statistics of trained networks over several seeds.
    Stats {
        #[arg(long, default_value_t = 10)]
        dx: usize,
        #[arg(long, default_value_t = 1)]
        dh: usize,
        #[arg(long, default_value_t = 1000)]
        m: usize,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        decay_period: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON run configuration; flags given explicitly override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Aggregate with per-run reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a point with an exact boundary sample that passes the first-order tests.
    Synth {
        #[arg(long, default_value_t = 3)]
        dx: usize,
        #[arg(long, default_value_t = 2)]
        dh: usize,
        #[arg(long, default_value_t = 1)]
        dy: usize,
        #[arg(long, default_value_t = 12)]
        m: usize,
        #[arg(long, value_enum, default_value = "interior")]
        placement: Placement,
        /// Size of the loss gradients; 0 gives a perfect fit.
        #[arg(long, default_value_t = 0.5)]
        residual: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        params_out: PathBuf,
        #[arg(long)]
        data_out: PathBuf,
    },
    /// Run the oracle checks with reduced sizes.
    Selftest {
        /// Use the full instance counts.
        #[arg(long)]
        full: bool,
    },
}

enum Failure {
    Input(String),
    Internal(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<sosp_core::Error> for Failure {
    fn from(e: sosp_core::Error) -> Self {
        if is_internal(&e) {
            Failure::Internal(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Input(format!("{SEED_VAR}={v} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: u64) -> Result<u64, Failure> {
    Ok(env_seed()?.unwrap_or(flag))
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            EXIT_INTERNAL
        }
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Check {
            params,
            data,
            out,
            loss,
            config,
            seed,
            boundary_tol,
        } => {
            let params = read_params(&params)?;
            let data = read_dataset(&data)?;
            let mut cfg: TesterConfig = match config {
                Some(path) => read_json(&path)?,
                None => TesterConfig::default(),
            };
            if let Some(s) = env_seed()?.or(seed) {
                cfg.seed = s;
            }
            if let Some(t) = boundary_tol {
                cfg.boundary_tol = t;
            }
            let verdict = sosp_check(&params, &data, loss.model(), &cfg)?;
            let report = ReportFile::from_verdict(&verdict);
            match out {
                Some(path) => write_json(&path, &report)?,
                None => println!(
                    "{}",
                    serde_json::to_string_pretty(&report).map_err(|e| Failure::Internal(e.to_string()))?
                ),
            }
            eprintln!("{}", report.kind);
            Ok(())
        }
        Command::Train {
            data,
            dx,
            dh,
            dy,
            m,
            seed,
            iters,
            lr,
            decay_period,
            leak,
            params_out,
            data_out,
        } => {
            let seed = resolve_seed(seed)?;
            let activation = match leak {
                Some(s) => Activation::leaky(s)?,
                None => Activation::relu(),
            };
            let data = match data {
                Some(path) => read_dataset(&path)?,
                None => generate_dataset(dx, dy, m, seed.wrapping_mul(2))?,
            };
            let dims = Dims::new(data.input_dim(), dh, data.output_dim());
            let mut adam = AdamConfig::default();
            if let Some(n) = iters {
                adam.iterations = n;
            }
            if let Some(r) = lr {
                adam.learning_rate = r;
            }
            if let Some(p) = decay_period {
                adam.decay_period = p;
            }
            adam.validate()?;
            let start = init_params(dims, activation, seed.wrapping_mul(2).wrapping_add(1))?;
            let trained = adam_train(&start, &data, &SquaredLoss, &adam)?;
            write_params(&params_out, &trained.params)?;
            if let Some(path) = data_out {
                write_dataset(&path, &data)?;
            }
            eprintln!(
                "final risk {:e} after {} iterations",
                trained.risk_trace.last().copied().unwrap_or(f64::NAN),
                adam.iterations
            );
            Ok(())
        }
        Command::Stats {
            dx,
            dh,
            m,
            runs,
            iters,
            decay_period,
            seed,
            config,
            out,
        } => {
            let mut cfg: RunConfig = match config {
                Some(path) => read_json(&path)?,
                None => RunConfig {
                    input_dim: dx,
                    hidden: dh,
                    samples: m,
                    ..RunConfig::default()
                },
            };
            if let Some(n) = iters {
                cfg.adam.iterations = n;
            }
            if let Some(p) = decay_period {
                cfg.adam.decay_period = p;
            }
            cfg.adam.validate()?;
            let first = resolve_seed(seed)?;
            let agg: Aggregate = run_many(&cfg, first, runs)?;
            println!("{}", Aggregate::header());
            println!("{}", agg.row());
            if let Some(path) = out {
                write_json(&path, &agg)?;
            }
            Ok(())
        }
        Command::Synth {
            dx,
            dh,
            dy,
            m,
            placement,
            residual,
            seed,
            params_out,
            data_out,
        } => {
            let seed = resolve_seed(seed)?;
            let spec = ConstructionSpec::single(Dims::new(dx, dh, dy), m, placement.into(), residual);
            let c = construct_boundary_fosp(&spec, seed).map_err(|e| Failure::Input(e.to_string()))?;
            write_params(&params_out, &c.params)?;
            write_dataset(&data_out, &c.data)?;
            Ok(())
        }
        Command::Selftest { full } => {
            let budget = if full { Budget::full() } else { Budget::quick() };
            let reports = run_all(&budget);
            for r in &reports {
                println!("{}", r.line());
            }
            if reports.iter().all(|r| r.passed) {
                Ok(())
            } else {
                Err(Failure::Internal("self-test failed".into()))
            }
        }
    }
}
