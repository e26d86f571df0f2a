//! Command-line front end. `main` in the binary only forwards here.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::experiments::{
    run_custom, run_preset, CustomRun, ExperimentPreset, Method, PresetName, RunReport,
    DEFAULT_SEED,
};
use crate::problem::InitScheme;
use crate::solvers::EpochSchedule;
use crate::trace::TraceFormat;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_GENERATION: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "quadinv",
    version,
    about = "Iterative matrix inversion experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a named experiment and write one trace per arm.
    Preset(PresetArgs),
    /// Run one solver on a generated problem.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    #[arg(value_enum)]
    pub name: PresetName,
    /// Dimension override.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, env = "QUADINV_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value = "csv")]
    pub format: TraceFormat,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Root degree for `--method root` (default 2).
    #[arg(long)]
    pub d: Option<u32>,
    #[arg(long, env = "QUADINV_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// zero | scaled-inverse:<c> | scaled-identity:<c> | poly:<c0>,<c1>,...
    #[arg(long)]
    pub init: Option<InitScheme>,
    /// cyclic | iid (adaptive-sgd only).
    #[arg(long)]
    pub schedule: Option<EpochSchedule>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Comma-separated polynomial coefficients c0,c1,...
    #[arg(long, value_parser = parse_coeffs_arg)]
    pub coeffs: Option<CoeffList>,
    #[arg(long)]
    pub switch_loss: Option<f64>,
    #[arg(long, default_value_t = 1e-24)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: u64,
    #[arg(long)]
    pub max_epochs: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub record_every: u64,
    #[arg(long)]
    pub condition_cap: Option<f64>,
    /// Trace file; defaults to `<method>.<format>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv | json; defaults to the `--out` extension, else csv.
    #[arg(long)]
    pub format: Option<TraceFormat>,
}

/// Named so that clap parses `--coeffs 0,1` as one value, not a list.
pub type CoeffList = Vec<f64>;

fn parse_coeffs_arg(s: &str) -> Result<CoeffList, Error> {
    crate::problem::parse_coeffs(s)
}

impl RunArgs {
    pub fn into_run(self) -> CustomRun {
        let format = self.format.unwrap_or_else(|| {
            match self
                .out
                .as_ref()
                .and_then(|p| p.extension())
                .and_then(|e| e.to_str())
            {
                Some("json") => TraceFormat::Json,
                _ => TraceFormat::Csv,
            }
        });
        let out = self
            .out
            .unwrap_or_else(|| PathBuf::from(format!("{}.{}", self.method, format.extension())));
        CustomRun {
            method: self.method,
            n: self.n,
            d: self.d,
            seed: self.seed,
            init: self.init,
            schedule: self.schedule,
            eta: self.eta,
            coeffs: self.coeffs,
            switch_loss: self.switch_loss,
            tol: self.tol,
            max_iters: self.max_iters,
            max_epochs: self.max_epochs,
            record_every: self.record_every,
            condition_cap: self.condition_cap,
            out,
            format,
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => EXIT_USAGE,
        Error::NonFinite { .. } | Error::CommutatorDrift { .. } => EXIT_DIVERGED,
        Error::Io(_) | Error::TraceFormat(_) => EXIT_IO,
        Error::GenerationFailed { .. } => EXIT_GENERATION,
        _ => EXIT_INTERNAL,
    }
}

fn report_exit(report: &RunReport) -> i32 {
    if report.any_diverged() {
        EXIT_DIVERGED
    } else {
        EXIT_OK
    }
}

/// Parses `args` (including the program name), runs and returns the exit
/// status. The summary goes to `out`, errors to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_USAGE;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    let result = match cli.command {
        Command::Preset(a) => run_preset(&ExperimentPreset {
            name: a.name,
            n: a.n,
            seed: a.seed,
            output_dir: a.out,
            format: a.format,
        }),
        Command::Run(a) => run_custom(&a.into_run()),
    };
    match result {
        Ok(report) => {
            let _ = write!(out, "{}", report.summary_table());
            report_exit(&report)
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
