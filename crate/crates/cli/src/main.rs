mod commands;
mod settings;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Joint illumination and material estimation from linked sphere images.
#[derive(Debug, Parser)]
#[command(name = "matillum", version)]
pub struct Cli {
    /// TOML file with defaults for any flag (same key names).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset of spheres.
    Synth(SynthArgs),
    /// Train one surrogate network on oracle samples.
    TrainSurrogate(TrainArgs),
    /// Estimate illuminations and materials from a dataset.
    Fit(FitArgs),
    /// Render a pair or an illumination from an estimate.
    Render(RenderArgs),
    /// Score an estimate against ground truth.
    Eval(EvalArgs),
    /// Run one of the synthetic studies.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file with `[[material]]` entries.
    #[arg(long)]
    pub materials: PathBuf,
    /// Directory of lat-long PFM maps, or a TOML file with `[[illumination]]` entries.
    #[arg(long)]
    pub envmaps: PathBuf,
    /// `full`, `star`, `diagonal`, rows like `110/011/101`, or a file holding one of these.
    #[arg(long)]
    pub mask: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Lobes fitted to each environment map.
    #[arg(long)]
    pub envmap_lobes: Option<usize>,
    /// Store gamma-encoded radiance with this exponent.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Quadrature nodes, `THETAxPHI`.
    #[arg(long)]
    pub quadrature: Option<String>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Diffuse,
    Specular,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs trained on the log-ratio loss before switching to relative error.
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub held_out: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct SurrogateArgs {
    /// Diffuse network weights (defaults to the bundled network).
    #[arg(long = "surrogate-d")]
    pub diffuse: Option<PathBuf>,
    /// Specular network weights (defaults to the bundled network).
    #[arg(long = "surrogate-s")]
    pub specular: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SolverArgs {
    #[arg(long)]
    pub lobes: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Passes over the observations.
    #[arg(long)]
    pub epochs: Option<f64>,
    /// L-BFGS iterations per batch.
    #[arg(long)]
    pub inner_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub surrogate: SurrogateArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub estimate: PathBuf,
    /// `MATERIAL,ILLUMINATION`.
    #[arg(long, conflicts_with = "envmap", required_unless_present = "envmap")]
    pub pair: Option<String>,
    /// Illumination index to unroll into a lat-long map.
    #[arg(long)]
    pub envmap: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Camera rotation `YAW[,PITCH]` in degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub view: Option<String>,
    /// `WIDTHxHEIGHT`.
    #[arg(long)]
    pub size: Option<String>,
    #[arg(long)]
    pub quadrature: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub estimate: PathBuf,
    /// Dataset directory or truth file.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Extra evaluation views as comma-separated yaw angles in degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub novel_yaws: Option<String>,
    #[arg(long)]
    pub quadrature: Option<String>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Study {
    MatrixSize,
    Structure,
    NormalNoise,
    LeaveOneOut,
    Progressive,
    PriorSweep,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub study: Study,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of seeds, starting at 0.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub novel_yaws: Option<String>,
    #[arg(long)]
    pub quadrature: Option<String>,
    #[command(flatten)]
    pub surrogate: SurrogateArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<matillum::Error> for CliError {
    fn from(e: matillum::Error) -> Self {
        use matillum::Error as E;
        let code = match &e {
            E::InvalidArgument(_) => 1,
            E::Io { .. }
            | E::MalformedHeader(_)
            | E::ShortRead { .. }
            | E::UnsupportedByteOrder
            | E::Parse(_)
            | E::DimensionMismatch(_) => 2,
            E::NonFinite(_) | E::NoObservations | E::BackFacing | E::Diverged(_) | E::Numerical(_) => 3,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format(|buf, record| writeln!(buf, "# {} {}", record.level(), record.args()))
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.quiet);
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
