//! The `spkg` command.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spkg_core::rna::Probe;

mod local;
mod remote;

pub use local::{score_table, ScoreRow};

#[derive(Debug, Parser)]
#[command(
    name = "spkg",
    version,
    about = "Sparse knowledge-gradient design of RNA probe experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation study and write trajectories.csv and aggregate.csv.
    Simulate(SimulateArgs),
    /// Build a prior bundle from a footprinting profile CSV.
    FitPrior(FitPriorArgs),
    /// Serve the campaign advisor HTTP API.
    Serve(ServeArgs),
    /// Score every probe of a library under a belief bundle.
    Score(ScoreArgs),
    /// List the mutagenesis neighbors of a probe.
    Mutate(MutateArgs),
    /// Talk to a running advisor service.
    #[command(subcommand)]
    Session(SessionCommand),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment config JSON.
    pub config: PathBuf,
    /// Overrides the config's trial count.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: logical cores). Results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitPriorArgs {
    /// CSV with columns `position,value`.
    pub profile: PathBuf,
    /// Weight of the footprinting evidence in the inclusion priors.
    #[arg(long, default_value_t = 10.0)]
    pub w: f64,
    /// Relative prior standard deviation.
    #[arg(long, default_value_t = spkg_core::prior::DEFAULT_NOISE_RATIO)]
    pub r: f64,
    #[arg(long, default_value_t = spkg_core::prior::DEFAULT_MAX_LAG)]
    pub max_lag: usize,
    /// Use this decay rate instead of fitting one.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Measurement budget used to cap the inclusion counts.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Molecule position of the profile's first row.
    #[arg(long, default_value_t = 1)]
    pub first_position: usize,
    /// Restrict the profile to molecule positions `START,END` before fitting.
    #[arg(long, value_parser = parse_range)]
    pub window: Option<(usize, usize)>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "SPKG_ADDR")]
    pub addr: Option<String>,
    #[arg(long, env = "SPKG_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// JSON with optional `addr` and `data_dir`; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ScorePolicy {
    Spkg,
    KgLinear,
    BatchSpkg,
}

/// Molecule and probe library shared by several commands.
#[derive(Debug, Args)]
pub struct TargetArgs {
    /// FASTA file; the bundled synthetic target when omitted.
    #[arg(long)]
    pub molecule: Option<PathBuf>,
    /// Restrict the molecule to positions `START,END`.
    #[arg(long, value_parser = parse_range)]
    pub window: Option<(usize, usize)>,
}

#[derive(Debug, Args)]
pub struct LibraryArgs {
    /// Probe library CSV with columns `name,start,end`.
    #[arg(long, conflicts_with_all = ["uniform", "mixed_tiling"])]
    pub library: Option<PathBuf>,
    /// Uniform tiling `LENGTH,OVERLAP`.
    #[arg(long, value_parser = parse_range)]
    pub uniform: Option<(usize, usize)>,
    /// Mixed 8/12/16-mer tilings plus expert probes over `START,END`.
    #[arg(long, value_parser = parse_range, conflicts_with = "uniform")]
    pub mixed_tiling: Option<(usize, usize)>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Prior bundle or belief snapshot JSON.
    pub belief: PathBuf,
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub library: LibraryArgs,
    #[arg(long, value_enum, default_value = "spkg")]
    pub policy: ScorePolicy,
    /// Batch size.
    #[arg(long = "B", default_value_t = 3)]
    pub batch_size: usize,
    /// Monte Carlo samples per batch candidate.
    #[arg(long = "Q", default_value_t = 1000)]
    pub mc_samples: usize,
    /// Sparsity patterns.
    #[arg(long = "L", default_value_t = 20)]
    pub max_patterns: usize,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct MutateArgs {
    /// Probe as `START,END`.
    pub probe: String,
    /// Molecule length; positions are `1..=p`.
    #[arg(short, long, conflicts_with = "molecule")]
    pub p: Option<usize>,
    #[command(flatten)]
    pub target: TargetArgs,
}

#[derive(Debug, Args)]
pub struct ServerArg {
    #[arg(long, env = "SPKG_SERVER", default_value = "http://127.0.0.1:8080")]
    pub server: String,
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Start a campaign.
    Create(CreateArgs),
    /// List sessions.
    List(ServerArg),
    /// Session summary.
    Show(IdArgs),
    /// Next probe or batch.
    Suggest(SuggestArgs),
    /// Record a measurement.
    Observe(ObserveArgs),
    /// Current belief and per-probe predictions.
    Posterior(IdArgs),
    /// Recorded suggestions and observations.
    History(IdArgs),
    /// Rebuild the belief from the history and compare.
    Replay(IdArgs),
}

#[derive(Debug, Args)]
pub struct IdArgs {
    pub id: String,
    #[command(flatten)]
    pub server: ServerArg,
}

#[derive(Debug, Args)]
pub struct CreateArgs {
    /// Prior bundle JSON matching the (windowed) molecule.
    #[arg(long)]
    pub prior: PathBuf,
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub library: LibraryArgs,
    #[arg(long)]
    pub noise_sd: f64,
    #[arg(long = "B", default_value_t = 3)]
    pub batch_size: usize,
    #[arg(long = "L", default_value_t = 20)]
    pub max_patterns: usize,
    #[arg(long = "Q", default_value_t = spkg_core::kg::DEFAULT_MC_SAMPLES)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = spkg_core::lasso::DEFAULT_LAMBDA_SCALE)]
    pub lambda_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Conjugate linear updates instead of the sparse Lasso path.
    #[arg(long)]
    pub linear: bool,
    /// Stacking-energy CSV replacing the bundled table.
    #[arg(long)]
    pub energy_table: Option<PathBuf>,
    #[command(flatten)]
    pub server: ServerArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModeArg {
    Single,
    Batch,
    BatchMutagenesis,
}

#[derive(Debug, Args)]
pub struct SuggestArgs {
    pub id: String,
    #[arg(long, value_enum, default_value = "batch")]
    pub mode: ModeArg,
    #[arg(long)]
    pub version: Option<u64>,
    #[command(flatten)]
    pub server: ServerArg,
}

#[derive(Debug, Args)]
pub struct ObserveArgs {
    pub id: String,
    /// Probe as `START,END`.
    #[arg(long)]
    pub probe: String,
    #[arg(long, allow_hyphen_values = true)]
    pub value: f64,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Session version the observation is based on.
    #[arg(long)]
    pub version: u64,
    #[command(flatten)]
    pub server: ServerArg,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `A,B`, got {s:?}"))?;
    let p = |x: &str| {
        x.trim()
            .parse::<usize>()
            .map_err(|_| format!("not a nonnegative integer: {x:?}"))
    };
    Ok((p(a)?, p(b)?))
}

pub(crate) fn parse_probe(s: &str) -> Result<Probe, CliError> {
    s.parse::<Probe>()
        .map_err(|e| CliError::Usage(format!("probe {s:?}: {e}")))
}

/// Failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files: exit 2.
    Usage(String),
    /// Everything else: exit 1.
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

pub(crate) fn usage(context: impl std::fmt::Display) -> impl FnOnce(spkg_core::Error) -> CliError {
    move |e| CliError::Usage(format!("{context}: {e}"))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => local::simulate(a),
        Command::FitPrior(a) => local::fit_prior(a),
        Command::Score(a) => local::score(a),
        Command::Mutate(a) => local::mutate(a),
        Command::Serve(a) => remote::serve(a),
        Command::Session(c) => remote::session(c),
    }
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .try_init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
