//! Command-line front end: `generate`, `train`, `infer`, `eval` and
//! `export-viz`.

mod commands;
mod report;
pub mod viz;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::error::Error;
use crate::io::{load_config, RunConfig};

pub use commands::{cmd_eval, cmd_export_viz, cmd_generate, cmd_infer, cmd_train};
pub use report::{digest_bytes, OutputFile, RunReport, REPORT_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "pointpose",
    version,
    about = "6-DoF object pose estimation from point clouds"
)]
pub struct Cli {
    /// TOML run configuration; absent keys take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `seed` and `train.seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for scene-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a labeled synthetic dataset.
    Generate(GenerateArgs),
    /// Train the keypoint network on a dataset.
    Train(TrainArgs),
    /// Predict poses for dataset scenes.
    Infer(InferArgs),
    /// Score pose records against dataset ground truth.
    Eval(EvalArgs),
    /// Write colored clouds and box line sets for one scene.
    ExportViz(ExportVizArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Number of scenes; overrides `generate.scenes`.
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Built-in model names or OBJ/PLY mesh paths; overrides `generate.objects`.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub objects: Vec<String>,
    /// Objects per scene; overrides `layout.objects`.
    #[arg(long)]
    pub per_scene: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Full-loss epochs; overrides `train.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Segmentation-only epochs; overrides `train.pretrain_epochs`.
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long, value_name = "CKPT")]
    pub resume: Option<PathBuf>,
    /// Train on these scene ids only.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub scenes: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
#[group(skip)]
pub struct PredictorArgs {
    #[arg(long, value_name = "CKPT", conflicts_with = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Use ground-truth predictions instead of a network.
    #[arg(long)]
    pub oracle: bool,
    /// Oracle offset noise standard deviation in meters; 0 when absent.
    #[arg(long, allow_negative_numbers = true)]
    pub noise: Option<f64>,
    /// Skip ICP refinement.
    #[arg(long)]
    pub no_refine: bool,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    /// Scene ids to process; all scenes when absent.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub scenes: Vec<usize>,
    /// Also write per-keypoint predicted classes as colored PLY clouds.
    #[arg(long)]
    pub dump_seg: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub poses: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Diameter fraction for a correct pose; overrides `eval.threshold_fraction`.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Also report recall over `eval.sweep_fractions`.
    #[arg(long)]
    pub sweep: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ExportVizArgs {
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,
    #[arg(long)]
    pub scene: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    /// Draw boxes from these pose records instead of the decoded estimates.
    #[arg(long, value_name = "FILE")]
    pub poses: Option<PathBuf>,
}

impl PredictorArgs {
    pub fn check(&self) -> Result<(), CliError> {
        if self.checkpoint.is_none() && !self.oracle {
            return Err(CliError::Usage("one of --checkpoint or --oracle is required".into()));
        }
        if self.noise.is_some() && !self.oracle {
            return Err(CliError::Usage("--noise applies only with --oracle".into()));
        }
        if let Some(noise) = self.noise.filter(|n| !(*n >= 0.0 && n.is_finite())) {
            return Err(CliError::Usage(format!(
                "--noise must be a finite non-negative value, got {noise}"
            )));
        }
        Ok(())
    }
}

/// A failed invocation: bad usage or a library error.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &CliError) -> i32 {
    match e {
        CliError::Usage(_) => EXIT_USAGE,
        CliError::Run(Error::Numerical(_) | Error::Alignment(_) | Error::PoseSolve(_)) => EXIT_NUMERICAL,
        CliError::Run(_) => EXIT_DATA,
    }
}

/// Effective configuration: file (or defaults) with flag overrides applied.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?.config,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Runs a parsed command on a pool of `cli.jobs` threads.
pub fn execute(cli: &Cli) -> Result<RunReport, CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let cfg = resolve_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", cli.jobs)))?;
    let mut report = pool.install(|| match &cli.command {
        Command::Generate(a) => cmd_generate(&cfg, a),
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Infer(a) => cmd_infer(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::ExportViz(a) => cmd_export_viz(&cfg, a),
    })?;
    report.jobs = cli.jobs;
    report.write()?;
    Ok(report)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are printed to stderr.
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
    init_logging(cli.verbose);
    match execute(&cli) {
        Ok(report) => {
            println!("{}", report.summary());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
