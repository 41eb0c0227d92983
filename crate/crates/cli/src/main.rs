mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tride::init::InitMethod;
use tride::tride::{SweepConfig, WeightMode};

#[derive(Parser)]
#[command(name = "tride", version, about = "Triangle-consistent translation-direction refinement")]
struct Cli {
    /// Worker threads (0 picks the number of cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene file.
    Gen(GenArgs),
    /// Initialize and refine the directions of a scene.
    Run(RunArgs),
    /// Exact-recovery sweep over graph size and weak-edge rate.
    Phase(PhaseArgs),
    /// Compare weighting variants on one scene.
    Ablate(AblateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Complete,
    Er,
    Rgg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    None,
    Tride,
    Gn,
    Lm,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum InitArg {
    Pca,
    Fms,
    Random,
}

impl From<InitArg> for InitMethod {
    fn from(a: InitArg) -> Self {
        match a {
            InitArg::Pca => InitMethod::Pca,
            InitArg::Fms => InitMethod::Fms,
            InitArg::Random => InitMethod::Random,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Dynamic,
    Static,
    Uniform,
    PointOnly,
}

impl From<ModeArg> for WeightMode {
    fn from(a: ModeArg) -> Self {
        match a {
            ModeArg::Dynamic => WeightMode::Dynamic,
            ModeArg::Static => WeightMode::Static,
            ModeArg::Uniform => WeightMode::Uniform,
            ModeArg::PointOnly => WeightMode::PointOnly,
        }
    }
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub n: usize,
    /// Edge probability (er only).
    #[arg(long)]
    pub p: Option<f64>,
    /// Connection radius (rgg only).
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, default_value_t = 80)]
    pub matches: usize,
    #[arg(long, default_value_t = 1.0)]
    pub inlier_frac: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_deg: f64,
    /// Fraction of edges to corrupt.
    #[arg(long, default_value_t = 0.0)]
    pub corrupt_q: f64,
    /// Fraction of matches replaced on a corrupted edge.
    #[arg(long, default_value_t = 0.8)]
    pub corrupt_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct SweepArgs {
    #[arg(long, value_enum, default_value = "dynamic")]
    pub mode: ModeArg,
    /// Point-support scale in degrees.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 15.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 25)]
    pub ncand: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub amin: f64,
    #[arg(long, default_value_t = 4)]
    pub kmax: usize,
    /// Stopping threshold on the median change, in degrees.
    #[arg(long, default_value_t = 1e-3)]
    pub taustop: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SweepArgs {
    pub fn config(&self) -> SweepConfig {
        SweepConfig {
            sigma_deg: self.sigma,
            n_cand: self.ncand,
            beta: self.beta,
            a_min: self.amin,
            k_max: self.kmax,
            tau_stop_deg: self.taustop,
            mode: self.mode.into(),
            seed: self.seed,
        }
    }
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, value_enum, default_value = "pca")]
    pub init: InitArg,
    #[arg(long, value_enum, default_value = "tride")]
    pub method: MethodArg,
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Iterations for gn (default 5) and lm (default 10).
    #[arg(long)]
    pub iters: Option<usize>,
    /// Gn regularization of the constraint block.
    #[arg(long, default_value_t = 1e-8)]
    pub rho: f64,
    /// Report file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-edge CSV dump.
    #[arg(long)]
    pub edges_csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct PhaseArgs {
    #[arg(long, value_enum, default_value = "complete")]
    pub model: ModelArg,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    /// Comma-separated camera counts.
    #[arg(long)]
    pub n_grid: String,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long)]
    pub q_grid: String,
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    /// Sweeps per instance (0 evaluates the initialization).
    #[arg(long, default_value_t = 1)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_deg: f64,
    #[arg(long, default_value_t = 100)]
    pub matches: usize,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, value_enum, default_value = "pca")]
    pub init: InitArg,
    #[arg(long, default_value = "input,point-only,uniform,static,dynamic")]
    pub variants: String,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Run(a) => commands::run(a),
        Command::Phase(a) => commands::phase(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
