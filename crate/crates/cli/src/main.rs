//! `flatcluster` command-line tool.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "flatcluster", version, about = "Hybrid linear modeling with local best-fit flats")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "FLATCLUSTER_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic union of noisy flats.
    Synth(SynthArgs),
    /// Cluster a points file.
    Cluster(ClusterArgs),
    /// Misclassification percentage of predicted labels against truth.
    Evaluate(EvaluateArgs),
    /// Estimate the number of flats from the W_K elbow.
    EstimateK(EstimateKArgs),
    /// Inlier threshold: mean RMS error of the local best-fit flats.
    Noise(NoiseArgs),
    /// Monte-Carlo check of the scale-selection guarantee on a tube mixture.
    VerifyTheorem(TheoremArgs),
    /// Mean error and time over seeded synthetic trials, as CSV.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Case name `<d>x<K>in<D>`, e.g. 2x2in4.
    #[arg(long, default_value = "2x2in4")]
    pub case: String,
    #[arg(long, default_value_t = 250)]
    pub per_flat: usize,
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Outliers as a fraction of all points.
    #[arg(long, default_value_t = 0.0)]
    pub outliers: f64,
    /// Flats with random offsets instead of through the origin.
    #[arg(long)]
    pub affine: bool,
    /// Smallest principal angle between flats, in radians.
    #[arg(long)]
    pub min_angle: Option<f64>,
    #[arg(long, value_enum, default_value_t = SupportArg::Ball)]
    pub support: SupportArg,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportArg {
    Ball,
    Cube,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Points CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Truth labels to write (-1 marks outliers).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Write an `x1,...,xD` header line.
    #[arg(long)]
    pub header: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Lbf,
    LbfMs,
    Slbf,
    SlbfMs,
    Kflats,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyArg {
    L1,
    Median,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitArg {
    Adaptive,
    Fixed,
    Random,
}

/// Parameters shared by the algorithms; unset values take the library
/// defaults.
#[derive(Args, Debug, Clone)]
pub struct AlgoArgs {
    /// Dimension of the flats.
    #[arg(long)]
    pub d: usize,
    /// First neighborhood size S.
    #[arg(long)]
    pub start_size: Option<usize>,
    /// Neighborhood increment T.
    #[arg(long)]
    pub step_size: Option<usize>,
    /// Largest neighborhood examined.
    #[arg(long)]
    pub max_neighbors: Option<usize>,
    /// LBF candidate count C.
    #[arg(long)]
    pub candidates: Option<usize>,
    /// LBF replacement passes p.
    #[arg(long)]
    pub passes: Option<usize>,
    #[arg(long, value_enum, default_value_t = EnergyArg::L1)]
    pub energy: EnergyArg,
    /// SLBF bandwidth multipliers.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// K-means restarts inside SLBF.
    #[arg(long, default_value_t = 10)]
    pub kmeans_restarts: usize,
    /// K-flats initialization.
    #[arg(long, value_enum, default_value_t = InitArg::Adaptive)]
    pub init: InitArg,
    /// Neighborhood size for `--init fixed`.
    #[arg(long, default_value_t = 20)]
    pub init_size: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// K-flats restarts.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    /// Points CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub algo: Algo,
    /// Number of flats.
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub params: AlgoArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Predicted labels to write.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Predicted labels.
    #[arg(long)]
    pub pred: PathBuf,
    /// Truth labels (-1 marks outliers, which are ignored).
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Args, Debug)]
pub struct EstimateKArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Algo::Lbf)]
    pub algo: Algo,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 10)]
    pub kmax: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct NoiseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub start_size: Option<usize>,
    #[arg(long)]
    pub step_size: Option<usize>,
    /// Let the first scale count as a local minimum.
    #[arg(long)]
    pub multiscale: bool,
}

#[derive(Args, Debug)]
pub struct TheoremArgs {
    /// Ambient dimension D.
    #[arg(long, default_value_t = 2)]
    pub ambient: usize,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Number of flats; flat j spans the axes j*d, ..., j*d + d - 1 (mod D).
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Lines only: put the second line at this angle (degrees) to the first
    /// in the first coordinate plane.
    #[arg(long)]
    pub angle: Option<f64>,
    /// Tube width w.
    #[arg(long, default_value_t = 0.02)]
    pub width: f64,
    /// Query point; defaults to 2 e1.
    #[arg(long, value_delimiter = ',')]
    pub x_star: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    /// Grid points per unit of r / r0.
    #[arg(long, default_value_t = flatcluster::theorem::DEFAULT_GRID_DENSITY)]
    pub grid_density: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the `r,beta2,std` profile here.
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Case names, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2x2in4")]
    pub cases: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "lbf,slbf")]
    pub algos: Vec<Algo>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[command(flatten)]
    pub data: DataArgs,
    /// Seed of the first trial; trial i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV destination (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Algorithm(e.to_string()))?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::EstimateK(a) => commands::estimate_k(a),
        Command::Noise(a) => commands::noise(a),
        Command::VerifyTheorem(a) => commands::verify_theorem(a),
        Command::Bench(a) => commands::bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
