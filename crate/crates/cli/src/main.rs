//! `rkct`: simulate, assemble, reconstruct, benchmark and verify.

mod bench;
mod commands;
mod output;
mod values;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rkct::data::GridKind;

#[derive(Parser, Debug)]
#[command(
    name = "rkct",
    version,
    about = "Kernel reconstruction for parallel-beam CT"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rasterize a phantom to PGM + CSV.
    Phantom(PhantomArgs),
    /// Simulate a noisy sinogram.
    Sinogram(SinogramArgs),
    /// Assemble a Gram matrix and write it to a cache file.
    Gram(GramArgs),
    /// Reconstruct an image from a sinogram.
    #[command(subcommand)]
    Reconstruct(Reconstruct),
    /// Monte-Carlo RMSE sweep of KR against FBP.
    Benchmark(BenchmarkArgs),
    /// Run the numerical self-checks.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    /// `πi/N` on the half circle.
    Equi,
    /// `2πi/N` on the full circle (circulant layout).
    Full,
    /// Sorted uniform draws on `[0, π]`.
    Random,
    /// Mixture of random and equiangular, set by `--lambda`.
    Lambda,
}

impl GridArg {
    pub fn kind(self) -> GridKind {
        match self {
            GridArg::Equi => GridKind::EquiangularHalf,
            GridArg::Full => GridKind::EquiangularFull,
            GridArg::Random => GridKind::Random,
            GridArg::Lambda => GridKind::LambdaMix,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Units {
    /// Pixel sums of an M-wide image (line integrals times M/2).
    Pixel,
    /// Line integrals over the unit disk.
    Unit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Dense,
    Circulant,
}

#[derive(Args, Debug)]
pub struct PhantomArgs {
    /// Raster side length.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    /// Ellipse table to use instead of the built-in modified Shepp-Logan phantom.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// `img.pgm[,img.csv]`.
    #[arg(long)]
    pub out: String,
}

#[derive(Args, Debug, Clone)]
pub struct GridOpts {
    /// Number of viewing angles.
    #[arg(long)]
    pub n: usize,
    /// Number of detector points.
    #[arg(long)]
    pub m: usize,
    #[arg(long, value_enum, default_value_t = GridArg::Random)]
    pub grid: GridArg,
    /// Angle regularity for `--grid lambda`, in [0, 1].
    #[arg(long, value_parser = values::parse_number)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SinogramArgs {
    #[command(flatten)]
    pub grid: GridOpts,
    /// Noise standard deviation, in the units chosen by `--units`.
    #[arg(long, value_parser = values::parse_number, default_value = "0")]
    pub sigma: f64,
    #[arg(long, value_enum, default_value_t = Units::Pixel)]
    pub units: Units,
    /// Ellipse table to use instead of the built-in phantom.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GramArgs {
    #[arg(long, value_parser = values::parse_number)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value_t = LayoutArg::Dense)]
    pub layout: LayoutArg,
    /// Take the grid and mesh from this sinogram.
    #[arg(long, conflicts_with_all = ["n", "m", "grid", "lambda", "seed"])]
    pub sino: Option<PathBuf>,
    #[arg(long, required_unless_present = "sino")]
    pub n: Option<usize>,
    #[arg(long, required_unless_present = "sino")]
    pub m: Option<usize>,
    /// Defaults to `full` for the circulant layout and `random` otherwise.
    #[arg(long, value_enum)]
    pub grid: Option<GridArg>,
    #[arg(long, value_parser = values::parse_number)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also factor `W + νI` and store it (circulant layout only).
    #[arg(long, value_parser = values::parse_number)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Reconstruct {
    /// Tikhonov kernel reconstruction.
    Kr(KrArgs),
    /// Filtered backprojection.
    Fbp(FbpArgs),
}

#[derive(Args, Debug)]
pub struct KrArgs {
    /// Kernel sharpness; optional when `--gram` is given.
    #[arg(long, value_parser = values::parse_number)]
    pub gamma: Option<f64>,
    /// Tikhonov regularization.
    #[arg(long, value_parser = values::parse_number)]
    pub nu: f64,
    /// Use the block-circulant FFT solver (full-circle equiangular grids).
    #[arg(long)]
    pub circulant: bool,
    /// Precomputed Gram cache.
    #[arg(long)]
    pub gram: Option<PathBuf>,
    #[arg(long)]
    pub sino: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub size: usize,
    /// Reference image CSV for the printed RMSE. Defaults to the built-in
    /// phantom when the sinogram was simulated from it.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// `rec.pgm[,rec.csv]`.
    #[arg(long)]
    pub out: String,
}

#[derive(Args, Debug)]
pub struct FbpArgs {
    #[arg(long)]
    pub sino: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub size: usize,
    /// Zero-padding factor for the ramp filter FFT.
    #[arg(long, default_value_t = 2)]
    pub padding: usize,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: String,
}

/// List flags are spelled with the full `Vec` path so clap parses each
/// one as a single value.
#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    /// Monte-Carlo repetitions per (σ, λ) cell.
    #[arg(long, default_value_t = 21)]
    pub mc: usize,
    #[arg(long, value_parser = values::parse_list, default_value = "0,20,50,100")]
    pub sigmas: ::std::vec::Vec<f64>,
    #[arg(long, value_parser = values::parse_list, default_value = "0,0.333,0.667,1")]
    pub lambdas: ::std::vec::Vec<f64>,
    #[arg(long, value_parser = values::parse_list, default_value = "2^5..2^15")]
    pub gammas: ::std::vec::Vec<f64>,
    #[arg(long, value_parser = values::parse_list, default_value = "2^-20..2^-5")]
    pub nus: ::std::vec::Vec<f64>,
    #[arg(long, default_value_t = 40)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    /// Raster side used for the RMSE.
    #[arg(long, default_value_t = 100)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Run the smaller, faster suite.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Reason for a nonzero exit.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Verify(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Verify(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<rkct::Error> for Failure {
    fn from(e: rkct::Error) -> Self {
        Failure::Data(e.into())
    }
}

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Phantom(a) => commands::phantom(&a),
        Command::Sinogram(a) => commands::sinogram(&a),
        Command::Gram(a) => commands::gram(&a),
        Command::Reconstruct(Reconstruct::Kr(a)) => commands::reconstruct_kr(&a),
        Command::Reconstruct(Reconstruct::Fbp(a)) => commands::reconstruct_fbp(&a),
        Command::Benchmark(a) => bench::benchmark(&a),
        Command::Verify(a) => commands::verify(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Data(e) => eprintln!("error: {e:#}"),
                Failure::Verify(m) => eprintln!("verification failed: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
