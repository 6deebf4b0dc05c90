//! `vasq`: command-line front end for the vessel analysis engine.

mod commands;
mod error;
mod manifest;
mod util;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use vasq_core::volume::VesselClass;

use error::{CliError, CliResult, EXIT_OK, EXIT_VALIDATION};
use util::{parse_f32_pair, parse_f64_triple, parse_usize_triple, OutType};

#[derive(Parser, Debug)]
#[command(name = "vasq", version, about = "Pulmonary artery and vein analysis on CT volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a synthetic vessel phantom, or a planted cohort table.
    Phantom(PhantomArgs),
    /// Resample a CT into the 512^3 standardized space.
    Normalize(NormalizeArgs),
    /// Multiscale Hessian vesselness.
    Enhance(EnhanceArgs),
    /// Simulate Poisson transmission noise at a given photon count.
    Noise(NoiseArgs),
    /// Four-stage artery/vein segmentation.
    Segment(SegmentArgs),
    /// Thin one vessel class and build its tree.
    Skeleton(SkeletonArgs),
    /// Score a segmentation against ground truth.
    Evaluate(EvaluateArgs),
    /// Summaries, regressions and sex comparisons over a cohort table.
    CohortStats(CohortStatsArgs),
}

#[derive(Args, Debug)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
pub struct PhantomArgs {
    #[command(subcommand)]
    pub sub: Option<PhantomSub>,
    /// Bifurcation levels per class.
    #[arg(long)]
    pub generations: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Voxel size in mm, `x,y,z`.
    #[arg(long, value_parser = parse_f64_triple)]
    pub spacing: Option<[f64; 3]>,
    /// Relative jitter of branch lengths and angles.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Number of vessel-bright clutter tubes.
    #[arg(long)]
    pub clutter: Option<usize>,
    /// TOML phantom specification; the flags above override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Non-contrast appearance (vessels at blood HU).
    #[arg(long)]
    pub ncct: bool,
    /// Output directory.
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum PhantomSub {
    /// Cohort table drawn from a planted linear model.
    Cohort(CohortArgs),
}

#[derive(Args, Debug)]
pub struct CohortArgs {
    /// Number of subjects.
    #[arg(long)]
    pub n: usize,
    /// JSON cohort model (coefficients per index); defaults when absent.
    #[arg(long)]
    pub betas: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct NormalizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fill value outside the input (HU).
    #[arg(long, default_value_t = vasq_core::volume::AIR_HU, allow_hyphen_values = true)]
    pub air: f32,
    #[arg(long = "type", value_enum, default_value_t = OutType::Float)]
    pub ty: OutType,
}

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Gaussian scales in mm.
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Structureness scale, or `auto` to derive it from the data.
    #[arg(long, default_value = "auto")]
    pub c: String,
    /// HU window mapped to [0, 1] before filtering, `lo,hi`.
    #[arg(long, value_parser = parse_f32_pair, allow_hyphen_values = true)]
    pub window: Option<[f32; 2]>,
    /// The input is already windowed to [0, 1].
    #[arg(long, conflicts_with = "window")]
    pub no_window: bool,
}

#[derive(Args, Debug)]
pub struct NoiseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Incident photons per ray.
    #[arg(long)]
    pub n0: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long = "type", value_enum, default_value_t = OutType::Float)]
    pub ty: OutType,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Classical,
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    /// CT in HU.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Backend::Classical)]
    pub backend: Backend,
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON cardinal seeds `{"artery": [x,y,z], "vein": [x,y,z]}`.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    /// Artery and vein probability maps.
    #[arg(long, num_args = 2, value_names = ["PROB_A", "PROB_V"], required = true)]
    pub out: Vec<PathBuf>,
    /// Hard labels thresholded from the final maps.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Directory for per-stage maps and summaries.
    #[arg(long)]
    pub audit: Option<PathBuf>,
    /// Precomputed vesselness of the windowed CT.
    #[arg(long)]
    pub vesselness: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClassArg {
    Artery,
    Vein,
}

impl From<ClassArg> for VesselClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Artery => VesselClass::Artery,
            ClassArg::Vein => VesselClass::Vein,
        }
    }
}

#[derive(Args, Debug)]
pub struct SkeletonArgs {
    /// Label mask.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub class: ClassArg,
    /// Skeleton mask.
    #[arg(long)]
    pub out: PathBuf,
    /// Tree JSON.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Root voxel `x,y,z`; defaults to the first skeleton endpoint.
    #[arg(long, value_parser = parse_usize_triple)]
    pub root: Option<[usize; 3]>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long, required_unless_present = "cases", conflicts_with = "cases")]
    pub pred: Option<PathBuf>,
    #[arg(long, required_unless_present = "cases")]
    pub truth: Option<PathBuf>,
    /// Level codes: 0 background, 1 + level for vessel voxels.
    #[arg(long, required_unless_present = "cases")]
    pub levels: Option<PathBuf>,
    /// Artery and vein probability maps for the losses.
    #[arg(long, num_args = 2, value_names = ["PROB_A", "PROB_V"])]
    pub prob: Option<Vec<PathBuf>>,
    /// Directory of case folders holding pred.mhd, truth.mhd, levels.mhd
    /// and optionally prob_a.mhd and prob_v.mhd.
    #[arg(long, conflicts_with_all = ["truth", "levels", "prob"])]
    pub cases: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
    /// Skip the skeleton length and bifurcation ratios.
    #[arg(long)]
    pub no_abundance: bool,
}

#[derive(Args, Debug)]
pub struct CohortStatsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for CSV tables.
    #[arg(long)]
    pub plots: Option<PathBuf>,
    /// Age bin width in years.
    #[arg(long, default_value_t = 10.0)]
    pub age_bin: f64,
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("VASQ_THREADS") else { return Ok(()) };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::invalid(format!("VASQ_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(CliError::runtime)
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Phantom(a) => commands::phantom::run(a),
        Command::Normalize(a) => commands::image::normalize(a),
        Command::Enhance(a) => commands::image::enhance(a),
        Command::Noise(a) => commands::image::noise(a),
        Command::Segment(a) => commands::segment::run(a),
        Command::Skeleton(a) => commands::skeleton::run(a),
        Command::Evaluate(a) => commands::evaluate::run(a),
        Command::CohortStats(a) => commands::cohort::run(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = configure_threads().and_then(|()| dispatch(cli.command));
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
