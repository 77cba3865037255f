//! `surropt`: encode, solve and analyze optimization problems over trained networks.

mod analyze;
mod encode;
mod generate;
mod problem;
mod report;
mod solve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use surropt::encode::{BoundMethod, Formulation};

#[derive(Parser, Debug)]
#[command(name = "surropt", version, about = "Optimization over trained ReLU and swish network surrogates")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Print a single JSON object instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads for bound tightening.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Seed for random networks, samples and starting points.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a model from a problem spec and report its size.
    Encode(EncodeArgs),
    /// Solve a problem spec or an LP file.
    Solve(SolveArgs),
    /// Region, general-position and stationarity analysis.
    Analyze(AnalyzeArgs),
    /// Write a random network (and optionally sampled data).
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormulationArg {
    Mip,
    Mpcc,
}

impl From<FormulationArg> for Formulation {
    fn from(f: FormulationArg) -> Self {
        match f {
            FormulationArg::Mip => Formulation::Mip,
            FormulationArg::Mpcc => Formulation::Mpcc,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TightenArg {
    Interval,
    Lp,
    Mip,
}

impl From<TightenArg> for BoundMethod {
    fn from(t: TightenArg) -> Self {
        match t {
            TightenArg::Interval => BoundMethod::Interval,
            TightenArg::Lp => BoundMethod::LpRelax,
            TightenArg::Mip => BoundMethod::ExactMip,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Problem spec JSON (or, for `solve`, an LP file).
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "mip")]
    pub formulation: FormulationArg,
    /// Big-M bound computation.
    #[arg(long, value_enum, default_value = "lp")]
    pub tighten: TightenArg,
    /// Training CSV whose input columns define a convex hull the inputs must stay in.
    #[arg(long, value_name = "CSV")]
    pub hull: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Write the model as LP text; bounds are cached next to it.
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Allow LP export of complementarity pairs as comments.
    #[arg(long)]
    pub allow_lossy: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Milp,
    MpccLocal,
    Embedded,
    Oracle,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "milp")]
    pub solver: SolverArg,
    /// `auto` for the problem's own heuristic, otherwise a JSON file with a `point`.
    #[arg(long, value_name = "auto|FILE")]
    pub warmstart: Option<String>,
    /// Per-iteration trace CSV (embedded solver).
    #[arg(long, value_name = "CSV")]
    pub trace: Option<PathBuf>,
    /// Write the solution as JSON.
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub node_limit: Option<usize>,
    /// Seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Iteration budget of the embedded solver.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Convergence tolerance of the embedded solver.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Start the embedded or local solver from a random point in the box (uses --seed).
    #[arg(long)]
    pub random_start: bool,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("mode").required(true)
    .args(["regions", "general_position", "stationarity", "zaslavsky"])))]
pub struct AnalyzeArgs {
    /// Network JSON (for --regions, --general-position) or surrogate spec (for --stationarity).
    pub input: Option<PathBuf>,
    /// Enumerate nonempty activation regions.
    #[arg(long)]
    pub regions: bool,
    /// Check general position at the point in this JSON file.
    #[arg(long, value_name = "POINT")]
    pub general_position: Option<PathBuf>,
    /// Check stationarity of the solution in this JSON file.
    #[arg(long, value_name = "POINT")]
    pub stationarity: Option<PathBuf>,
    /// Number of regions of m hyperplanes in general position in R^d.
    #[arg(long, num_args = 2, value_names = ["M", "D"])]
    pub zaslavsky: Option<Vec<u32>>,
    /// Strict inequalities are enforced with this slack.
    #[arg(long, default_value_t = surropt::regions::DEFAULT_SLACK)]
    pub slack: f64,
    /// Refuse to enumerate more neurons than this.
    #[arg(long, default_value_t = 20)]
    pub max_neurons: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Relu,
    Swish,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 2)]
    pub inputs: usize,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub outputs: usize,
    #[arg(long, value_enum, default_value = "relu")]
    pub activation: ActivationArg,
    #[arg(long, default_value_t = surropt::Activation::DEFAULT_SWISH_BETA)]
    pub beta: f64,
    #[arg(short, long, value_name = "FILE")]
    pub output: PathBuf,
    /// Also write this many forward-pass samples from [-1, 1]^n as CSV.
    #[arg(long, requires = "data")]
    pub samples: Option<usize>,
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SURROPT_LOG", "warn")).init();
    let cli = Cli::parse();
    let g = &cli.global;
    let outcome = match &cli.command {
        Command::Encode(a) => encode::run(g, a),
        Command::Solve(a) => solve::run(g, a),
        Command::Analyze(a) => analyze::run(g, a),
        Command::Generate(a) => generate::run(g, a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            if g.json {
                println!("{}", serde_json::json!({ "error": format!("{e:#}") }));
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
