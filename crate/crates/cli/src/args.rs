use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sakura_core::BoundaryPolicy;

#[derive(Parser, Debug)]
#[command(name = "sakura", version, about = "Kuramoto drift accelerator model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate the drift field of a phase map.
    Drift(DriftCmd),
    /// Run the cycle-level array simulator over a phase map.
    Simulate(SimulateCmd),
    /// Evaluate the analytical model over a configuration grid.
    Sweep(SweepCmd),
    /// Run a forward or reverse diffusion trajectory.
    Sample(SampleCmd),
    /// Run the verification suite.
    Selftest(SelftestCmd),
    /// Write the quarter-wave sine table as CSV.
    Lut(LutCmd),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Oracle,
    Fixed,
    Systolic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FieldFormat {
    Kdf1,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DriftChoice {
    Kuramoto,
    Trivial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    Stripes,
    Random,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Forward,
    Reverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    TileCycles,
}

fn parse_boundary(s: &str) -> Result<BoundaryPolicy, String> {
    s.parse().map_err(|e: sakura_core::Error| e.to_string())
}

#[derive(Args, Debug, Clone)]
pub struct KernelArgs {
    /// Local coupling strength K.
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    /// Reference gain K_ref.
    #[arg(long = "k-ref", default_value_t = 0.0)]
    pub k_ref: f64,
    /// Reference phase in radians.
    #[arg(long = "psi-ref", default_value_t = 0.0, allow_hyphen_values = true)]
    pub psi_ref: f64,
    /// Neighbourhood side (odd).
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    #[arg(long, default_value = "replicate", value_parser = parse_boundary)]
    pub boundary: BoundaryPolicy,
}

#[derive(Args, Debug, Clone)]
pub struct ArrayArgs {
    #[arg(long, default_value_t = 20)]
    pub nh: usize,
    #[arg(long, default_value_t = 5)]
    pub nw: usize,
    #[arg(long = "fclk-hz", default_value_t = 1.0e8)]
    pub fclk_hz: f64,
}

#[derive(Args, Debug)]
pub struct DriftCmd {
    /// Phase map (KPM1 or 16-bit PGM).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "fixed")]
    pub engine: Engine,
    #[arg(long, value_enum, default_value = "kdf1")]
    pub format: FieldFormat,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub array: ArrayArgs,
}

#[derive(Args, Debug)]
pub struct SimulateCmd {
    #[arg(long)]
    pub input: PathBuf,
    /// Drift field output (KDF1).
    #[arg(long)]
    pub output: PathBuf,
    /// Per-tile cycle CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Per-cycle event log.
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub array: ArrayArgs,
}

#[derive(Args, Debug)]
pub struct SweepCmd {
    /// Sweep CSV output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Coefficient file (`key = value`); defaults to the synthetic set.
    #[arg(long, conflicts_with = "measurements")]
    pub coeffs: Option<PathBuf>,
    /// Measurement CSV to fit the coefficients from.
    #[arg(long)]
    pub measurements: Option<PathBuf>,
    /// Print the fit report.
    #[arg(long, requires = "measurements")]
    pub fit: bool,
    /// Array heights to sweep.
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25")]
    pub nh: Vec<usize>,
    /// Array widths to sweep.
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25")]
    pub nw: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    #[arg(long = "fclk-hz", default_value_t = 1.0e8)]
    pub fclk_hz: f64,
    /// Area budgets in µm².
    #[arg(long, value_delimiter = ',')]
    pub budgets: Vec<f64>,
    /// Pixels per frame for the system-level overlay.
    #[arg(long, default_value_t = 96 * 96)]
    pub pixels: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct SampleCmd {
    /// Initial map; omit to use `--generator`.
    #[arg(long, conflicts_with = "generator")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub generator: Option<Generator>,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    #[arg(long, default_value_t = 96)]
    pub height: usize,
    /// Stripe period in pixels.
    #[arg(long, default_value_t = 8)]
    pub period: usize,
    /// Stripe phases are ±amplitude radians.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    pub amplitude: f64,
    /// Seed of the random generator.
    #[arg(long = "map-seed", default_value_t = 0)]
    pub map_seed: u64,
    /// Schedule file (`key = value`).
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the schedule's step count.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Overrides the schedule's step size.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_enum, default_value = "forward")]
    pub direction: DirectionArg,
    #[arg(long, value_enum, default_value = "oracle")]
    pub engine: Engine,
    #[arg(long, value_enum, default_value = "kuramoto")]
    pub drift: DriftChoice,
    /// Fixed β for the trivial drift; default 2·D(t).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value = "replicate", value_parser = parse_boundary)]
    pub boundary: BoundaryPolicy,
    #[arg(long, default_value_t = 20)]
    pub nh: usize,
    #[arg(long, default_value_t = 5)]
    pub nw: usize,
    /// Write every n-th snapshot (the final one is always written).
    #[arg(long = "snapshot-every", default_value_t = 1)]
    pub snapshot_every: usize,
    /// Snapshot directory.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SelftestCmd {
    #[arg(long = "inject-fault", value_enum, hide = true)]
    pub inject_fault: Option<FaultArg>,
}

#[derive(Args, Debug)]
pub struct LutCmd {
    #[arg(long)]
    pub output: PathBuf,
}
